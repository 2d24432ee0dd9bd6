"""Pipeline configuration and its flat key-value text format.

The file format is `section.key = value` lines with `#` comments; tuples
are comma-separated. Every run parameter, including the RNG seed, lives
here so a config plus a seed pins an entire run.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

from .errors import DataError, ParameterError
from .events import BinSpec, SensorGeometry
from .losses import LossWeights
from .nn.network import NetConfig
from .representation import ReprSpec


@dataclass(frozen=True)
class RoiParams:
    height: int = 160
    width: int = 160
    tau: float = 0.30
    n_thr: int = 3


@dataclass(frozen=True)
class MetricParams:
    tau_max: float = 1.0
    steps: int = 100


@dataclass(frozen=True)
class TrainParams:
    steps: int = 300
    batch: int = 32
    lr: float = 1e-4
    samples: int = 200
    with_aux: bool = True


@dataclass(frozen=True)
class PipelineConfig:
    geometry: SensorGeometry = SensorGeometry()
    binning: BinSpec = BinSpec()
    repr: ReprSpec = ReprSpec()
    roi: RoiParams = RoiParams()
    net: NetConfig = NetConfig()
    loss: LossWeights = LossWeights()
    metrics: MetricParams = MetricParams()
    train: TrainParams = TrainParams()
    seed: int = 42


def toy_pipeline_config() -> PipelineConfig:
    """Desk-scale preset: small ROI and network for the toy trainer."""
    from .nn.network import toy_config

    return PipelineConfig(
        repr=ReprSpec(theta=5000, kernel=3, sigma=1.0),
        roi=RoiParams(height=48, width=48),
        net=toy_config(),
    )


_SCHEMA = {
    "geometry.width": ("geometry", "width", int),
    "geometry.height": ("geometry", "height", int),
    "bin.window_us": ("binning", "window_us", int),
    "bin.stride_us": ("binning", "stride_us", int),
    "repr.window_us": ("repr", "window_us", int),
    "repr.theta": ("repr", "theta", "optional_int"),
    "repr.kernel": ("repr", "kernel", int),
    "repr.sigma": ("repr", "sigma", float),
    "roi.height": ("roi", "height", int),
    "roi.width": ("roi", "width", int),
    "roi.tau": ("roi", "tau", float),
    "roi.n_thr": ("roi", "n_thr", int),
    "net.input_h": ("net", "input_h", int),
    "net.input_w": ("net", "input_w", int),
    "net.stem_channels": ("net", "stem_channels", "int_tuple"),
    "net.stage_channels": ("net", "stage_channels", "int_tuple"),
    "net.attn_dims": ("net", "attn_dims", "int_tuple"),
    "net.expansion": ("net", "expansion", int),
    "net.fc_dim": ("net", "fc_dim", int),
    "net.taylor_order": ("net", "taylor_order", int),
    "loss.w_mano": ("loss", "w_mano", float),
    "loss.w_trans": ("loss", "w_trans", float),
    "loss.w_rot": ("loss", "w_rot", float),
    "loss.w_aux": ("loss", "w_aux", float),
    "metrics.tau_max": ("metrics", "tau_max", float),
    "metrics.steps": ("metrics", "steps", int),
    "train.steps": ("train", "steps", int),
    "train.batch": ("train", "batch", int),
    "train.lr": ("train", "lr", float),
    "train.samples": ("train", "samples", int),
    "train.with_aux": ("train", "with_aux", bool),
    "seed": (None, "seed", int),
}


def _format(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if value is None:
        return "none"
    return str(value)


def _parse_value(text, kind, key, line_no):
    try:
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
        if kind is bool:
            if text.lower() in ("true", "1", "yes"):
                return True
            if text.lower() in ("false", "0", "no"):
                return False
            raise ValueError(text)
        if kind == "optional_int":
            return None if text.lower() == "none" else int(text)
        if kind == "int_tuple":
            return tuple(int(v) for v in text.split(","))
    except ValueError:
        raise DataError(f"bad value {text!r} for {key}", line_no) from None
    raise AssertionError(kind)


def config_to_text(cfg: PipelineConfig) -> str:
    lines = ["# evtrack pipeline configuration"]
    for key, (section, attr, _) in _SCHEMA.items():
        obj = cfg if section is None else getattr(cfg, section)
        lines.append(f"{key} = {_format(getattr(obj, attr))}")
    return "\n".join(lines) + "\n"


def config_from_text(text: str) -> PipelineConfig:
    raw: dict[str, object] = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DataError(f"expected 'key = value', got {line!r}", line_no)
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _SCHEMA:
            raise DataError(f"unknown config key {key!r}", line_no)
        raw[key] = _parse_value(value, _SCHEMA[key][2], key, line_no)

    sections: dict[str, dict] = {}
    top: dict[str, object] = {}
    for key, value in raw.items():
        section, attr, _ = _SCHEMA[key]
        if section is None:
            top[attr] = value
        else:
            sections.setdefault(section, {})[attr] = value

    defaults = PipelineConfig()
    builders = {
        "geometry": SensorGeometry,
        "binning": BinSpec,
        "repr": ReprSpec,
        "roi": RoiParams,
        "net": NetConfig,
        "loss": LossWeights,
        "metrics": MetricParams,
        "train": TrainParams,
    }
    kwargs: dict[str, object] = dict(top)
    for name, cls in builders.items():
        merged = {
            f.name: getattr(getattr(defaults, name), f.name) for f in fields(cls)
        }
        merged.update(sections.get(name, {}))
        try:
            kwargs[name] = cls(**merged)
        except (ParameterError, ValueError) as exc:
            raise DataError(f"invalid {name} section: {exc}") from exc
    return PipelineConfig(**kwargs)


def load_config(path) -> PipelineConfig:
    with open(path) as fh:
        return config_from_text(fh.read())
