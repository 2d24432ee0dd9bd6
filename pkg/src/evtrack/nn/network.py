"""Lightweight multi-task network: stem, auxiliary head, attention-based
main head with ROI-offset injection, plus weight container I/O and
analytic FLOP accounting.

The main output is 12-dimensional (6 hand-articulation PCA components,
3 translation, 3 rotation); the auxiliary head predicts the 7 geometric
statistics and can be skipped at inference without touching the main path.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from ..errors import ParameterError, WeightError
from ..events import SensorGeometry
from ..geomstats import GeoStats7
from ..representation import Frame
from . import autograd as ag
from .autograd import Tensor

MAGIC = b"EVHW1"
MAIN_DIM = 12
AUX_DIM = 7


@dataclass(frozen=True)
class NetConfig:
    """Channel plan and input size; heads are fixed at 12 (main) / 7 (aux)."""

    input_h: int = 160
    input_w: int = 160
    stem_channels: tuple = (16, 24)
    stage_channels: tuple = (32, 48, 64)
    attn_dims: tuple = (64, 80)
    expansion: int = 2
    fc_dim: int = 64
    taylor_order: int = 2

    def __post_init__(self):
        if len(self.stem_channels) != 2 or len(self.stage_channels) != 3:
            raise ParameterError("expected 2 stem and 3 stage channel widths")
        if len(self.attn_dims) != 2:
            raise ParameterError("expected one attention dim per block")
        if self.taylor_order < 2 or self.taylor_order % 2:
            raise ParameterError("taylor order must be even and >= 2")

    @property
    def heads(self):
        return {"main": MAIN_DIM, "aux": AUX_DIM}


def toy_config() -> NetConfig:
    """Small plan used by the toy trainer and the full-network gradcheck."""
    return NetConfig(
        input_h=48,
        input_w=48,
        stem_channels=(8, 12),
        stage_channels=(16, 24, 32),
        attn_dims=(32, 40),
        fc_dim=32,
    )


@dataclass
class PoseOutput:
    """Fixed-order 12-vector: articulation PCA, translation, rotation."""

    mano_pca: np.ndarray
    trans: np.ndarray
    rot: np.ndarray

    @classmethod
    def from_array(cls, a) -> "PoseOutput":
        a = np.asarray(a, dtype=np.float64).reshape(MAIN_DIM)
        return cls(a[0:6].copy(), a[6:9].copy(), a[9:12].copy())

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.mano_pca, self.trans, self.rot])


def _ir_shapes(prefix, c_in, c_out, expansion):
    e = expansion * c_in
    return [
        (f"{prefix}.expand.w", (e, c_in, 1, 1), "conv"),
        (f"{prefix}.expand.b", (e,), "zeros"),
        (f"{prefix}.dw.w", (e, 1, 3, 3), "dw"),
        (f"{prefix}.dw.b", (e,), "zeros"),
        (f"{prefix}.project.w", (c_out, e, 1, 1), "conv"),
        (f"{prefix}.project.b", (c_out,), "zeros"),
    ]


def _block_shapes(prefix, c, d):
    f = 2 * d
    return [
        (f"{prefix}.local_dw.w", (c, 1, 3, 3), "dw"),
        (f"{prefix}.local_dw.b", (c,), "zeros"),
        (f"{prefix}.local_pw.w", (d, c, 1, 1), "conv"),
        (f"{prefix}.local_pw.b", (d,), "zeros"),
        (f"{prefix}.attn.score.w", (d, 1), "linear"),
        (f"{prefix}.attn.key.w", (d, d), "linear"),
        (f"{prefix}.attn.value.w", (d, d), "linear"),
        (f"{prefix}.attn.out.w", (d, d), "linear"),
        (f"{prefix}.ffn.fc1.w", (d, f), "linear"),
        (f"{prefix}.ffn.fc1.b", (f,), "zeros"),
        (f"{prefix}.ffn.fc2.w", (f, d), "linear"),
        (f"{prefix}.ffn.fc2.b", (d,), "zeros"),
        (f"{prefix}.proj.w", (c, d, 1, 1), "conv"),
        (f"{prefix}.proj.b", (c,), "zeros"),
    ]


def shape_plan(config: NetConfig):
    """Ordered (name, shape, init kind) for every tensor in the network."""
    s0, s1 = config.stem_channels
    c2, c3, c4 = config.stage_channels
    d1, d2 = config.attn_dims
    e = config.expansion
    plan = [
        ("stem.conv1.w", (s0, 1, 3, 3), "conv"),
        ("stem.conv1.b", (s0,), "zeros"),
        ("stem.conv2.w", (s1, s0, 3, 3), "conv"),
        ("stem.conv2.b", (s1,), "zeros"),
    ]
    plan += _ir_shapes("stem.ir1", s1, s1, e)
    plan += _ir_shapes("stem.ir2", s1, c2, e)
    plan += _ir_shapes("aux.ir", c2, c2, e)
    plan += [
        ("aux.fc.w", (c2, AUX_DIM), "linear"),
        ("aux.fc.b", (AUX_DIM,), "zeros"),
    ]
    plan += _ir_shapes("main.ir1", c2, c3, e)
    plan += _block_shapes("main.block1", c3, d1)
    plan += _ir_shapes("main.ir2", c3, c4, e)
    plan += _block_shapes("main.block2", c4, d2)
    plan += [
        ("main.fc1.w", (c4, config.fc_dim), "linear"),
        ("main.fc1.b", (config.fc_dim,), "zeros"),
        ("main.fc2.w", (config.fc_dim + 2, MAIN_DIM), "linear"),
        ("main.fc2.b", (MAIN_DIM,), "zeros"),
    ]
    return plan


class Weights:
    """Ordered name -> Tensor map with the EVHW1 container format."""

    def __init__(self, tensors=None):
        self.tensors: dict[str, Tensor] = dict(tensors or {})

    def __getitem__(self, name) -> Tensor:
        try:
            return self.tensors[name]
        except KeyError:
            raise WeightError(f"missing weight tensor {name!r}") from None

    def __contains__(self, name):
        return name in self.tensors

    def names(self):
        return list(self.tensors)

    def astype(self, dtype) -> "Weights":
        out = {}
        for name, t in self.tensors.items():
            nt = Tensor(t.data.astype(dtype), requires_grad=t.requires_grad)
            out[name] = nt
        return Weights(out)

    def zero_grads(self):
        for t in self.tensors.values():
            t.grad = None

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<I", len(self.tensors)))
            for name, t in self.tensors.items():
                raw = name.encode("utf-8")
                fh.write(struct.pack("<I", len(raw)))
                fh.write(raw)
                fh.write(struct.pack("<I", t.data.ndim))
                fh.write(struct.pack(f"<{t.data.ndim}I", *t.data.shape))
            for t in self.tensors.values():
                fh.write(np.ascontiguousarray(t.data, dtype="<f4").tobytes())

    @classmethod
    def load(cls, path, config: NetConfig | None = None, trainable=False) -> "Weights":
        """Read a container; with a config, validate names and shapes."""
        with open(path, "rb") as fh:
            data = fh.read()
        if data[:5] != MAGIC:
            raise WeightError(f"bad magic {data[:5]!r}, expected {MAGIC!r}")
        off = 5
        (count,) = struct.unpack_from("<I", data, off)
        off += 4
        manifest = []
        for _ in range(count):
            (nlen,) = struct.unpack_from("<I", data, off)
            off += 4
            name = data[off : off + nlen].decode("utf-8")
            off += nlen
            (rank,) = struct.unpack_from("<I", data, off)
            off += 4
            shape = struct.unpack_from(f"<{rank}I", data, off)
            off += 4 * rank
            manifest.append((name, shape))
        tensors = {}
        for name, shape in manifest:
            n = int(np.prod(shape, dtype=np.int64)) if shape else 1
            end = off + 4 * n
            if end > len(data):
                raise WeightError(f"payload truncated at tensor {name!r}")
            arr = np.frombuffer(data, dtype="<f4", count=n, offset=off).reshape(shape)
            tensors[name] = Tensor(arr.copy(), requires_grad=trainable)
            off = end
        w = cls(tensors)
        if config is not None:
            validate_weights(w, config)
        return w


def validate_weights(weights: Weights, config: NetConfig):
    """Check every planned tensor exists with the planned shape."""
    for name, shape, _ in shape_plan(config):
        t = weights[name]
        if tuple(t.data.shape) != tuple(shape):
            raise WeightError(
                f"tensor {name!r} has shape {tuple(t.data.shape)}, expected {tuple(shape)}"
            )


def init_weights(config: NetConfig, seed: int = 0, dtype=np.float32) -> Weights:
    """He-style init for convolutions, uniform-variance for linears."""
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape, kind in shape_plan(config):
        if kind == "zeros":
            data = np.zeros(shape)
        elif kind == "conv":
            fan_in = int(np.prod(shape[1:]))
            data = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)
        elif kind == "dw":
            fan_in = int(np.prod(shape[2:]))
            data = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)
        else:  # linear
            fan_in = shape[0]
            data = rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=shape)
        tensors[name] = Tensor(data.astype(dtype), requires_grad=True)
    return Weights(tensors)


def inverted_residual(x, block, stride=1):
    """expand 1x1 -> ReLU -> depthwise 3x3 -> ReLU -> project 1x1, with a
    shortcut when the shape is preserved. `block` maps expand/dw/project
    to their tensors."""
    h = ag.relu(ag.conv2d(x, block["expand.w"], block["expand.b"]))
    h = ag.relu(
        ag.depthwise_conv2d(h, block["dw.w"], block["dw.b"], stride=stride, padding=1)
    )
    h = ag.conv2d(h, block["project.w"], block["project.b"])
    x_t = ag.as_tensor(x)
    if stride == 1 and h.shape == x_t.shape:
        h = ag.add(h, x_t)
    return h


def separable_linear_attention(tokens, attn, order=2):
    """Linear-time attention: a scalar context score per token weights the
    key projections into one context vector, which gates the values.

    `tokens` is (..., T, d); `attn` maps score/key/value/out to weights.
    """
    scores = ag.matmul(tokens, attn["score.w"])
    cs = ag.taylor_softmax(scores, axis=-2, order=order)
    keys = ag.matmul(tokens, attn["key.w"])
    context = ag.tsum(ag.mul(cs, keys), axis=-2, keepdims=True)
    values = ag.relu(ag.matmul(tokens, attn["value.w"]))
    return ag.matmul(ag.mul(values, context), attn["out.w"])


def _sub(weights: Weights, prefix):
    class _View:
        def __getitem__(self, key):
            return weights[f"{prefix}.{key}"]

    return _View()


def mobilevit_block(x, weights: Weights, prefix, order=2):
    """Local depthwise mixing, then token attention plus FFN, then a 1x1
    projection back to the input channel count."""
    w = _sub(weights, prefix)
    h = ag.relu(ag.depthwise_conv2d(x, w["local_dw.w"], w["local_dw.b"], padding=1))
    h = ag.conv2d(h, w["local_pw.w"], w["local_pw.b"])
    n, d, hh, ww = h.shape
    tokens = ag.transpose(ag.reshape(h, (n, d, hh * ww)), (0, 2, 1))
    tokens = ag.add(
        tokens, separable_linear_attention(tokens, _sub(weights, f"{prefix}.attn"), order)
    )
    f = ag.linear(
        ag.relu(ag.linear(tokens, w["ffn.fc1.w"], w["ffn.fc1.b"])),
        w["ffn.fc2.w"],
        w["ffn.fc2.b"],
    )
    tokens = ag.add(tokens, f)
    h = ag.reshape(ag.transpose(tokens, (0, 2, 1)), (n, d, hh, ww))
    return ag.conv2d(h, w["proj.w"], w["proj.b"])


def forward_batch(x, offsets, weights: Weights, config: NetConfig, with_aux=False):
    """Batched forward. x is (N, 1, H, W); offsets are already normalized
    to [0, 1] by the full-frame dimensions. Returns (main, aux) tensors;
    aux is None unless requested, and the main path never reads it."""
    x = ag.as_tensor(x)
    n, c, h, w = x.shape
    if c != 1 or (h, w) != (config.input_h, config.input_w):
        raise ParameterError(
            f"input {x.shape} does not match configured {config.input_h}x{config.input_w}"
        )
    offsets = ag.as_tensor(np.asarray(offsets).reshape(n, 2).astype(x.dtype))

    h1 = ag.relu(
        ag.conv2d(x, weights["stem.conv1.w"], weights["stem.conv1.b"], stride=2, padding=1)
    )
    h1 = ag.relu(
        ag.conv2d(h1, weights["stem.conv2.w"], weights["stem.conv2.b"], stride=2, padding=1)
    )
    h1 = inverted_residual(h1, _sub(weights, "stem.ir1"), stride=1)
    h1 = inverted_residual(h1, _sub(weights, "stem.ir2"), stride=2)

    aux = None
    if with_aux:
        a = inverted_residual(h1, _sub(weights, "aux.ir"), stride=1)
        a = ag.global_avg_pool(a)
        aux = ag.linear(a, weights["aux.fc.w"], weights["aux.fc.b"])

    m = inverted_residual(h1, _sub(weights, "main.ir1"), stride=2)
    m = mobilevit_block(m, weights, "main.block1", config.taylor_order)
    m = inverted_residual(m, _sub(weights, "main.ir2"), stride=2)
    m = mobilevit_block(m, weights, "main.block2", config.taylor_order)
    m = ag.global_avg_pool(m)
    m = ag.relu(ag.linear(m, weights["main.fc1.w"], weights["main.fc1.b"]))
    m = ag.concat([m, offsets], axis=1)
    m = ag.linear(m, weights["main.fc2.w"], weights["main.fc2.b"])
    return m, aux


def forward(
    roi_frame: Frame,
    offsets,
    geometry: SensorGeometry,
    weights: Weights,
    config: NetConfig,
    with_aux=False,
):
    """Single-sample inference; offsets are pixel coordinates of the ROI
    top-left corner in the full frame and are normalized here."""
    validate_weights(weights, config)
    x = roi_frame.values[None, None].astype(np.float32)
    off = np.array(
        [offsets[0] / geometry.width, offsets[1] / geometry.height], dtype=np.float32
    )
    with ag.no_grad():
        main, aux = forward_batch(x, off[None], weights, config, with_aux=with_aux)
    pose = PoseOutput.from_array(main.data[0])
    stats = GeoStats7.from_array(aux.data[0]) if aux is not None else None
    return pose, stats


def _conv_out(size, k, s, p):
    return (size + 2 * p - k) // s + 1


def flops_breakdown(config: NetConfig, input_h=None, input_w=None, include_aux=False):
    """Analytic multiply-add counts per layer.

    Convs count k*k*C_in*C_out per output cell (depthwise: k*k*C), linears
    in*out, attention terms linear in the token count. Elementwise ops,
    pooling, and bias adds are excluded.
    """
    h = config.input_h if input_h is None else input_h
    w = config.input_w if input_w is None else input_w
    s0, s1 = config.stem_channels
    c2, c3, c4 = config.stage_channels
    d1, d2 = config.attn_dims
    e = config.expansion
    entries = []

    def conv(name, cin, cout, k, stride, h, w):
        oh, ow = _conv_out(h, k, stride, k // 2), _conv_out(w, k, stride, k // 2)
        entries.append((name, k * k * cin * cout * oh * ow))
        return oh, ow

    def ir(name, cin, cout, stride, h, w):
        ec = e * cin
        oh, ow = _conv_out(h, 3, stride, 1), _conv_out(w, 3, stride, 1)
        macs = cin * ec * h * w + 9 * ec * oh * ow + ec * cout * oh * ow
        entries.append((name, macs))
        return oh, ow

    def block(name, c, d, h, w):
        t = h * w
        f = 2 * d
        macs = (
            9 * c * t  # local depthwise 3x3
            + c * d * t  # 1x1 to attention dim
            + t * d  # context scores
            + 2 * t * d * d  # key and value projections
            + t * d  # context gating
            + t * d * d  # output projection
            + 2 * t * d * f  # FFN
            + d * c * t  # 1x1 back to channels
        )
        entries.append((name, macs))

    h, w = conv("stem.conv1", 1, s0, 3, 2, h, w)
    h, w = conv("stem.conv2", s0, s1, 3, 2, h, w)
    h, w = ir("stem.ir1", s1, s1, 1, h, w)
    h, w = ir("stem.ir2", s1, c2, 2, h, w)
    if include_aux:
        ir("aux.ir", c2, c2, 1, h, w)
        entries.append(("aux.fc", c2 * AUX_DIM))
    h, w = ir("main.ir1", c2, c3, 2, h, w)
    block("main.block1", c3, d1, h, w)
    h, w = ir("main.ir2", c3, c4, 2, h, w)
    block("main.block2", c4, d2, h, w)
    entries.append(("main.fc1", c4 * config.fc_dim))
    entries.append(("main.fc2", (config.fc_dim + 2) * MAIN_DIM))
    return entries


def count_flops(config: NetConfig, input_h=None, input_w=None, include_aux=False):
    """Total multiply-add count for one forward pass."""
    return sum(m for _, m in flops_breakdown(config, input_h, input_w, include_aux))
