"""End-to-end stages shared by the CLI and the toy trainer: bin -> frame ->
wrist ROI -> crop + offsets + auxiliary statistics."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .config import PipelineConfig
from .events import EventBin, HandParams, synth_hand_events
from .geomstats import GeoStats7, aux_labels
from .representation import Frame, compress_channels, gaussian_blur, lnes_fast
from .roi import RoiBox, build_roi, crop, fallback_roi, locate_wrist


@dataclass
class FrameRecord:
    """Everything derived from one bin."""

    index: int
    frame: Frame  # blurred full frame
    box: RoiBox
    found: bool
    roi_frame: Frame
    offsets: tuple
    stats: GeoStats7
    contributing: int


def process_bin(index: int, bin: EventBin, cfg: PipelineConfig) -> FrameRecord:
    compressed = compress_channels(bin)
    frame, count = lnes_fast(compressed, cfg.repr)
    blurred = gaussian_blur(frame, cfg.repr.kernel, cfg.repr.sigma)
    wrist = locate_wrist(blurred, cfg.roi.tau, cfg.roi.n_thr)
    if wrist is None:
        box = fallback_roi(cfg.roi.height, cfg.roi.width, bin.geometry)
    else:
        box = build_roi(wrist, cfg.roi.height, cfg.roi.width, bin.geometry)
    roi_frame, offsets = crop(blurred, box)
    stats = aux_labels(bin, box)
    return FrameRecord(
        index=index,
        frame=blurred,
        box=box,
        found=wrist is not None,
        roi_frame=roi_frame,
        offsets=offsets,
        stats=stats,
        contributing=count,
    )


def process_bins(bins, cfg: PipelineConfig, threads: int = 1):
    """Process bins in index order; with threads > 1, per-bin work runs in
    a pool but results are still yielded in order."""
    indexed = enumerate(bins)
    if threads <= 1:
        for i, b in indexed:
            yield process_bin(i, b, cfg)
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        yield from pool.map(lambda ib: process_bin(ib[0], ib[1], cfg), indexed)


def normalized_offsets(offsets, geometry):
    return (offsets[0] / geometry.width, offsets[1] / geometry.height)


def _toy_pose_target(params: HandParams) -> np.ndarray:
    """Deterministic 12-dim target tied to silhouette parameters.

    Translation encodes the wrist position and scale (the quantities the
    offsets and statistics expose most directly); the articulation and
    rotation slots are smooth functions of the remaining shape parameters.
    """
    g = params.geometry
    cx = params.center_x / g.width - 0.5
    cy = params.wrist_row / g.height - 0.5
    scale = params.wrist_half_width / 40.0
    mano = np.array(
        [
            params.palm_half_width / g.width,
            params.palm_height / g.height,
            params.wrist_half_width / g.width,
            params.arm_taper,
            0.5 * cx,
            0.5 * cy,
        ]
    )
    trans = np.array([cx, cy, scale])
    rot = np.array([params.drift_x / 20.0, cx * cy, scale - 0.3])
    return np.concatenate([mano, trans, rot])


def make_toy_dataset(cfg: PipelineConfig, n: int, seed: int):
    """Synthetic (inputs, offsets, pose targets, aux targets) arrays.

    Each sample is a randomized hand silhouette pushed through the real
    pipeline; aux targets come from the actual ROI statistics.
    """
    rng = np.random.default_rng(seed)
    g = cfg.geometry
    xs = np.empty((n, 1, cfg.net.input_h, cfg.net.input_w), dtype=np.float32)
    offs = np.empty((n, 2), dtype=np.float32)
    pose_t = np.empty((n, 12), dtype=np.float32)
    aux_t = np.empty((n, 7), dtype=np.float32)
    for i in range(n):
        params = HandParams(
            geometry=g,
            wrist_row=int(rng.integers(int(g.height * 0.45), int(g.height * 0.85))),
            center_x=int(rng.integers(int(g.width * 0.3), int(g.width * 0.7))),
            wrist_half_width=int(rng.integers(9, 16)),
            palm_half_width=int(rng.integers(26, 40)),
            palm_height=int(rng.integers(50, 80)),
            arm_taper=float(rng.uniform(0.08, 0.2)),
            drift_x=float(rng.uniform(-6, 6)),
            count=int(rng.integers(2500, 5000)),
        )
        bin, _ = synth_hand_events(params, seed=int(rng.integers(0, 2**31)))
        rec = process_bin(i, bin, cfg)
        xs[i, 0] = rec.roi_frame.values
        offs[i] = normalized_offsets(rec.offsets, g)
        pose_t[i] = _toy_pose_target(params)
        aux_t[i] = rec.stats.as_array()
    return xs, offs, pose_t, aux_t


def train_toy(cfg: PipelineConfig, log_fn=None):
    """Seed-fixed toy training run; returns (per-step loss dicts, weights)."""
    from .nn.network import init_weights
    from .nn.training import AdamState, train_step

    tp = cfg.train
    data = make_toy_dataset(cfg, tp.samples, seed=cfg.seed)
    xs, offs, pose_t, aux_t = data
    weights = init_weights(cfg.net, seed=cfg.seed)
    state = AdamState()
    rng = np.random.default_rng(cfg.seed + 1)
    log = []
    for step in range(1, tp.steps + 1):
        idx = rng.integers(0, xs.shape[0], size=tp.batch)
        batch = (xs[idx], offs[idx], pose_t[idx], aux_t[idx])
        losses = train_step(
            batch, weights, state, tp.lr, cfg.net, cfg.loss, with_aux=tp.with_aux
        )
        losses["step"] = step
        log.append(losses)
        if log_fn is not None:
            log_fn(losses)
    return log, weights
