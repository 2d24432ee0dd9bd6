"""Single-channel event frames: channel compression, LNES-Fast, blurring.

A frame value is the window-normalized age of the newest event at that
pixel: (L - (t0 - t_i)) / L, max-accumulated. LNES-Fast caps the number of
incorporated events, walking the bin newest-first and stopping early.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DataError, ParameterError
from .events import EventBin, SensorGeometry


@dataclass
class Frame:
    """Single-channel image over the sensor grid; values in [0, 1]."""

    values: np.ndarray  # (H, W)
    geometry: SensorGeometry

    def __post_init__(self):
        h, w = self.values.shape
        if (w, h) != (self.geometry.width, self.geometry.height):
            raise ParameterError(
                f"value grid {self.values.shape} does not match geometry {self.geometry}"
            )


@dataclass(frozen=True)
class ReprSpec:
    """Frame construction parameters.

    window_us: normalization window L. theta: event-count limit (None =
    unbounded). kernel/sigma: Gaussian noise filter.
    """

    window_us: int = 100_000
    theta: int | None = 5_000
    kernel: int = 3
    sigma: float = 1.0

    def __post_init__(self):
        if self.window_us <= 0:
            raise ParameterError("window must be positive")
        if self.theta is not None and self.theta < 1:
            raise ParameterError("theta must be >= 1 when bounded")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ParameterError(f"kernel size must be odd, got {self.kernel}")
        if self.sigma <= 0:
            raise ParameterError(f"sigma must be positive, got {self.sigma}")


def compress_channels(bin: EventBin) -> EventBin:
    """Merge both polarities into one channel (every event becomes p=1).

    Multiplicity is preserved; max accumulation downstream keeps a pixel
    hit by both polarities at single-event intensity.
    """
    return EventBin(
        bin.t, bin.x, bin.y, np.ones(len(bin), dtype=np.uint8), bin.t0, bin.geometry
    )


def lnes_fast(bin: EventBin, spec: ReprSpec):
    """Accumulate the bin into a frame, newest events first.

    Returns (Frame, contributing_count). Processing stops once theta events
    have been incorporated or the next event falls outside the window;
    contributing_count <= theta and all values lie in [0, 1].
    """
    g = bin.geometry
    img = np.zeros((g.height, g.width), dtype=np.float64)
    limit = len(bin) if spec.theta is None else spec.theta
    count = kernels.lnes_accumulate(
        bin.t, bin.x, bin.y, bin.t0, spec.window_us, limit, img
    )
    return Frame(img.astype(np.float32), g), int(count)


def gaussian_kernel_1d(k: int, sigma: float) -> np.ndarray:
    """Normalized discrete Gaussian taps (float64, sums to 1)."""
    if k < 1 or k % 2 == 0:
        raise ParameterError(f"kernel size must be odd, got {k}")
    if sigma <= 0:
        raise ParameterError(f"sigma must be positive, got {sigma}")
    r = k // 2
    taps = np.exp(-((np.arange(k) - r) ** 2) / (2.0 * sigma * sigma))
    return taps / taps.sum()


def gaussian_blur(frame: Frame, k: int, sigma: float) -> Frame:
    """Separable Gaussian filter with zero padding at the borders."""
    taps = gaussian_kernel_1d(k, sigma)
    r = k // 2
    v = frame.values.astype(np.float64, copy=False)
    padded = np.pad(v, ((0, 0), (r, r)))
    horiz = np.lib.stride_tricks.sliding_window_view(padded, k, axis=1) @ taps
    padded = np.pad(horiz, ((r, r), (0, 0)))
    out = np.lib.stride_tricks.sliding_window_view(padded, k, axis=0) @ taps
    return Frame(out.astype(frame.values.dtype), frame.geometry)


def frame_to_pgm(frame: Frame) -> bytes:
    """Binary PGM (P5, maxval 255), value = round(255 * v)."""
    g = frame.geometry
    header = f"P5\n{g.width} {g.height}\n255\n".encode("ascii")
    body = np.rint(frame.values * 255.0).clip(0, 255).astype(np.uint8)
    return header + body.tobytes()


def frame_to_raw(frame: Frame) -> bytes:
    """Raw grid: u32-LE width, u32-LE height, then float32-LE row-major."""
    g = frame.geometry
    return struct.pack("<II", g.width, g.height) + frame.values.astype(
        "<f4"
    ).tobytes()


def frame_from_raw(data: bytes) -> Frame:
    if len(data) < 8:
        raise DataError("raw frame shorter than its 8-byte header")
    w, h = struct.unpack_from("<II", data)
    expected = 8 + 4 * w * h
    if len(data) != expected:
        raise DataError(f"raw frame payload is {len(data)} bytes, expected {expected}")
    values = np.frombuffer(data, dtype="<f4", offset=8).reshape(h, w).copy()
    return Frame(values, SensorGeometry(w, h))
