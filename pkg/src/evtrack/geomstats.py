"""Geometric statistics of the event distribution inside an ROI.

Seven normalized quantities over box-local event coordinates: means and
population standard deviations per axis, the two covariance eigenvalues
(closed form for the symmetric 2x2 case), and the major-axis orientation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .events import EventBin
from .roi import RoiBox


@dataclass(frozen=True)
class GeoStats7:
    """Normalized 7-vector: means and stds are divided by (w-1) / (h-1),
    eigenvalues by max(w-1, h-1)^2, the angle by pi (so theta is in [0, 1))."""

    mean_x: float
    mean_y: float
    std_x: float
    std_y: float
    eig_major: float
    eig_minor: float
    theta: float

    def as_array(self) -> np.ndarray:
        return np.array(
            [
                self.mean_x,
                self.mean_y,
                self.std_x,
                self.std_y,
                self.eig_major,
                self.eig_minor,
                self.theta,
            ],
            dtype=np.float64,
        )

    @classmethod
    def from_array(cls, a) -> "GeoStats7":
        a = np.asarray(a, dtype=np.float64).reshape(7)
        return cls(*(float(v) for v in a))


ZERO_STATS = GeoStats7(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)


def aux_labels(bin: EventBin, box: RoiBox) -> GeoStats7:
    """Compute the auxiliary label vector from events falling in the box.

    Uses population (divide-by-N) variance so a single event yields zero
    spread. No events inside the box gives the all-zero vector; an
    isotropic covariance uses the theta = 0 convention.
    """
    inside = (
        (bin.x >= box.x0)
        & (bin.x < box.x0 + box.w)
        & (bin.y >= box.y0)
        & (bin.y < box.y0 + box.h)
    )
    xs = (bin.x[inside] - box.x0).astype(np.float64)
    ys = (bin.y[inside] - box.y0).astype(np.float64)
    if xs.size == 0:
        return ZERO_STATS
    mx, my = float(xs.mean()), float(ys.mean())
    dx, dy = xs - mx, ys - my
    cxx = float((dx * dx).mean())
    cyy = float((dy * dy).mean())
    cxy = float((dx * dy).mean())

    half_trace = 0.5 * (cxx + cyy)
    half_diff = 0.5 * (cxx - cyy)
    radius = math.hypot(half_diff, cxy)
    eig_major = half_trace + radius
    eig_minor = max(half_trace - radius, 0.0)

    if cxy == 0.0 and cxx == cyy:
        angle = 0.0
    else:
        angle = 0.5 * math.atan2(2.0 * cxy, cxx - cyy)
        if angle < 0.0:
            angle += math.pi
        if angle >= math.pi:
            angle -= math.pi

    nx = max(box.w - 1, 1)
    ny = max(box.h - 1, 1)
    ne = float(max(nx, ny)) ** 2
    return GeoStats7(
        mean_x=mx / nx,
        mean_y=my / ny,
        std_x=math.sqrt(cxx) / nx,
        std_y=math.sqrt(cyy) / ny,
        eig_major=eig_major / ne,
        eig_minor=eig_minor / ne,
        theta=angle / math.pi,
    )
