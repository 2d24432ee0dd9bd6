"""Wrist localization and ROI cropping.

The wrist is found as the narrowest active row scanning upward from the
bottom of the frame: widths shrink along the arm, and the first row where
both boundaries move outward again marks the transition into the palm.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .events import SensorGeometry
from .representation import Frame


@dataclass(frozen=True)
class WristLoc:
    """Wrist row plus its left/right active-pixel boundaries."""

    y: int
    x_left: int
    x_right: int


@dataclass(frozen=True)
class RoiBox:
    """Crop rectangle in full-frame coordinates; (x0, y0) is the top-left."""

    x0: int
    y0: int
    w: int
    h: int


def locate_wrist(frame: Frame, tau: float = 0.30, n_thr: int = 3, expand_margin: int = 1):
    """Scan rows bottom-up for the narrowest arm row.

    A pixel is active when its value exceeds tau; a row participates when
    it has at least 2*n_thr active pixels, and its boundaries are the
    n_thr-th active pixel from each side (isolated-noise guard). Starting
    from the state (H-1, 0, W-1), the scan terminates at the first row
    where, after the width has strictly shrunk at least once between
    participating rows, the left boundary moves left while the right moves
    right (by at least expand_margin pixels each; 1 is the plain rule);
    the previous row's state is returned. Returns None when no row
    participates.
    """
    if not 0.0 < tau < 1.0:
        raise ParameterError(f"tau must lie in (0, 1), got {tau}")
    if n_thr < 1:
        raise ParameterError(f"n_thr must be >= 1, got {n_thr}")
    if expand_margin < 1:
        raise ParameterError(f"expand_margin must be >= 1, got {expand_margin}")
    h, w = frame.values.shape
    active = frame.values > tau
    row_counts = active.sum(axis=1)
    if not np.any(row_counts >= 2 * n_thr):
        return None
    prev_y, prev_xl, prev_xr = h - 1, 0, w - 1
    prev_width = None  # sentinel width never counts as an observed decrease
    narrowed = False
    for yy in range(h - 1, -1, -1):
        if row_counts[yy] < 2 * n_thr:
            continue
        cols = np.flatnonzero(active[yy])
        xl = int(cols[n_thr - 1])
        xr = int(cols[cols.size - n_thr])
        if narrowed and xl <= prev_xl - expand_margin and xr >= prev_xr + expand_margin:
            return WristLoc(prev_y, prev_xl, prev_xr)
        if prev_width is not None and xr - xl < prev_width:
            narrowed = True
        prev_y, prev_xl, prev_xr = yy, xl, xr
        prev_width = xr - xl
    return WristLoc(prev_y, prev_xl, prev_xr)


def build_roi(
    wrist: WristLoc, roi_h: int, roi_w: int, geometry: SensorGeometry
) -> RoiBox:
    """ROI box around the wrist: 10 rows kept below it, the rest above.

    Horizontally centered on the wrist midpoint. The box is shifted, never
    shrunk, to stay inside the frame, so the crop shape is constant.
    """
    if roi_h <= 10:
        raise ParameterError(f"roi height must exceed 10, got {roi_h}")
    if roi_w < 2:
        raise ParameterError(f"roi width must be >= 2, got {roi_w}")
    if roi_w > geometry.width or roi_h > geometry.height:
        raise ParameterError(
            f"roi {roi_w}x{roi_h} exceeds frame {geometry.width}x{geometry.height}"
        )
    xc = (wrist.x_left + wrist.x_right) // 2
    x0 = xc - roi_w // 2
    y0 = wrist.y - (roi_h - 10)
    x0 = min(max(x0, 0), geometry.width - roi_w)
    y0 = min(max(y0, 0), geometry.height - roi_h)
    return RoiBox(x0, y0, roi_w, roi_h)


def fallback_roi(roi_h: int, roi_w: int, geometry: SensorGeometry) -> RoiBox:
    """Frame-centered box used when no wrist is found; deterministic."""
    if roi_w > geometry.width or roi_h > geometry.height:
        raise ParameterError(
            f"roi {roi_w}x{roi_h} exceeds frame {geometry.width}x{geometry.height}"
        )
    return RoiBox((geometry.width - roi_w) // 2, (geometry.height - roi_h) // 2, roi_w, roi_h)


def crop(frame: Frame, box: RoiBox):
    """Exact sub-grid copy plus the (x0, y0) offsets for downstream use."""
    h, w = frame.values.shape
    if box.x0 < 0 or box.y0 < 0 or box.x0 + box.w > w or box.y0 + box.h > h:
        raise ParameterError(f"{box} not inside {w}x{h} frame")
    sub = frame.values[box.y0 : box.y0 + box.h, box.x0 : box.x0 + box.w].copy()
    return Frame(sub, SensorGeometry(box.w, box.h)), (box.x0, box.y0)
