"""Pure numpy implementations of the hot kernels.

These are the fallback backend; the compiled backend in _accel.pyx must
produce bit-identical results (same accumulation order where it matters).
"""

import numpy as np


def im2col(xp, kh, kw, sh, sw, out_h, out_w):
    """Gather conv patches from a padded NCHW array.

    Returns (N, C, kh*kw, out_h*out_w) with cols[n,c,i*kw+j,oh*out_w+ow]
    = xp[n,c,oh*sh+i,ow*sw+j].
    """
    n, c = xp.shape[0], xp.shape[1]
    s0, s1, s2, s3 = xp.strides
    view = np.lib.stride_tricks.as_strided(
        xp,
        shape=(n, c, kh, kw, out_h, out_w),
        strides=(s0, s1, s2, s3, s2 * sh, s3 * sw),
        writeable=False,
    )
    return view.reshape(n, c, kh * kw, out_h * out_w)


def col2im_add(cols, xp, kh, kw, sh, sw, out_h, out_w):
    """Scatter-add conv patches back into the padded NCHW array.

    Inverse-adjoint of im2col. Accumulates tap by tap in (i, j) order so the
    floating-point result matches the compiled kernel exactly.
    """
    n, c = xp.shape[0], xp.shape[1]
    colsv = cols.reshape(n, c, kh, kw, out_h, out_w)
    for i in range(kh):
        for j in range(kw):
            xp[:, :, i : i + sh * out_h : sh, j : j + sw * out_w : sw] += colsv[
                :, :, i, j
            ]


def lnes_accumulate(t, x, y, t0, window_us, limit, img):
    """Max-accumulate window-normalized event ages, newest first.

    t is sorted non-decreasing; iteration is from the end (newest events,
    ties resolved by input order). Stops after `limit` in-window events or
    at the first event older than the window. Returns the number of events
    incorporated.
    """
    n = t.shape[0]
    if n == 0 or limit <= 0:
        return 0
    # oldest admissible timestamp: age t0 - t <= window  <=>  t >= t0 - window
    lo = int(np.searchsorted(t, t0 - window_us, side="left"))
    start = max(lo, n - int(limit))
    if start >= n:
        return 0
    weights = (window_us - (t0 - t[start:]).astype(np.float64)) / float(window_us)
    np.maximum.at(img, (y[start:], x[start:]), weights)
    return n - start
