# Compiled hot kernels. Must stay bit-compatible with _numpy.py: same
# patch layout for im2col, same tap accumulation order for col2im_add,
# and order-independent max for lnes_accumulate.

import numpy as np

cimport numpy as cnp

cnp.import_array()

ctypedef fused floating:
    float
    double


def im2col(floating[:, :, :, ::1] xp, int kh, int kw, int sh, int sw,
           int out_h, int out_w):
    cdef Py_ssize_t n = xp.shape[0], c = xp.shape[1]
    dtype = np.float32 if floating is float else np.float64
    cols_arr = np.empty((n, c, kh * kw, out_h * out_w), dtype=dtype)
    cdef floating[:, :, :, ::1] cols = cols_arr
    cdef Py_ssize_t b, ch, i, j, oh, ow, tap, col
    for b in range(n):
        for ch in range(c):
            for i in range(kh):
                for j in range(kw):
                    tap = i * kw + j
                    for oh in range(out_h):
                        for ow in range(out_w):
                            cols[b, ch, tap, oh * out_w + ow] = xp[b, ch, oh * sh + i, ow * sw + j]
    return cols_arr


def col2im_add(floating[:, :, :, ::1] cols, floating[:, :, :, ::1] xp,
               int kh, int kw, int sh, int sw, int out_h, int out_w):
    cdef Py_ssize_t n = xp.shape[0], c = xp.shape[1]
    cdef Py_ssize_t b, ch, i, j, oh, ow, tap
    # taps outermost so per-cell accumulation order matches the fallback
    for i in range(kh):
        for j in range(kw):
            tap = i * kw + j
            for b in range(n):
                for ch in range(c):
                    for oh in range(out_h):
                        for ow in range(out_w):
                            xp[b, ch, oh * sh + i, ow * sw + j] += cols[b, ch, tap, oh * out_w + ow]


def lnes_accumulate(const cnp.int64_t[::1] t, const cnp.int64_t[::1] x, const cnp.int64_t[::1] y,
                    long long t0, long long window_us, long long limit,
                    double[:, ::1] img):
    cdef Py_ssize_t i = t.shape[0] - 1
    cdef long long count = 0
    cdef long long age
    cdef double w
    while i >= 0 and count < limit:
        age = t0 - t[i]
        if age > window_us:
            break
        w = (window_us - age) / <double> window_us
        if w > img[y[i], x[i]]:
            img[y[i], x[i]] = w
        count += 1
        i -= 1
    return count
