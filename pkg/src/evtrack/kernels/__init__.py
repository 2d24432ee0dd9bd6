"""Hot-kernel dispatch: compiled extension when built, numpy otherwise.

The backend is chosen once at import (override with EVTRACK_KERNELS=numpy
or =compiled) and can be switched at runtime via set_backend(), which the
equivalence tests and the benchmark rely on.
"""

import os

import numpy as np

from ..errors import ParameterError
from . import _numpy

try:
    from . import _accel
except ImportError:
    _accel = None

_BACKENDS = {"numpy": _numpy}
if _accel is not None:
    _BACKENDS["compiled"] = _accel

_impl = None
_backend_name = None


def available_backends():
    return tuple(_BACKENDS)


def set_backend(name):
    global _impl, _backend_name
    if name == "auto":
        name = "compiled" if _accel is not None else "numpy"
    if name not in _BACKENDS:
        raise ParameterError(
            f"kernel backend {name!r} unavailable (have {available_backends()})"
        )
    _impl = _BACKENDS[name]
    _backend_name = name
    return name


def get_backend():
    return _backend_name


set_backend(os.environ.get("EVTRACK_KERNELS", "auto"))


def im2col(xp, kh, kw, sh, sw, out_h, out_w):
    return _impl.im2col(xp, kh, kw, sh, sw, out_h, out_w)


def col2im_add(cols, xp, kh, kw, sh, sw, out_h, out_w):
    _impl.col2im_add(cols, xp, kh, kw, sh, sw, out_h, out_w)


def lnes_accumulate(t, x, y, t0, window_us, limit, img):
    t = np.ascontiguousarray(t, dtype=np.int64)
    x = np.ascontiguousarray(x, dtype=np.int64)
    y = np.ascontiguousarray(y, dtype=np.int64)
    return _impl.lnes_accumulate(t, x, y, int(t0), int(window_us), int(limit), img)
