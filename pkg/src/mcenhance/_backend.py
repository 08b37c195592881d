"""Kernel selection: compiled Cython kernels when built, numpy otherwise.

Set ``MCENHANCE_PURE_PYTHON=1`` to force the numpy fallback.
"""

import os

import numpy as np

from . import _fallback

BACKEND = "python"
_impl = _fallback

if os.environ.get("MCENHANCE_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl  # noqa: F811
    except ImportError:
        _impl = _fallback
    else:
        BACKEND = "cython"


def weighted_covariance(Y, weights, backend=None):
    impl = _pick(backend)
    Y = np.ascontiguousarray(Y, dtype=np.complex128)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    return impl.weighted_covariance(Y, weights)


def omlsa_gains(power, *args, backend=None):
    impl = _pick(backend)
    return impl.omlsa_gains(np.ascontiguousarray(power, dtype=np.float64), *args)


def _pick(backend):
    if backend is None:
        return _impl
    if backend == "python":
        return _fallback
    if backend == "cython":
        from . import _kernels

        return _kernels
    raise ValueError(f"unknown backend {backend!r}")
