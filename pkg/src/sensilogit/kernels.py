"""Kernel backend selection.

The compiled ``_ckernels`` extension is used when it was built; otherwise the
NumPy implementation in ``_pykernels``.  Set ``SENSILOGIT_PURE_PYTHON=1`` to
force the fallback.
"""
import os

from . import _pykernels

if os.environ.get("SENSILOGIT_PURE_PYTHON"):
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl
        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels
        BACKEND = "python"

fixed_loglik_grad = _impl.fixed_loglik_grad
mixed_loglik_grad = _impl.mixed_loglik_grad

BACKENDS = {"python": _pykernels}
if BACKEND == "cython":
    BACKENDS["cython"] = _impl
