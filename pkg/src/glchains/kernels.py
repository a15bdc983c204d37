"""Kernel dispatch: the compiled extension when importable, numpy otherwise.

Set ``GLCHAINS_PURE_PYTHON=1`` to force the numpy kernels.
"""
import os

from . import _kernels_py

if os.environ.get("GLCHAINS_PURE_PYTHON"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl
    except ImportError:  # extension not built
        _impl = _kernels_py

BACKEND = "python" if _impl is _kernels_py else "cython"

dirichlet = _impl.dirichlet
wells = _impl.wells
wrapped_sums = _impl.wrapped_sums
