"""Kernel selection: the compiled extension when importable, else numpy.

Set ``ORBITSHELLS_PURE_PYTHON=1`` to force the numpy fallback.
"""
import os

import numpy as np

from . import _kernels_py

if os.environ.get("ORBITSHELLS_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"


def available_backends() -> list:
    names = ["python"]
    try:
        from . import _kernels  # noqa: F401

        names.insert(0, "cython")
    except ImportError:
        pass
    return names


def _resolve(impl):
    if impl is None:
        return _impl
    if impl == "python":
        return _kernels_py
    if impl == "cython":
        from . import _kernels  # type: ignore[attr-defined]

        return _kernels
    raise ValueError(f"unknown kernel backend {impl!r}")


def coupled_products(w, a1, a2, l3, impl=None, compensated=False):
    """Couple two coefficient blocks into frequency ``l3``.

    ``w`` are the weights from :func:`orbitshells.cg.bispectrum_weights`,
    ``a1`` is ``(2 l1 + 1, R1)`` and ``a2`` is ``(2 l2 + 1, R2)`` complex.
    Returns ``K`` of shape ``(R1, R2, 2 l3 + 1)``.  ``impl`` picks a backend
    by name ("cython" or "python"); the default is :data:`BACKEND`.
    ``compensated`` switches to Kahan summation over (m1, m2) (numpy only).
    """
    fn = _kernels_py.coupled_products_compensated if compensated else _resolve(impl).coupled_products
    return fn(
        np.ascontiguousarray(w, dtype=float),
        np.ascontiguousarray(a1, dtype=complex),
        np.ascontiguousarray(a2, dtype=complex),
        int(l3),
    )


def contract_third(k, a3, impl=None):
    """B[s1, s2, s3] = sum_m3 K[s1, s2, m3] a3[m3, s3]."""
    impl = _resolve(impl)
    return impl.contract_third(
        np.ascontiguousarray(k, dtype=complex), np.ascontiguousarray(a3, dtype=complex)
    )
