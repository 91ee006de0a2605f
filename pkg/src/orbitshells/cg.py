"""Clebsch-Gordan coefficients <l1 m1 l2 m2 | l m> for SO(3) and cached
coupling tables.
"""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass

import numpy as np

__all__ = ["CouplingTable", "clebsch_gordan", "coupling_table", "bispectrum_weights"]

_FACT = np.array([float(math.factorial(n)) for n in range(171)])


def _triangle(l1: int, l2: int, ell: int) -> bool:
    return abs(l1 - l2) <= ell <= l1 + l2


def clebsch_gordan(l1: int, m1: int, l2: int, m2: int, ell: int, m: int) -> float:
    """Single coefficient via the Racah closed form."""
    for lj, mj in ((l1, m1), (l2, m2), (ell, m)):
        if lj < 0 or abs(mj) > lj:
            raise ValueError(f"invalid (l, m) = ({lj}, {mj})")
    if m != m1 + m2 or not _triangle(l1, l2, ell):
        return 0.0
    return float(coupling_table(l1, l2, ell).values[m1 + l1, m2 + l2])


def _racah_table(l1: int, l2: int, ell: int) -> np.ndarray:
    m1 = np.arange(-l1, l1 + 1)[:, None]
    m2 = np.arange(-l2, l2 + 1)[None, :]
    m = m1 + m2
    valid = np.abs(m) <= ell
    m = np.where(valid, m, 0)
    f = _FACT
    pre = math.sqrt(
        (2 * ell + 1) * f[ell + l1 - l2] * f[ell - l1 + l2] * f[l1 + l2 - ell]
        / f[l1 + l2 + ell + 1]
    )
    mfac = np.sqrt(f[ell + m] * f[ell - m] * f[l1 - m1] * f[l1 + m1] * f[l2 - m2] * f[l2 + m2])
    total = np.zeros(m.shape)
    for k in range(0, l1 + l2 - ell + 1):
        args = (
            l1 + l2 - ell - k,
            l1 - m1 - k,
            l2 + m2 - k,
            ell - l2 + m1 + k,
            ell - l1 - m2 + k,
        )
        ok = np.ones(m.shape, dtype=bool)
        denom = np.full(m.shape, f[k])
        for a in args:
            a = np.broadcast_to(a, m.shape)
            ok &= a >= 0
            denom = denom * f[np.clip(a, 0, None)]
        total += np.where(ok, (-1.0) ** k * (mfac / denom), 0.0)
    return np.where(valid, pre * total, 0.0)


@dataclass(frozen=True, eq=False)
class CouplingTable:
    """All coefficients <l1 m1 l2 m2 | l, m1+m2> as an array indexed
    ``[m1 + l1, m2 + l2]``.  Entries with |m1+m2| > l are zero."""

    ell1: int
    ell2: int
    ell: int
    values: np.ndarray

    def __post_init__(self):
        self.values.setflags(write=False)


_TABLES: dict[tuple[int, int, int], CouplingTable] = {}
_WEIGHTS: dict[tuple[int, int, int], np.ndarray] = {}
_LOCK = threading.Lock()


def coupling_table(l1: int, l2: int, ell: int) -> CouplingTable:
    """Memoized coupling table; raises ``ValueError`` if (l1, l2, l) violates
    the triangle inequality."""
    key = (l1, l2, ell)
    tab = _TABLES.get(key)
    if tab is not None:
        return tab
    if min(key) < 0 or not _triangle(l1, l2, ell):
        raise ValueError(f"no coupling: ({l1}, {l2}, {ell}) violates the triangle inequality")
    tab = CouplingTable(l1, l2, ell, _racah_table(l1, l2, ell))
    with _LOCK:
        return _TABLES.setdefault(key, tab)


def bispectrum_weights(l1: int, l2: int, l3: int) -> np.ndarray:
    """Coupling weights w[m1, m2] = (-1)^m1 <l2 m2 l3 m3 | l1 -m1>, m3 = -m1-m2.

    Indexed ``[m1 + l1, m2 + l2]``; entries with |m1+m2| > l3 are zero.  These
    are the only coefficients needed for the degree-three invariants.
    """
    key = (l1, l2, l3)
    w = _WEIGHTS.get(key)
    if w is not None:
        return w
    cgt = coupling_table(l2, l3, l1).values  # [m2 + l2, m3 + l3]
    w = np.zeros((2 * l1 + 1, 2 * l2 + 1))
    for i1, m1 in enumerate(range(-l1, l1 + 1)):
        for i2, m2 in enumerate(range(-l2, l2 + 1)):
            m3 = -m1 - m2
            if abs(m3) <= l3:
                w[i1, i2] = (-1) ** (m1 & 1) * cgt[i2, m3 + l3]
    w.setflags(write=False)
    with _LOCK:
        return _WEIGHTS.setdefault(key, w)
