"""Rotation invariants of degree one, two and three.

Degree three is the bispectrum

    B[l1,l2,l3,s1,s2,s3] = sum_{m1+m2+m3=0} (-1)^m1 <l2 m2 l3 m3 | l1 -m1>
                             a[l1,m1,s1] a[l2,m2,s2] a[l3,m3,s3]

evaluated on complex-basis coefficients.  Only canonical keys are stored
logically (l1 <= l2 <= l3 <= l1 + l2, shells nondecreasing across equal
frequencies); other orderings follow from the permutation symmetry of the
underlying 3j contraction, see :meth:`BispectrumTable.value`.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import permutations
from pathlib import Path

import numpy as np

from . import kernels
from .cg import bispectrum_weights
from .errors import FormatError
from .model import CoefficientSet

__all__ = [
    "BispectrumTable",
    "InvariantBundle",
    "ell_triples",
    "enumerate_triples",
    "canonical_shell_mask",
    "degree1",
    "degree2",
    "bispectrum",
    "compute_invariants",
    "average_bundles",
    "serialize_bundle",
    "deserialize_bundle",
    "BUNDLE_FORMAT_VERSION",
]

BUNDLE_FORMAT = "orbitshells.bundle"
BUNDLE_FORMAT_VERSION = 1


@lru_cache(maxsize=None)
def ell_triples(ell_max: int) -> tuple[tuple[int, int, int], ...]:
    """Sorted frequency triples l1 <= l2 <= l3 <= ell_max with l3 <= l1 + l2."""
    return tuple(
        (l1, l2, l3)
        for l1 in range(ell_max + 1)
        for l2 in range(l1, ell_max + 1)
        for l3 in range(l2, min(ell_max, l1 + l2) + 1)
    )


@lru_cache(maxsize=None)
def canonical_shell_mask(l1: int, l2: int, l3: int, num_shells: int) -> np.ndarray:
    s = np.arange(num_shells)
    s1, s2, s3 = np.meshgrid(s, s, s, indexing="ij")
    mask = np.ones(s1.shape, dtype=bool)
    if l1 == l2:
        mask &= s1 <= s2
    if l2 == l3:
        mask &= s2 <= s3
    mask.setflags(write=False)
    return mask


def enumerate_triples(ell_max: int, num_shells: int) -> list[tuple[int, int, int, int, int, int]]:
    """Canonical bispectrum keys in lexicographic order (shells 1-based)."""
    keys = []
    for l1, l2, l3 in ell_triples(ell_max):
        idx = np.argwhere(canonical_shell_mask(l1, l2, l3, num_shells)) + 1
        keys.extend((l1, l2, l3, int(a), int(b), int(c)) for a, b, c in idx)
    return keys


def _contraction_factor(l1, l2, l3):
    # B = (-1)^(l2-l3) sqrt(2 l1 + 1) * T, with T the 3j contraction
    return (-1) ** ((l2 - l3) & 1) * math.sqrt(2 * l1 + 1)


class BispectrumTable:
    """Bispectrum values keyed by canonical (l1, l2, l3, s1, s2, s3).

    Internally one dense ``(R, R, R)`` complex block per sorted frequency
    triple; non-canonical shell orderings inside a block are kept consistent
    with the symmetry rule so recovery can read blocks directly.
    """

    def __init__(self, ell_max: int, num_shells: int, blocks: dict | None = None):
        self.ell_max = ell_max
        self.num_shells = num_shells
        R = num_shells
        self._blocks = {}
        for t in ell_triples(ell_max):
            b = None if blocks is None else blocks.get(t)
            self._blocks[t] = np.zeros((R, R, R), complex) if b is None else np.asarray(b, complex)

    def block(self, l1: int, l2: int, l3: int) -> np.ndarray:
        return self._blocks[(l1, l2, l3)]

    def triples(self):
        return list(self._blocks)

    def keys(self):
        return enumerate_triples(self.ell_max, self.num_shells)

    def __len__(self):
        return len(self.keys())

    def __getitem__(self, key) -> complex:
        l1, l2, l3, s1, s2, s3 = key
        if not (l1 <= l2 <= l3) or (l1, l2, l3) not in self._blocks:
            raise KeyError(f"{key} is not a canonical frequency triple")
        if not canonical_shell_mask(l1, l2, l3, self.num_shells)[s1 - 1, s2 - 1, s3 - 1]:
            raise KeyError(f"{key} is not a canonical shell ordering")
        return complex(self._blocks[(l1, l2, l3)][s1 - 1, s2 - 1, s3 - 1])

    def items(self):
        return [(k, self[k]) for k in self.keys()]

    def value(self, l1, l2, l3, s1, s2, s3) -> complex:
        """Entry for any ordering of the three (l, s) pairs.

        An odd permutation of the pairs multiplies the underlying 3j
        contraction by (-1)^(l1+l2+l3); the result is rescaled by the
        CG normalisation of each ordering.
        """
        pairs = [(l1, s1), (l2, s2), (l3, s3)]
        order = sorted(range(3), key=lambda i: pairs[i])
        (c1, t1), (c2, t2), (c3, t3) = (pairs[i] for i in order)
        if (c1, c2, c3) not in self._blocks:
            if c3 > c1 + c2 and c3 <= self.ell_max:
                return 0j
            raise KeyError(f"frequencies ({l1}, {l2}, {l3}) out of range")
        t = self._blocks[(c1, c2, c3)][t1 - 1, t2 - 1, t3 - 1] / _contraction_factor(c1, c2, c3)
        inversions = sum(1 for i in range(3) for j in range(i + 1, 3) if order[i] > order[j])
        if inversions % 2:
            t *= (-1) ** ((l1 + l2 + l3) & 1)
        return complex(t * _contraction_factor(l1, l2, l3))

    def flat(self) -> np.ndarray:
        """Canonical values in :func:`enumerate_triples` order."""
        R = self.num_shells
        return np.concatenate([
            self._blocks[t][canonical_shell_mask(*t, R)] for t in ell_triples(self.ell_max)
        ]) if self._blocks else np.zeros(0, complex)

    @classmethod
    def from_flat(cls, ell_max: int, num_shells: int, values) -> BispectrumTable:
        """Rebuild dense blocks from canonical values, filling tied orderings."""
        values = np.asarray(values, complex)
        table = cls(ell_max, num_shells)
        R = num_shells
        pos = 0
        for t in ell_triples(ell_max):
            mask = canonical_shell_mask(*t, R)
            n = int(mask.sum())
            blk = table._blocks[t]
            blk[mask] = values[pos : pos + n]
            pos += n
            _fill_tied(blk, t)
        if pos != values.size:
            raise ValueError(f"expected {pos} values, got {values.size}")
        return table

    def max_abs(self) -> float:
        return max((float(np.max(np.abs(b))) for b in self._blocks.values()), default=0.0)


def _fill_tied(blk: np.ndarray, t) -> None:
    l1, l2, l3 = t
    sign = (-1) ** ((l1 + l2 + l3) & 1)
    R = blk.shape[0]
    mask = canonical_shell_mask(l1, l2, l3, R)
    if mask.all():
        return
    # positions i, j with equal frequency may be swapped; each swap of tied
    # frequencies is a transposition, contributing `sign`
    tied = [p for p in permutations(range(3)) if all(t[p[i]] == t[i] for i in range(3))]
    for idx in np.argwhere(~mask):
        for p in tied:
            src = tuple(idx[list(p)])
            if mask[src]:
                inv = sum(1 for i in range(3) for j in range(i + 1, 3) if p[i] > p[j])
                blk[tuple(idx)] = blk[src] * (sign if inv % 2 else 1)
                break


@dataclass
class InvariantBundle:
    """Degree-1 means, per-frequency Gram matrices and the bispectrum."""

    ell_max: int
    num_shells: int
    means: np.ndarray
    gram: list
    bispectrum: BispectrumTable
    provenance: str = ""
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.means = np.asarray(self.means, float).reshape(-1)
        self.gram = [np.asarray(g, float) for g in self.gram]
        R = self.num_shells
        if self.means.size != R:
            raise ValueError(f"means has {self.means.size} entries, expected {R}")
        if len(self.gram) != self.ell_max + 1 or any(g.shape != (R, R) for g in self.gram):
            raise ValueError("gram must hold one R x R matrix per frequency")
        if (self.bispectrum.ell_max, self.bispectrum.num_shells) != (self.ell_max, R):
            raise ValueError("bispectrum shape does not match bundle")


def degree1(coeffs: CoefficientSet) -> np.ndarray:
    """Per-shell l = 0 coefficients (rotation fixed)."""
    return np.real(coeffs.block(0)[0]).astype(float).copy()


def degree2(coeffs: CoefficientSet) -> list[np.ndarray]:
    """Gram matrices G^l = (A^l)^T A^l of the real-basis blocks."""
    real = coeffs.to_real()
    return [a.T @ a for a in real.blocks()]


def bispectrum(coeffs: CoefficientSet, impl=None, compensated: bool = False) -> BispectrumTable:
    """All canonical bispectrum entries.  ``compensated`` enables Kahan
    summation over (m1, m2); the default plain sums are accurate to ~1e-14
    relative at desk-scale l_max."""
    cplx = coeffs.to_complex()
    a = cplx.blocks()
    blocks = {}
    for l1, l2, l3 in ell_triples(cplx.ell_max):
        k = kernels.coupled_products(bispectrum_weights(l1, l2, l3), a[l1], a[l2], l3, impl=impl,
                                     compensated=compensated)
        blocks[(l1, l2, l3)] = kernels.contract_third(k, a[l3], impl=impl)
    return BispectrumTable(cplx.ell_max, cplx.num_shells, blocks)


def compute_invariants(coeffs: CoefficientSet, impl=None, compensated: bool = False) -> InvariantBundle:
    return InvariantBundle(
        coeffs.ell_max,
        coeffs.num_shells,
        degree1(coeffs),
        degree2(coeffs),
        bispectrum(coeffs, impl=impl, compensated=compensated),
        provenance=f"invariants of {coeffs.provenance or 'coefficients'}",
    )


def average_bundles(bundles) -> InvariantBundle:
    """Entrywise mean of bundles with equal shape (no debiasing)."""
    bundles = list(bundles)
    if not bundles:
        raise ValueError("no bundles to average")
    b0 = bundles[0]
    n = len(bundles)
    blocks = {t: sum(b.bispectrum.block(*t) for b in bundles) / n for t in b0.bispectrum.triples()}
    return InvariantBundle(
        b0.ell_max,
        b0.num_shells,
        sum(b.means for b in bundles) / n,
        [sum(b.gram[ell] for b in bundles) / n for ell in range(b0.ell_max + 1)],
        BispectrumTable(b0.ell_max, b0.num_shells, blocks),
        provenance=f"average of {n} bundles",
    )


def bundle_to_dict(bundle: InvariantBundle) -> dict:
    keys = bundle.bispectrum.keys()
    vals = bundle.bispectrum.flat()
    return {
        "format": BUNDLE_FORMAT,
        "format_version": BUNDLE_FORMAT_VERSION,
        "ell_max": bundle.ell_max,
        "num_shells": bundle.num_shells,
        "provenance": bundle.provenance,
        "means": [float(v) for v in bundle.means],
        "gram": [g.tolist() for g in bundle.gram],
        "bispectrum": [
            {"l1": k[0], "l2": k[1], "l3": k[2], "s1": k[3], "s2": k[4], "s3": k[5],
             "re": float(v.real), "im": float(v.imag)}
            for k, v in zip(keys, vals)
        ],
    }


def bundle_from_dict(d: dict, allow_missing: bool = False) -> InvariantBundle:
    """Inverse of :func:`bundle_to_dict`.

    With ``allow_missing`` the bispectrum records may be any subset of the
    canonical keys; absent entries are stored as NaN and recovery drops the
    equations that would use them.
    """
    if not isinstance(d, dict):
        raise FormatError("bundle file must hold a JSON object")
    if d.get("format_version") != BUNDLE_FORMAT_VERSION:
        raise FormatError(f"unsupported bundle format version {d.get('format_version')!r}")
    for name in ("ell_max", "num_shells", "means", "gram", "bispectrum"):
        if name not in d:
            raise FormatError(f"bundle is missing the {name!r} section")
    ell_max, R = int(d["ell_max"]), int(d["num_shells"])
    keys = enumerate_triples(ell_max, R)
    records = d["bispectrum"]
    if not allow_missing and len(records) != len(keys):
        raise FormatError(f"bispectrum has {len(records)} entries, expected {len(keys)}")
    vals = np.full(len(keys), complex(np.nan, np.nan))
    try:
        if allow_missing:
            pos = {k: i for i, k in enumerate(keys)}
            for rec in records:
                got = tuple(int(rec[n]) for n in ("l1", "l2", "l3", "s1", "s2", "s3"))
                if got not in pos:
                    raise FormatError(f"bispectrum key {got} is not canonical")
                vals[pos[got]] = complex(float(rec["re"]), float(rec["im"]))
        else:
            for i, (key, rec) in enumerate(zip(keys, records)):
                got = tuple(int(rec[n]) for n in ("l1", "l2", "l3", "s1", "s2", "s3"))
                if got != key:
                    raise FormatError(f"bispectrum entry {i} has key {got}, expected {key}")
                vals[i] = complex(float(rec["re"]), float(rec["im"]))
        return InvariantBundle(
            ell_max, R, d["means"], d["gram"],
            BispectrumTable.from_flat(ell_max, R, vals),
            provenance=str(d.get("provenance", "")),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"malformed bundle: {exc}") from None


def serialize_bundle(bundle: InvariantBundle, path) -> None:
    Path(path).write_text(json.dumps(bundle_to_dict(bundle)))


def deserialize_bundle(path) -> InvariantBundle:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON ({exc})") from None
    return bundle_from_dict(d)
