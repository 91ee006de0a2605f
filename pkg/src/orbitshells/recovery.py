"""Recovery of a coefficient set from its invariants by frequency marching.

l = 0 comes from the means, l = 1 from the Gram matrix G^1 plus the sign of
the B[1,1,1] entries, and every higher frequency L from a linear system whose
coefficients are built from the already recovered blocks l < L.
"""
from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels
from .cg import bispectrum_weights
from .errors import InfeasibleError, NumericalError, RankDeficientError
from .invariants import InvariantBundle, canonical_shell_mask
from .model import REAL, CoefficientSet, random_coefficients, real_to_complex_matrix

__all__ = [
    "RecoveryOptions",
    "RecoveryReport",
    "StepResult",
    "dim_harmonic",
    "shell_bound_term",
    "min_shells_bound",
    "marching_pairs",
    "march_system",
    "march_step",
    "recover_ell0",
    "recover_ell1",
    "recover",
    "rank_audit",
]


# ---------------------------------------------------------------------------
# counting


def dim_harmonic(n: int, ell: int) -> int:
    """Dimension of the degree-l harmonic polynomials on R^n."""
    if ell < 0:
        return 0
    return math.comb(n + ell - 1, n - 1) - (math.comb(n + ell - 3, n - 1) if ell >= 2 else 0)


def shell_bound_term(n: int, ell: int) -> int:
    """Smallest integer R with R >= (dim H_l + ceil(l/2) - 1) / (l - 1)."""
    if ell < 2:
        raise ValueError("the shell bound is defined for l >= 2")
    num = dim_harmonic(n, ell) + (ell + 1) // 2 - 1
    return -(-num // (ell - 1))


def min_shells_bound(n: int, ell_max: int, so3_base_case: bool = True) -> int:
    """Smallest shell count for which the degree-three counting argument holds
    at every frequency up to ``ell_max``.

    For n = 3 (with ``so3_base_case``) the per-frequency bound is enforced only
    for l >= 6, frequencies below that being covered by the R >= 3 base case;
    the result is then never below 3.
    """
    if n < 3 or ell_max < 2:
        raise ValueError("need n >= 3 and ell_max >= 2")
    if n == 3 and so3_base_case:
        return max([3] + [shell_bound_term(3, ell) for ell in range(6, ell_max + 1)])
    return max(shell_bound_term(n, ell) for ell in range(2, ell_max + 1))


# ---------------------------------------------------------------------------
# options / report


@dataclass
class RecoveryOptions:
    known_low_frequencies: CoefficientSet | None = None
    rcond_threshold: float = 1e-10
    use_all_equations: bool = True

    def __post_init__(self):
        if not 0.0 < self.rcond_threshold < 1.0:
            raise ValueError("rcond_threshold must lie in (0, 1)")


@dataclass
class StepResult:
    ell: int
    block: np.ndarray  # real basis, (2L+1, R)
    num_equations: int
    num_unknowns: int
    rank: int
    condition: float
    residual: float
    rhs_norm: float

    @property
    def full_rank(self) -> bool:
        return self.rank == self.num_unknowns


@dataclass
class RecoveryReport:
    steps: list = field(default_factory=list)
    bootstrap: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "steps": [
                {
                    "ell": s.ell,
                    "num_equations": s.num_equations,
                    "num_unknowns": s.num_unknowns,
                    "rank": s.rank,
                    "condition_number": s.condition,
                    "residual_norm": s.residual,
                    "rhs_norm": s.rhs_norm,
                    "full_rank": s.full_rank,
                }
                for s in self.steps
            ],
            "bootstrap": self.bootstrap,
            "timings_s": self.timings,
        }

    def conditions(self) -> dict:
        return {s.ell: s.condition for s in self.steps}


# ---------------------------------------------------------------------------
# linear systems


def marching_pairs(ell: int, num_shells: int, use_all: bool = True):
    """Yield ``(l1, l2, s1_idx, s2_idx)`` defining the equations for frequency
    ``ell`` (shell indices 0-based arrays).

    All equations: every l1 <= l2 < ell with l1 + l2 >= ell and every stored
    shell pair.  Subset mode: l1 = i <= ell // 2, l2 = ell - i, with shell
    pairs (1, 1..R), (2..R, 1) (or only (1, 1..R) when l1 = l2).
    """
    R = num_shells
    if use_all:
        for l1 in range(1, ell):
            for l2 in range(max(l1, ell - l1), ell):
                if l1 == l2:
                    s1, s2 = np.nonzero(canonical_shell_mask(l1, l2, ell, R)[:, :, 0])
                else:
                    s1, s2 = np.divmod(np.arange(R * R), R)
                yield l1, l2, s1, s2
    else:
        for i in range(1, ell // 2 + 1):
            l1, l2 = i, ell - i
            first = np.zeros(R, dtype=int), np.arange(R)
            if l1 == l2:
                s1, s2 = first
            else:
                s1 = np.concatenate([first[0], np.arange(1, R)])
                s2 = np.concatenate([first[1], np.zeros(R - 1, dtype=int)])
            yield l1, l2, s1, s2


def _complex_blocks(known: CoefficientSet, upto: int):
    a = []
    for ell in range(upto):
        blk = known.block(ell)
        a.append(real_to_complex_matrix(ell) @ blk if known.basis == REAL else np.asarray(blk))
    return a


def march_system(known: CoefficientSet, ell: int, use_all: bool = True, bundle: InvariantBundle | None = None,
                 impl=None):
    """Coefficient matrix (and, with a bundle, right-hand sides) for frequency
    ``ell`` in the real-basis unknowns.

    Each bispectrum entry B[l1, l2, ell, s1, s2, r] is linear in the block
    a[ell, :, r]; since B is real (l1+l2+ell even) or imaginary (odd) for a
    real signal, one real equation per entry is kept.
    """
    if known.ell_max < ell - 1:
        raise ValueError(f"known coefficients stop at l={known.ell_max}, need l < {ell}")
    R = known.num_shells
    a = _complex_blocks(known, ell)
    t = real_to_complex_matrix(ell)
    rows, rhs = [], []
    for l1, l2, s1, s2 in marching_pairs(ell, R, use_all):
        k = kernels.coupled_products(bispectrum_weights(l1, l2, ell), a[l1], a[l2], ell, impl=impl)
        coef = k[s1, s2] @ t
        odd = (l1 + l2 + ell) & 1
        rows.append(coef.imag if odd else coef.real)
        if bundle is not None:
            b = bundle.bispectrum.block(l1, l2, ell)[s1, s2]
            rhs.append(b.imag if odd else b.real)
    n = 2 * ell + 1
    mat = np.concatenate(rows) if rows else np.zeros((0, n))
    if bundle is None:
        return mat
    rhs = np.concatenate(rhs) if rhs else np.zeros((0, R))
    # entries absent from a partial bundle are NaN: drop those equations
    # (an equation row is shared by all target shells, so drop it if any is missing)
    keep = ~np.isnan(rhs).any(axis=1)
    return mat[keep], rhs[keep]


def _solve(mat, rhs, ell, rcond):
    neq, nunk = mat.shape
    if neq < nunk:
        raise InfeasibleError(
            f"l={ell}: {neq} equations for {nunk} unknowns per shell",
            ell=ell, num_equations=neq, num_unknowns=nunk,
        )
    u, s, vt = np.linalg.svd(mat, full_matrices=False)
    if s[0] == 0.0 or s[-1] < rcond * s[0]:
        rank = int(np.sum(s > rcond * s[0])) if s[0] > 0 else 0
        cond = math.inf if s[-1] == 0 else float(s[0] / s[-1])
        raise RankDeficientError(
            f"l={ell}: system rank {rank} < {nunk} (rcond {rcond:g})",
            ell=ell, rank=rank, num_unknowns=nunk, condition=cond,
        )
    x = vt.T @ ((u.T @ rhs) / s[:, None])
    return x, float(s[0] / s[-1]), float(np.linalg.norm(mat @ x - rhs))


def march_step(bundle: InvariantBundle, known: CoefficientSet, ell: int,
               options: RecoveryOptions | None = None) -> StepResult:
    """Solve for the real-basis block of frequency ``ell`` (all shells)."""
    options = options or RecoveryOptions()
    if ell < 2:
        raise ValueError("march_step starts at l = 2")
    if bundle.ell_max < ell:
        raise ValueError(f"bundle stops at l={bundle.ell_max}")
    if known.num_shells != bundle.num_shells:
        raise ValueError("shell count of known coefficients differs from bundle")
    mat, rhs = march_system(known, ell, options.use_all_equations, bundle)
    x, cond, res = _solve(mat, rhs, ell, options.rcond_threshold)
    return StepResult(ell, x, mat.shape[0], mat.shape[1], mat.shape[1], cond, res,
                      float(np.linalg.norm(rhs)))


# ---------------------------------------------------------------------------
# bootstrap


def recover_ell0(bundle: InvariantBundle) -> np.ndarray:
    means = np.asarray(bundle.means, float)
    if means.size != bundle.num_shells:
        raise ValueError(f"bundle has {means.size} means for {bundle.num_shells} shells")
    return means.copy()


def _b111(block1: np.ndarray, impl=None) -> np.ndarray:
    a = real_to_complex_matrix(1) @ block1
    k = kernels.coupled_products(bispectrum_weights(1, 1, 1), a, a, 1, impl=impl)
    return kernels.contract_third(k, a, impl=impl)


def recover_ell1(bundle: InvariantBundle, tie_tol: float = 1e-8):
    """One representative of the SO(3) orbit of A^1.

    Returns ``(block, info)``: ``block`` is 3 x R in the real basis and
    ``info`` records eigenvalue clamping, the Gram rank, both candidate
    mismatch scores and whether the reflection could be resolved.
    """
    R = bundle.num_shells
    if bundle.ell_max < 1:
        raise ValueError("bundle has no l = 1 data")
    g = np.asarray(bundle.gram[1], float)
    g = 0.5 * (g + g.T)
    evals, evecs = np.linalg.eigh(g)
    order = np.argsort(evals)[::-1][: min(3, R)]
    lam = evals[order]
    clamp = float(-lam[lam < 0].min()) if np.any(lam < 0) else 0.0
    lam = np.clip(lam, 0.0, None)
    u = np.zeros((3, R))
    u[: lam.size] = np.sqrt(lam)[:, None] * evecs[:, order].T
    scale = max(float(evals.max(initial=0.0)), 1e-300)
    gram_rank = int(np.sum(lam > 1e-10 * scale))

    measured = bundle.bispectrum.block(1, 1, 1)
    mask = canonical_shell_mask(1, 1, 1, R)
    cand = [u, np.diag([1.0, 1.0, -1.0]) @ u]
    scores = [float(np.sum(np.abs(_b111(c)[mask] - measured[mask]))) for c in cand]
    ref = float(np.sum(np.abs(measured[mask]))) + float(np.sum(np.abs(_b111(u)[mask])))
    resolved = abs(scores[0] - scores[1]) > tie_tol * max(ref, 1e-300) and ref > 0
    pick = int(scores[1] < scores[0])
    info = {
        "reflection_resolved": bool(resolved),
        "gram_rank": gram_rank,
        "mismatch_scores": scores,
        "chosen_candidate": pick,
        "eigenvalue_clamp": clamp,
    }
    return cand[pick], info


# ---------------------------------------------------------------------------
# driver


def recover(bundle: InvariantBundle, options: RecoveryOptions | None = None):
    """Frequency marching from l = 2 to ``bundle.ell_max``.

    Returns ``(coefficients, report)``.  Errors from a failing step carry the
    frequency in their message and ``ell`` attribute.
    """
    options = options or RecoveryOptions()
    R, L = bundle.num_shells, bundle.ell_max
    report = RecoveryReport()
    out = CoefficientSet.zeros(L, R, REAL, provenance="recovered by frequency marching")
    t0 = time.perf_counter()
    low = options.known_low_frequencies
    if low is not None:
        low = low.to_real()
        if low.num_shells != R:
            raise ValueError("known low frequencies have the wrong shell count")
        for ell in range(min(1, L, low.ell_max) + 1):
            out.block(ell)[:] = low.block(ell)
        report.bootstrap = {"source": "supplied", "reflection_resolved": True}
        if low.ell_max < min(1, L):
            out.block(1)[:], info = recover_ell1(bundle)
            report.bootstrap.update(info, source="supplied l=0, recovered l=1")
    else:
        out.block(0)[0] = recover_ell0(bundle)
        if L >= 1:
            out.block(1)[:], info = recover_ell1(bundle)
            report.bootstrap = {"source": "recovered", **info}
    report.timings["bootstrap"] = time.perf_counter() - t0
    for ell in range(2, L + 1):
        t1 = time.perf_counter()
        step = march_step(bundle, out, ell, options)
        out.block(ell)[:] = step.block
        report.steps.append(step)
        report.timings[f"l{ell}"] = time.perf_counter() - t1
    report.timings["total"] = time.perf_counter() - t0
    return out, report


def rank_audit(ell_max: int, num_shells: int, trials: int = 20, seed: int = 0,
               use_all: bool = True, rcond: float = 1e-10) -> dict:
    """Rank and conditioning of the marching systems for random signals.

    The systems are built from the true lower blocks only, so no bispectrum
    values are needed.  Infeasible systems (too few equations) count as rank
    deficient.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    per = {ell: {"ranks": [], "conditions": [], "num_equations": None} for ell in range(2, ell_max + 1)}
    for trial in range(trials):
        x = random_coefficients([seed, trial], ell_max, num_shells)
        for ell in range(2, ell_max + 1):
            mat = march_system(x, ell, use_all)
            rec = per[ell]
            rec["num_equations"] = mat.shape[0]
            if mat.shape[0] == 0:
                rec["ranks"].append(0)
                rec["conditions"].append(math.inf)
                continue
            s = np.linalg.svd(mat, compute_uv=False)
            rank = int(np.sum(s > rcond * s[0])) if s[0] > 0 else 0
            rec["ranks"].append(rank)
            full = mat.shape[0] >= mat.shape[1] and rank == mat.shape[1]
            rec["conditions"].append(float(s[0] / s[-1]) if full else math.inf)
    rows = []
    for ell, rec in per.items():
        n = 2 * ell + 1
        ranks = np.array(rec["ranks"])
        conds = np.array(rec["conditions"])
        rows.append({
            "ell": ell,
            "num_equations": rec["num_equations"],
            "num_unknowns": n,
            "min_rank": int(ranks.min()),
            "max_rank": int(ranks.max()),
            "full_rank_fraction": float(np.mean(ranks == n) if rec["num_equations"] >= n else 0.0),
            "min_condition": float(conds.min()),
            "max_condition": float(conds.max()),
        })
    return {
        "ell_max": ell_max,
        "num_shells": num_shells,
        "trials": trials,
        "seed": seed,
        "use_all_equations": use_all,
        "rows": rows,
        "all_full_rank": all(r["full_rank_fraction"] == 1.0 for r in rows),
        "deficient_ells": [r["ell"] for r in rows if r["full_rank_fraction"] < 1.0],
    }
