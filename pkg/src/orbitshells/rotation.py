"""SO(3) elements and their action on coefficient sets.

Convention: active rotations, ZYZ Euler angles, R = Rz(alpha) Ry(beta) Rz(gamma).
Rotating a function means f'(x) = f(R^-1 x); in the complex basis the
coefficients transform as a'[l, m'] = sum_m D^l_{m'm}(alpha, beta, gamma) a[l, m]
with D^l_{m'm} = exp(-i m' alpha) d^l_{m'm}(beta) exp(-i m gamma).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .model import COMPLEX, REAL, CoefficientSet, real_to_complex_matrix

__all__ = [
    "RotationSpec",
    "wigner_d",
    "wigner_D",
    "real_wigner_D",
    "rotate_coefficients",
    "random_rotation",
    "align",
    "AlignmentResult",
    "L1_CARTESIAN",
]

_FACT = [float(math.factorial(n)) for n in range(171)]

# Real l=1 coefficients (f_-1, f_0, f_1) describe the linear function
# kappa * w . x with w = L1_CARTESIAN @ f, kappa = sqrt(3 / 4 pi).
L1_CARTESIAN = np.array([[0.0, 0.0, -1.0], [-1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])


def _rz(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _ry(b):
    c, s = math.cos(b), math.sin(b)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


@dataclass(frozen=True)
class RotationSpec:
    alpha: float
    beta: float
    gamma: float

    @classmethod
    def identity(cls):
        return cls(0.0, 0.0, 0.0)

    def matrix(self) -> np.ndarray:
        return _rz(self.alpha) @ _ry(self.beta) @ _rz(self.gamma)

    @classmethod
    def from_matrix(cls, rot) -> RotationSpec:
        r = np.asarray(rot, float)
        sb = 0.5 * (math.hypot(r[0, 2], r[1, 2]) + math.hypot(r[2, 0], r[2, 1]))
        beta = math.atan2(sb, r[2, 2])
        # alpha +- gamma from the upper-left block stay accurate near the poles,
        # where alpha and gamma separately are ill-determined
        if beta <= math.pi / 2:
            total = math.atan2(r[1, 0] - r[0, 1], r[0, 0] + r[1, 1])
            alpha = math.atan2(r[1, 2], r[0, 2]) if sb > 0 else total
            gamma = total - alpha
        else:
            diff = math.atan2(-(r[1, 0] + r[0, 1]), r[1, 1] - r[0, 0])
            alpha = math.atan2(r[1, 2], r[0, 2]) if sb > 0 else diff
            gamma = alpha - diff
        two_pi = 2 * math.pi
        return cls(alpha % two_pi, beta, gamma % two_pi)

    @classmethod
    def from_quaternion(cls, q) -> RotationSpec:
        w, x, y, z = np.asarray(q, float) / np.linalg.norm(q)
        m = np.array([
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ])
        return cls.from_matrix(m)

    def compose(self, first: RotationSpec) -> RotationSpec:
        """``self`` after ``first``."""
        return RotationSpec.from_matrix(self.matrix() @ first.matrix())

    def inverse(self) -> RotationSpec:
        return RotationSpec.from_matrix(self.matrix().T)


def wigner_d(ell: int, beta: float) -> np.ndarray:
    """Small Wigner matrix d^l_{m'm}(beta), rows m', columns m, both -l..l."""
    n = 2 * ell + 1
    out = np.zeros((n, n))
    c, s = math.cos(beta / 2.0), math.sin(beta / 2.0)
    f = _FACT
    for i, mp in enumerate(range(-ell, ell + 1)):
        for j, m in enumerate(range(-ell, ell + 1)):
            pre = math.sqrt(f[ell + mp] * f[ell - mp] * f[ell + m] * f[ell - m])
            total = 0.0
            for k in range(max(0, m - mp), min(ell + m, ell - mp) + 1):
                term = pre / (f[ell + m - k] * f[k] * f[mp - m + k] * f[ell - mp - k])
                term *= c ** (2 * ell + m - mp - 2 * k) * s ** (mp - m + 2 * k)
                total += -term if (mp - m + k) & 1 else term
            out[i, j] = total
    return out


def wigner_D(ell: int, rot: RotationSpec) -> np.ndarray:
    m = np.arange(-ell, ell + 1)
    return np.exp(-1j * m * rot.alpha)[:, None] * wigner_d(ell, rot.beta) * np.exp(-1j * m * rot.gamma)[None, :]


def real_wigner_D(ell: int, rot: RotationSpec) -> np.ndarray:
    """Orthogonal matrix acting on real-basis coefficients of frequency l."""
    t = real_to_complex_matrix(ell)
    return np.real(t.conj().T @ wigner_D(ell, rot) @ t)


def rotate_coefficients(coeffs: CoefficientSet, rot: RotationSpec) -> CoefficientSet:
    """Apply the rotation to every frequency block; shells are untouched."""
    out = coeffs.copy()
    for ell in range(coeffs.ell_max + 1):
        if coeffs.basis == COMPLEX:
            out.block(ell)[:] = wigner_D(ell, rot) @ coeffs.block(ell)
        else:
            out.block(ell)[:] = real_wigner_D(ell, rot) @ coeffs.block(ell)
    return out


def random_rotation(seed) -> RotationSpec:
    """Haar-uniform rotation from a normalized Gaussian quaternion."""
    rng = np.random.default_rng(seed)
    return RotationSpec.from_quaternion(rng.standard_normal(4))


@dataclass
class AlignmentResult:
    rotation: RotationSpec
    reflected: bool
    relative_error: float
    aligned: CoefficientSet
    warning: str | None = None


def align(estimate: CoefficientSet, truth: CoefficientSet) -> AlignmentResult:
    """Rotate ``estimate`` onto ``truth`` using an orthogonal Procrustes fit
    of the l = 1 blocks, then report the relative Frobenius error over all
    frequencies.

    If the unconstrained optimum is improper, ``reflected`` is set and the
    best proper rotation is used instead.
    """
    if (estimate.ell_max, estimate.num_shells) != (truth.ell_max, truth.num_shells):
        raise ValueError("estimate and truth have different shapes")
    est = estimate.to_real()
    tru = truth.to_real()
    note = None
    if est.ell_max < 1:
        rot, reflected = RotationSpec.identity(), False
    else:
        a_est, a_tru = est.block(1), tru.block(1)
        u, s, vt = np.linalg.svd(a_tru @ a_est.T)
        if s[1] < 1e-10 * max(s[0], 1e-300):
            note = "degenerate l=1 block (rank < 2): alignment is ambiguous"
            warnings.warn(note, RuntimeWarning, stacklevel=2)
        q = u @ vt
        reflected = bool(np.linalg.det(q) < 0)
        if reflected:
            u[:, -1] *= -1
            q = u @ vt
        rot = RotationSpec.from_matrix(L1_CARTESIAN @ q @ L1_CARTESIAN.T)
    aligned = rotate_coefficients(est, rot)
    err = float(np.linalg.norm(tru.values - aligned.values) / np.linalg.norm(tru.values))
    if truth.basis == COMPLEX and estimate.basis == COMPLEX:
        aligned = aligned.to_complex()
    return AlignmentResult(rot, reflected, err, aligned, note)
