"""Special functions: associated Legendre, spherical harmonics, spherical
Bessel functions, their zeros, and the normalized radial shell basis.

All angles are in radians; ``theta`` is the polar angle measured from +z and
``phi`` the azimuth measured from +x.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "RADIAL_NORM_DEFAULT",
    "RADIAL_NORM_ORTHONORMAL",
    "RadialBasisSpec",
    "assoc_legendre",
    "sph_harm_complex",
    "sph_harm_real",
    "real_sph_harm_table",
    "complex_sph_harm_table",
    "spherical_jn",
    "bessel_zero",
    "radial_spec",
    "radial_basis",
]

# Numerator of the radial normalization 4 / |j_{l+1}(u_{l,s})|.  The
# orthonormal alternative (sqrt(2)) is exposed for callers that want a unit
# L2(r^2 dr) basis on [0, 1].
RADIAL_NORM_DEFAULT = 4.0
RADIAL_NORM_ORTHONORMAL = math.sqrt(2.0)

_ZERO_TOL = 1e-14
_ZERO_MAXITER = 200


def _check_lm(ell: int, m: int) -> None:
    if ell < 0:
        raise ValueError(f"ell must be non-negative, got {ell}")
    if abs(m) > ell:
        raise ValueError(f"|m| must not exceed ell (ell={ell}, m={m})")


def assoc_legendre(ell, m, x):
    """Associated Legendre function P_l^m(x) with the Condon-Shortley phase.

    Evaluated by the standard upward recurrence in ``ell`` starting from the
    closed-form sectoral value P_m^m.  ``x`` may be a scalar or an array.
    """
    if ell < 0 or m < 0 or m > ell:
        raise ValueError(f"require 0 <= m <= ell (ell={ell}, m={m})")
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(x) > 1.0):
        raise ValueError("assoc_legendre requires |x| <= 1")
    somx2 = np.sqrt((1.0 - x) * (1.0 + x))
    pmm = np.ones_like(x)
    fact = 1.0
    for _ in range(m):
        pmm = -pmm * fact * somx2
        fact += 2.0
    if ell == m:
        return pmm[()] if pmm.ndim == 0 else pmm
    pmmp1 = x * (2 * m + 1) * pmm
    if ell == m + 1:
        return pmmp1[()] if pmmp1.ndim == 0 else pmmp1
    pll = pmmp1
    for ll in range(m + 2, ell + 1):
        pll = ((2 * ll - 1) * x * pmmp1 - (ll + m - 1) * pmm) / (ll - m)
        pmm, pmmp1 = pmmp1, pll
    return pll[()] if pll.ndim == 0 else pll


def _normalized_legendre_table(ell_max: int, x: np.ndarray) -> np.ndarray:
    """Return ``P[l, m, ...]`` = N_l^m P_l^m(x) for 0 <= m <= l <= ell_max.

    N_l^m = sqrt((2l+1)/(4 pi) (l-m)!/(l+m)!), Condon-Shortley phase included.
    The recurrence runs directly on normalized values so no factorial ratio is
    ever formed.
    """
    x = np.asarray(x, dtype=float)
    out = np.zeros((ell_max + 1, ell_max + 1) + x.shape)
    sint = np.sqrt(np.clip((1.0 - x) * (1.0 + x), 0.0, None))
    out[0, 0] = 1.0 / math.sqrt(4.0 * math.pi)
    for m in range(1, ell_max + 1):
        out[m, m] = -math.sqrt((2 * m + 1) / (2.0 * m)) * sint * out[m - 1, m - 1]
    for m in range(0, ell_max):
        out[m + 1, m] = math.sqrt(2 * m + 3) * x * out[m, m]
    for m in range(0, ell_max + 1):
        for ll in range(m + 2, ell_max + 1):
            a = math.sqrt((4.0 * ll * ll - 1.0) / (ll * ll - m * m))
            b = math.sqrt(((ll - 1.0) ** 2 - m * m) / (4.0 * (ll - 1.0) ** 2 - 1.0))
            out[ll, m] = a * (x * out[ll - 1, m] - b * out[ll - 2, m])
    return out


def complex_sph_harm_table(ell_max: int, theta, phi) -> np.ndarray:
    """All complex harmonics Y_l^m for l <= ell_max at the given points.

    Returns an array of shape ``((ell_max+1)**2,) + broadcast_shape`` ordered
    by l ascending, then m from -l to l.
    """
    theta, phi = np.broadcast_arrays(np.asarray(theta, float), np.asarray(phi, float))
    plm = _normalized_legendre_table(ell_max, np.cos(theta))
    out = np.empty(((ell_max + 1) ** 2,) + theta.shape, dtype=complex)
    for ell in range(ell_max + 1):
        base = ell * ell + ell
        for m in range(0, ell + 1):
            y = plm[ell, m] * np.exp(1j * m * phi)
            out[base + m] = y
            if m:
                out[base - m] = (-1) ** m * np.conj(y)
    return out


def real_sph_harm_table(ell_max: int, theta, phi) -> np.ndarray:
    """All real harmonics for l <= ell_max, same layout as the complex table."""
    theta, phi = np.broadcast_arrays(np.asarray(theta, float), np.asarray(phi, float))
    plm = _normalized_legendre_table(ell_max, np.cos(theta))
    out = np.empty(((ell_max + 1) ** 2,) + theta.shape)
    sq2 = math.sqrt(2.0)
    for ell in range(ell_max + 1):
        base = ell * ell + ell
        out[base] = plm[ell, 0]
        for m in range(1, ell + 1):
            out[base + m] = sq2 * plm[ell, m] * np.cos(m * phi)
            out[base - m] = sq2 * plm[ell, m] * np.sin(m * phi)
    return out


def sph_harm_complex(ell: int, m: int, theta, phi):
    """Complex spherical harmonic Y_l^m(theta, phi).

    Negative orders use Y_l^{-m} = (-1)^m conj(Y_l^m).
    """
    _check_lm(ell, m)
    am = abs(m)
    p = _normalized_legendre_table(ell, np.cos(np.asarray(theta, float)))[ell, am]
    y = p * np.exp(1j * am * np.asarray(phi, float))
    if m < 0:
        y = (-1) ** am * np.conj(y)
    return y[()] if np.ndim(y) == 0 else y


def sph_harm_real(ell: int, m: int, theta, phi):
    """Real spherical harmonic: sqrt(2) Re Y_l^m (m > 0), Y_l^0, sqrt(2) Im Y_l^|m| (m < 0)."""
    _check_lm(ell, m)
    y = sph_harm_complex(ell, abs(m), theta, phi)
    if m > 0:
        return math.sqrt(2.0) * np.real(y)
    if m < 0:
        return math.sqrt(2.0) * np.imag(y)
    return np.real(y)


def _jn_series(ell: int, x: np.ndarray) -> np.ndarray:
    # x**l / (2l+1)!! * sum_k (-x^2/2)^k / (k! (2l+3)(2l+5)...(2l+2k+1))
    dfact = 1.0
    for k in range(1, 2 * ell + 2, 2):
        dfact *= k
    term = np.ones_like(x)
    total = np.ones_like(x)
    hx2 = -0.5 * x * x
    for k in range(1, 40):
        term = term * hx2 / (k * (2 * ell + 2 * k + 1))
        total = total + term
        if np.all(np.abs(term) < 1e-17 * np.abs(total)):
            break
    return x**ell / dfact * total


def _jn_upward(ell: int, x: np.ndarray) -> np.ndarray:
    j0 = np.sin(x) / x
    if ell == 0:
        return j0
    j1 = np.sin(x) / (x * x) - np.cos(x) / x
    for n in range(1, ell):
        j0, j1 = j1, (2 * n + 1) / x * j1 - j0
    return j1


def _jn_miller(ell: int, x: np.ndarray) -> np.ndarray:
    # Downward recurrence from well above ell, normalized with
    # sum_n (2n+1) j_n(x)^2 = 1, which stays valid near zeros of j_0.
    start = ell + 16 + int(math.sqrt(40.0 * (ell + 1)))
    jp1 = np.zeros_like(x)
    jn = np.full_like(x, 1e-30)
    norm = (2 * start + 1) * jn * jn
    target = np.zeros_like(x)
    for n in range(start, 0, -1):
        jm1 = (2 * n + 1) / x * jn - jp1
        jp1, jn = jn, jm1
        if n - 1 == ell:
            target = jn.copy()
        norm = norm + (2 * (n - 1) + 1) * jn * jn
        big = np.abs(jn) > 1e100
        if np.any(big):
            scale = np.where(big, 1e-100, 1.0)
            jn = jn * scale
            jp1 = jp1 * scale
            target = target * scale
            norm = norm * scale * scale
    # the recurrence carries an unknown common factor; fix its sign against
    # the closed forms of j_0 and j_1 (never both near zero)
    j0 = np.sin(x) / x
    j1 = np.sin(x) / (x * x) - np.cos(x) / x
    sign = np.where(jn * j0 + jp1 * j1 >= 0.0, 1.0, -1.0)
    return sign * target / np.sqrt(norm)


def spherical_jn(ell: int, x):
    """Spherical Bessel function of the first kind j_l(x) for x >= 0.

    Power series for x <= 1, Miller's downward recurrence for 1 < x < l,
    and upward recurrence from the j_0, j_1 closed forms otherwise.
    """
    if ell < 0:
        raise ValueError(f"ell must be non-negative, got {ell}")
    xa = np.asarray(x, dtype=float)
    flat = np.atleast_1d(xa).ravel()
    out = np.empty_like(flat)
    small = np.abs(flat) <= 1.0
    up = ~small & (np.abs(flat) >= ell)
    mid = ~small & ~up
    if np.any(small):
        out[small] = _jn_series(ell, flat[small])
    if np.any(up):
        out[up] = _jn_upward(ell, flat[up])
    if np.any(mid):
        out[mid] = _jn_miller(ell, flat[mid])
    out = out.reshape(xa.shape)
    return out[()] if out.ndim == 0 else out


def _bisect_zero(ell: int, lo: float, hi: float) -> float:
    flo = spherical_jn(ell, lo)
    fhi = spherical_jn(ell, hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if np.sign(flo) == np.sign(fhi):
        raise ArithmeticError(f"no sign change for j_{ell} on [{lo}, {hi}]")
    for _ in range(_ZERO_MAXITER):
        mid = 0.5 * (lo + hi)
        fm = spherical_jn(ell, mid)
        if fm == 0.0 or hi - lo < _ZERO_TOL * max(1.0, mid):
            break
        if np.sign(fm) == np.sign(flo):
            lo, flo = mid, fm
        else:
            hi = mid
    root = 0.5 * (lo + hi)
    # one Newton polish; j_l' = j_{l-1} - (l+1)/x j_l  (l >= 1), j_0' = -j_1
    f = spherical_jn(ell, root)
    if ell == 0:
        df = -spherical_jn(1, root)
    else:
        df = spherical_jn(ell - 1, root) - (ell + 1) / root * f
    if df != 0.0:
        cand = root - f / df
        if lo <= cand <= hi and abs(spherical_jn(ell, cand)) <= abs(f):
            root = cand
    return float(root)


@lru_cache(maxsize=None)
def _zeros_for(ell: int, count: int) -> tuple[float, ...]:
    if ell == 0:
        return tuple(math.pi * s for s in range(1, count + 1))
    # zeros of j_{l-1} interlace those of j_l: u_{l-1,s} < u_{l,s} < u_{l-1,s+1}
    prev = _zeros_for(ell - 1, count + 1)
    return tuple(_bisect_zero(ell, prev[s], prev[s + 1]) for s in range(count))


def bessel_zero(ell: int, s: int) -> float:
    """The s-th positive zero u_{l,s} of j_l (s >= 1)."""
    if ell < 0 or s < 1:
        raise ValueError(f"require ell >= 0 and s >= 1 (ell={ell}, s={s})")
    # request in blocks so the interlacing chain is shared between callers
    count = max(8, 1 << (s - 1).bit_length())
    u = _zeros_for(ell, count)[s - 1]
    if abs(spherical_jn(ell, u)) >= 1e-12:
        raise ArithmeticError(f"zero of j_{ell} #{s} did not converge (u={u})")
    return u


@dataclass(frozen=True)
class RadialBasisSpec:
    """One radial shell function (4/|j_{l+1}(u)|) j_l(u r) on [0, 1]."""

    ell: int
    shell: int
    zero: float
    norm_factor: float


def radial_spec(ell: int, s: int, norm_numerator: float = RADIAL_NORM_DEFAULT) -> RadialBasisSpec:
    u = bessel_zero(ell, s)
    return RadialBasisSpec(ell, s, u, norm_numerator / abs(float(spherical_jn(ell + 1, u))))


def radial_basis(spec: RadialBasisSpec, r):
    r = np.asarray(r, dtype=float)
    if np.any(r < 0.0) or np.any(r > 1.0 + 1e-12):
        raise ValueError("radial_basis is defined for 0 <= r <= 1")
    return spec.norm_factor * spherical_jn(spec.ell, spec.zero * r)
