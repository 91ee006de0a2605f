"""Coefficient sets, voxel grids, and the spherical-harmonic x spherical-Bessel
shell expansion linking them.

Index order everywhere: l ascending, then m from -l to l, then shell s from
1 to R.  The block for frequency l is therefore a contiguous ``(2l+1, R)``
slice of the flat value array (the matrix A^l).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import specfun
from .errors import FormatError

__all__ = [
    "CoefficientSet",
    "VolumeGrid",
    "ExpansionConfig",
    "ShellExpansion",
    "real_to_complex",
    "complex_to_real",
    "real_to_complex_matrix",
    "expand_volume",
    "render_volume",
    "evaluate_points",
    "voxel_geometry",
    "random_coefficients",
    "relative_error",
    "save_coefficients",
    "load_coefficients",
    "save_volume",
    "load_volume",
]

REAL = "real"
COMPLEX = "complex"


def num_coefficients(ell_max: int, num_shells: int) -> int:
    return (ell_max + 1) ** 2 * num_shells


@dataclass
class CoefficientSet:
    """Expansion coefficients x[l, m, s] for l <= ell_max over R shells."""

    ell_max: int
    num_shells: int
    basis: str
    values: np.ndarray
    bandlimit: float = 0.5
    provenance: str = ""

    def __post_init__(self):
        if self.ell_max < 0 or self.num_shells < 1:
            raise ValueError("need ell_max >= 0 and num_shells >= 1")
        if self.basis not in (REAL, COMPLEX):
            raise ValueError(f"unknown basis {self.basis!r}")
        dtype = float if self.basis == REAL else complex
        vals = np.asarray(self.values)
        if self.basis == REAL and np.iscomplexobj(vals):
            if np.any(vals.imag != 0):
                raise ValueError("real-basis coefficients must have zero imaginary part")
            vals = vals.real
        self.values = np.ascontiguousarray(vals, dtype=dtype).reshape(-1)
        n = num_coefficients(self.ell_max, self.num_shells)
        if self.values.size != n:
            raise ValueError(f"expected {n} values, got {self.values.size}")

    @classmethod
    def zeros(cls, ell_max, num_shells, basis=REAL, **kw):
        dtype = float if basis == REAL else complex
        return cls(ell_max, num_shells, basis, np.zeros(num_coefficients(ell_max, num_shells), dtype), **kw)

    @property
    def size(self) -> int:
        return self.values.size

    def index(self, ell: int, m: int, s: int) -> int:
        """Flat position of (l, m, s); ``s`` is 1-based."""
        if not (0 <= ell <= self.ell_max and abs(m) <= ell and 1 <= s <= self.num_shells):
            raise IndexError(f"({ell}, {m}, {s}) out of range")
        return (ell * ell + m + ell) * self.num_shells + (s - 1)

    def __getitem__(self, key):
        return self.values[self.index(*key)]

    def __setitem__(self, key, value):
        self.values[self.index(*key)] = value

    def block(self, ell: int) -> np.ndarray:
        """Writable ``(2l+1, R)`` view A^l; row k is m = k - l."""
        if not 0 <= ell <= self.ell_max:
            raise IndexError(f"ell={ell} out of range")
        R = self.num_shells
        return self.values[ell * ell * R : (ell + 1) ** 2 * R].reshape(2 * ell + 1, R)

    def blocks(self):
        return [self.block(ell) for ell in range(self.ell_max + 1)]

    def copy(self) -> CoefficientSet:
        return replace(self, values=self.values.copy())

    def truncated(self, ell_max: int) -> CoefficientSet:
        ell_max = min(ell_max, self.ell_max)
        n = num_coefficients(ell_max, self.num_shells)
        return replace(self, ell_max=ell_max, values=self.values[:n].copy())

    def to_complex(self) -> CoefficientSet:
        return self.copy() if self.basis == COMPLEX else real_to_complex(self)

    def to_real(self) -> CoefficientSet:
        return self.copy() if self.basis == REAL else complex_to_real(self)

    def norm(self) -> float:
        return float(np.linalg.norm(self.values))


@lru_cache(maxsize=None)
def real_to_complex_matrix(ell: int) -> np.ndarray:
    """Unitary T with a = T f mapping real-basis to complex-basis coefficients
    of the same function (rows/cols ordered m = -l..l)."""
    n = 2 * ell + 1
    t = np.zeros((n, n), dtype=complex)
    t[ell, ell] = 1.0
    r2 = 1.0 / math.sqrt(2.0)
    for m in range(1, ell + 1):
        sgn = (-1) ** m
        t[ell + m, ell + m] = r2
        t[ell + m, ell - m] = -1j * r2
        t[ell - m, ell + m] = sgn * r2
        t[ell - m, ell - m] = sgn * 1j * r2
    t.setflags(write=False)
    return t


def real_to_complex(coeffs: CoefficientSet) -> CoefficientSet:
    if coeffs.basis != REAL:
        raise ValueError("real_to_complex expects a real-basis coefficient set")
    out = CoefficientSet.zeros(coeffs.ell_max, coeffs.num_shells, COMPLEX,
                               bandlimit=coeffs.bandlimit, provenance=coeffs.provenance)
    for ell in range(coeffs.ell_max + 1):
        out.block(ell)[:] = real_to_complex_matrix(ell) @ coeffs.block(ell)
    return out


def complex_to_real(coeffs: CoefficientSet, atol: float = 1e-10) -> CoefficientSet:
    """Inverse of :func:`real_to_complex`.  The set must describe a real
    signal, i.e. a[l,-m,s] = (-1)^m conj(a[l,m,s]) to within ``atol`` (scaled)."""
    if coeffs.basis != COMPLEX:
        raise ValueError("complex_to_real expects a complex-basis coefficient set")
    vals = np.empty(coeffs.size)
    scale = max(1.0, float(np.max(np.abs(coeffs.values), initial=0.0)))
    out = CoefficientSet(coeffs.ell_max, coeffs.num_shells, REAL, vals,
                         bandlimit=coeffs.bandlimit, provenance=coeffs.provenance)
    for ell in range(coeffs.ell_max + 1):
        f = real_to_complex_matrix(ell).conj().T @ coeffs.block(ell)
        if np.max(np.abs(f.imag), initial=0.0) > atol * scale:
            raise ValueError(f"coefficients at l={ell} do not describe a real signal")
        out.block(ell)[:] = f.real
    return out


def relative_error(estimate: CoefficientSet, truth: CoefficientSet) -> float:
    """||truth - estimate||_F / ||truth||_F over all coefficients."""
    if (estimate.ell_max, estimate.num_shells) != (truth.ell_max, truth.num_shells):
        raise ValueError("coefficient sets have different shapes")
    a = estimate.to_real().values
    b = truth.to_real().values
    return float(np.linalg.norm(b - a) / np.linalg.norm(b))


def random_coefficients(seed, ell_max: int, num_shells: int, basis: str = REAL) -> CoefficientSet:
    """i.i.d. standard normal real-basis coefficients, deterministic per seed."""
    rng = np.random.default_rng(seed)
    c = CoefficientSet(ell_max, num_shells, REAL, rng.standard_normal(num_coefficients(ell_max, num_shells)),
                       provenance=f"random_coefficients(seed={seed})")
    return c if basis == REAL else real_to_complex(c)


# ---------------------------------------------------------------------------
# volumes


@dataclass
class VolumeGrid:
    """Cubic voxel volume.  ``data[k, j, i]`` is the voxel at x=i, y=j, z=k,
    so the C-order flattening has x fastest, then y, then z."""

    data: np.ndarray
    voxel_size: float = 1.0

    def __post_init__(self):
        d = np.asarray(self.data, dtype=float)
        if d.ndim == 1:
            n = round(d.size ** (1 / 3))
            if n**3 != d.size:
                raise ValueError("flat data length is not a perfect cube")
            d = d.reshape(n, n, n)
        if d.ndim != 3 or len(set(d.shape)) != 1:
            raise ValueError(f"volume must be cubic, got shape {d.shape}")
        if d.shape[0] < 3:
            raise ValueError("volume side must be at least 3")
        self.data = np.ascontiguousarray(d)

    @property
    def n(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True)
class ExpansionConfig:
    ell_max: int
    num_shells: int
    regularization: float = 0.0
    norm_numerator: float = specfun.RADIAL_NORM_DEFAULT

    def __post_init__(self):
        if self.ell_max < 0 or self.num_shells < 1:
            raise ValueError("need ell_max >= 0 and num_shells >= 1")
        if self.regularization < 0:
            raise ValueError("regularization must be non-negative")


@lru_cache(maxsize=16)
def voxel_geometry(n: int):
    """Spherical coordinates of every voxel centre of an n^3 grid.

    Voxel index v maps to p = (v - c0) / ((n-1)/2), c0 = (n-1)/2.  Returns
    ``(mask, r, theta, phi)`` where ``mask`` is the flat boolean r <= 1
    selection and the coordinate arrays cover only the selected voxels.
    """
    c0 = (n - 1) / 2.0
    ax = (np.arange(n) - c0) / c0
    z, y, x = np.meshgrid(ax, ax, ax, indexing="ij")
    x, y, z = x.ravel(), y.ravel(), z.ravel()
    r = np.sqrt(x * x + y * y + z * z)
    mask = r <= 1.0 + 1e-12
    x, y, z, r = x[mask], y[mask], z[mask], np.minimum(r[mask], 1.0)
    theta = np.arccos(np.clip(np.divide(z, r, out=np.ones_like(z), where=r > 0), -1.0, 1.0))
    phi = np.mod(np.arctan2(y, x), 2 * np.pi)
    for a in (mask, r, theta, phi):
        a.setflags(write=False)
    return mask, r, theta, phi


def design_matrix(r, theta, phi, ell_max, num_shells, norm_numerator=specfun.RADIAL_NORM_DEFAULT):
    """Real-basis design: one column per (l, m, s) in flat order."""
    r = np.asarray(r, float)
    ylm = specfun.real_sph_harm_table(ell_max, theta, phi)
    cols = []
    for ell in range(ell_max + 1):
        rad = np.stack([
            specfun.radial_basis(specfun.radial_spec(ell, s, norm_numerator), r)
            for s in range(1, num_shells + 1)
        ])
        blk = ylm[ell * ell : (ell + 1) ** 2, None, :] * rad[None, :, :]
        cols.append(blk.reshape(-1, r.size))
    return np.concatenate(cols).T


class ShellExpansion:
    """Precomputed design matrix and SVD for one (grid size, l_max, R)."""

    def __init__(self, n: int, config: ExpansionConfig):
        self.n = n
        self.config = config
        self.mask, r, theta, phi = voxel_geometry(n)
        ncoef = num_coefficients(config.ell_max, config.num_shells)
        if r.size < ncoef:
            raise ValueError(
                f"underdetermined expansion: {r.size} in-ball voxels < {ncoef} basis functions"
            )
        self.design = design_matrix(r, theta, phi, config.ell_max, config.num_shells, config.norm_numerator)
        u, s, vt = np.linalg.svd(self.design, full_matrices=False)
        self.condition = float(s[0] / s[-1]) if s[-1] > 0 else math.inf
        lam = config.regularization
        filt = s / (s * s + lam) if lam > 0 else np.where(s > s[0] * 1e-14, 1.0 / np.where(s > 0, s, 1.0), 0.0)
        # explicit pseudo-inverse: repeated fits of noisy grids reuse it
        self._pinv = (vt.T * filt) @ u.T

    def fit(self, grid: VolumeGrid) -> CoefficientSet:
        if grid.n != self.n:
            raise ValueError(f"grid size {grid.n} != expansion size {self.n}")
        flat = grid.data.reshape(-1)
        if not np.all(np.isfinite(flat)):
            raise ValueError("volume contains non-finite voxels")
        vals = self._pinv @ flat[self.mask]
        cfg = self.config
        return CoefficientSet(cfg.ell_max, cfg.num_shells, REAL, vals,
                              provenance=f"expand_volume(n={self.n}, c=0.5)")

    def render(self, coeffs: CoefficientSet) -> VolumeGrid:
        cfg = self.config
        if (coeffs.ell_max, coeffs.num_shells) != (cfg.ell_max, cfg.num_shells):
            raise ValueError("coefficient set does not match the expansion shape")
        out = np.zeros(self.n**3)
        out[self.mask] = self.design @ coeffs.to_real().values
        return VolumeGrid(out.reshape(self.n, self.n, self.n))


@lru_cache(maxsize=8)
def _expansion(n: int, config: ExpansionConfig) -> ShellExpansion:
    return ShellExpansion(n, config)


def expand_volume(grid: VolumeGrid, config: ExpansionConfig):
    """Least-squares fit of the real shell basis to the in-ball voxels.

    Returns ``(coefficients, condition)`` with the design-matrix condition
    number.
    """
    if not np.all(np.isfinite(grid.data)):
        raise ValueError("volume contains non-finite voxels")
    exp = _expansion(grid.n, config)
    return exp.fit(grid), exp.condition


def render_volume(coeffs: CoefficientSet, n: int, norm_numerator: float = specfun.RADIAL_NORM_DEFAULT) -> VolumeGrid:
    """Evaluate the truncated expansion at each voxel centre; zero outside r <= 1."""
    if n < 3:
        raise ValueError("grid side must be at least 3")
    cfg = ExpansionConfig(coeffs.ell_max, coeffs.num_shells, norm_numerator=norm_numerator)
    mask, r, theta, phi = voxel_geometry(n)
    out = np.zeros(n**3)
    out[mask] = design_matrix(r, theta, phi, cfg.ell_max, cfg.num_shells, norm_numerator) @ coeffs.to_real().values
    return VolumeGrid(out.reshape(n, n, n))


def evaluate_points(coeffs: CoefficientSet, points, norm_numerator: float = specfun.RADIAL_NORM_DEFAULT) -> np.ndarray:
    """Evaluate the expansion at Cartesian points inside the unit ball."""
    p = np.atleast_2d(np.asarray(points, float))
    r = np.linalg.norm(p, axis=1)
    if np.any(r > 1.0 + 1e-12):
        raise ValueError("points must lie in the unit ball")
    r = np.minimum(r, 1.0)
    theta = np.arccos(np.clip(np.divide(p[:, 2], r, out=np.ones_like(r), where=r > 0), -1, 1))
    phi = np.mod(np.arctan2(p[:, 1], p[:, 0]), 2 * np.pi)
    d = design_matrix(r, theta, phi, coeffs.ell_max, coeffs.num_shells, norm_numerator)
    return d @ coeffs.to_real().values


# ---------------------------------------------------------------------------
# file formats

COEFF_FORMAT = "orbitshells.coefficients"


def coefficients_to_dict(coeffs: CoefficientSet) -> dict:
    if coeffs.basis == REAL:
        values = [float(v) for v in coeffs.values]
    else:
        values = [[float(v.real), float(v.imag)] for v in coeffs.values]
    return {
        "format": COEFF_FORMAT,
        "ell_max": coeffs.ell_max,
        "num_shells": coeffs.num_shells,
        "basis": coeffs.basis,
        "bandlimit": coeffs.bandlimit,
        "provenance": coeffs.provenance,
        "values": values,
    }


def coefficients_from_dict(d: dict) -> CoefficientSet:
    try:
        ell_max, R, basis = int(d["ell_max"]), int(d["num_shells"]), d["basis"]
        raw = d["values"]
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed coefficient file: {exc}") from None
    if basis not in (REAL, COMPLEX):
        raise FormatError(f"unknown basis {basis!r}")
    if len(raw) != num_coefficients(ell_max, R):
        raise FormatError("coefficient count does not match ell_max and num_shells")
    vals = np.array([complex(v[0], v[1]) if isinstance(v, (list, tuple)) else complex(v) for v in raw])
    if basis == REAL:
        if np.any(vals.imag != 0):
            raise FormatError("real-basis file contains imaginary parts")
        vals = vals.real
    return CoefficientSet(ell_max, R, basis, vals, bandlimit=float(d.get("bandlimit", 0.5)),
                          provenance=str(d.get("provenance", "")))


def save_coefficients(coeffs: CoefficientSet, path) -> None:
    Path(path).write_text(json.dumps(coefficients_to_dict(coeffs)))


def load_coefficients(path) -> CoefficientSet:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON ({exc})") from None
    return coefficients_from_dict(d)


RAW_F64 = "raw_f64"
MRC = "mrc"


def save_volume(grid: VolumeGrid, path, format: str = RAW_F64) -> None:
    """Write ``{"n": N}\\n`` followed by N^3 little-endian float64 (x fastest)."""
    if format != RAW_F64:
        raise ValueError(f"saving supports {RAW_F64!r} only")
    with open(path, "wb") as fh:
        fh.write((json.dumps({"n": grid.n}) + "\n").encode())
        fh.write(grid.data.astype("<f8").tobytes())


def _read_raw_f64(path) -> VolumeGrid:
    blob = Path(path).read_bytes()
    nl = blob.find(b"\n")
    if nl < 0:
        raise FormatError(f"{path}: missing header line")
    try:
        n = int(json.loads(blob[:nl])["n"])
    except (ValueError, KeyError, TypeError):
        raise FormatError(f"{path}: malformed header") from None
    body = blob[nl + 1 :]
    if len(body) != 8 * n**3:
        raise FormatError(f"{path}: expected {8 * n**3} data bytes, found {len(body)}")
    return VolumeGrid(np.frombuffer(body, dtype="<f8").reshape(n, n, n).copy())


def mrc_data_offset(header: bytes) -> int:
    nsymbt = int(np.frombuffer(header[92:96], "<i4")[0])
    return 1024 + nsymbt


def _read_mrc(path) -> VolumeGrid:
    blob = Path(path).read_bytes()
    if len(blob) < 1024:
        raise FormatError(f"{path}: truncated MRC header")
    nx, ny, nz, mode = (int(v) for v in np.frombuffer(blob[:16], "<i4"))
    if mode != 2:
        raise FormatError(f"{path}: unsupported MRC mode {mode} (only mode 2, float32)")
    if not nx == ny == nz:
        raise FormatError(f"{path}: non-cubic volume {nx}x{ny}x{nz}")
    off = mrc_data_offset(blob)
    count = nx * ny * nz
    if len(blob) < off + 4 * count:
        raise FormatError(f"{path}: truncated MRC data")
    data = np.frombuffer(blob, "<f4", count=count, offset=off).astype(float).reshape(nz, ny, nx)
    mx = int(np.frombuffer(blob[28:32], "<i4")[0])
    xlen = float(np.frombuffer(blob[40:44], "<f4")[0])
    vsize = xlen / mx if mx > 0 and xlen > 0 else 1.0
    return VolumeGrid(data, voxel_size=vsize)


def load_volume(path, format: str = RAW_F64) -> VolumeGrid:
    if format == RAW_F64:
        return _read_raw_f64(path)
    if format == MRC:
        return _read_mrc(path)
    raise ValueError(f"unknown volume format {format!r}")
