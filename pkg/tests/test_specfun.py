import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special

from orbitshells import specfun


def _grid(n=400, seed=0):
    rng = np.random.default_rng(seed)
    return np.arccos(rng.uniform(-1, 1, n)), rng.uniform(0, 2 * np.pi, n)


@pytest.mark.parametrize("ell", range(0, 13))
def test_complex_harmonics_match_scipy(ell):
    theta, phi = _grid()
    for m in range(-ell, ell + 1):
        ours = specfun.sph_harm_complex(ell, m, theta, phi)
        ref = special.sph_harm_y(ell, m, theta, phi)
        np.testing.assert_allclose(ours, ref, atol=1e-13)


def test_real_harmonics_relation():
    theta, phi = _grid(50)
    for ell in range(6):
        for m in range(-ell, ell + 1):
            y = special.sph_harm_y(ell, abs(m), theta, phi)
            ref = y.real if m == 0 else math.sqrt(2) * (y.real if m > 0 else y.imag)
            np.testing.assert_allclose(specfun.sph_harm_real(ell, m, theta, phi), ref, atol=1e-13)


def test_table_layout_matches_pointwise():
    theta, phi = _grid(20)
    tab = specfun.complex_sph_harm_table(4, theta, phi)
    rtab = specfun.real_sph_harm_table(4, theta, phi)
    for ell in range(5):
        for m in range(-ell, ell + 1):
            np.testing.assert_allclose(tab[ell * ell + ell + m], specfun.sph_harm_complex(ell, m, theta, phi))
            np.testing.assert_allclose(rtab[ell * ell + ell + m], specfun.sph_harm_real(ell, m, theta, phi))


def test_harmonics_orthonormal_by_quadrature():
    # Gauss-Legendre in cos(theta) times a uniform azimuth rule is exact for
    # products of harmonics of degree <= 16
    L = 8
    x, w = np.polynomial.legendre.leggauss(L + 2)
    nphi = 2 * L + 2
    phi = 2 * np.pi * np.arange(nphi) / nphi
    th, ph = np.meshgrid(np.arccos(x), phi, indexing="ij")
    wts = (w[:, None] * np.full(nphi, 2 * np.pi / nphi)[None, :]).ravel()
    y = specfun.complex_sph_harm_table(L, th.ravel(), ph.ravel())
    gram = (y.conj() * wts) @ y.T
    np.testing.assert_allclose(gram, np.eye(gram.shape[0]), atol=1e-13)
    yr = specfun.real_sph_harm_table(L, th.ravel(), ph.ravel())
    np.testing.assert_allclose((yr * wts) @ yr.T, np.eye(gram.shape[0]), atol=1e-13)


def test_harmonic_argument_checks():
    with pytest.raises(ValueError):
        specfun.sph_harm_complex(2, 3, 0.1, 0.2)
    with pytest.raises(ValueError):
        specfun.sph_harm_real(-1, 0, 0.1, 0.2)
    with pytest.raises(ValueError):
        specfun.assoc_legendre(2, 0, 1.5)


def test_assoc_legendre_matches_scipy():
    x = np.linspace(-1, 1, 41)
    for ell in range(8):
        for m in range(ell + 1):
            np.testing.assert_allclose(specfun.assoc_legendre(ell, m, x), special.lpmv(m, ell, x), atol=1e-10)


@pytest.mark.parametrize("ell", [0, 1, 2, 5, 10, 16, 25])
def test_spherical_jn_matches_scipy(ell):
    x = np.concatenate([[0.0, 1e-8, 1e-3], np.linspace(0.01, 60, 3000)])
    ref = special.spherical_jn(ell, x)
    np.testing.assert_allclose(specfun.spherical_jn(ell, x), ref, rtol=1e-10, atol=1e-14)


def test_spherical_jn_scalar_and_origin():
    assert specfun.spherical_jn(0, 0.0) == 1.0
    assert specfun.spherical_jn(3, 0.0) == 0.0
    assert isinstance(specfun.spherical_jn(2, 1.5), float)


def _bisect(f, lo, hi):
    flo = f(lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


@pytest.mark.parametrize("ell", [0, 1, 3, 7, 12, 16])
def test_bessel_zeros_against_scan_and_bisection(ell):
    # independent oracle: sign changes of the scipy function on a fine grid,
    # refined by plain bisection
    x = np.linspace(1e-6, 60, 60001)
    f = special.spherical_jn(ell, x)
    idx = np.nonzero(np.sign(f[:-1]) * np.sign(f[1:]) < 0)[0][:6]
    for s, i in enumerate(idx, start=1):
        ref = _bisect(lambda t: special.spherical_jn(ell, t), x[i], x[i + 1])
        assert abs(specfun.bessel_zero(ell, s) - ref) < 1e-10


def test_bessel_zero_known_values():
    # j_0 zeros are k pi
    for s in range(1, 6):
        assert abs(specfun.bessel_zero(0, s) - s * math.pi) < 1e-12
    assert abs(specfun.bessel_zero(1, 1) - 4.493409457909064) < 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 16), st.integers(1, 8))
def test_zeros_are_roots_and_increasing(ell, s):
    z = specfun.bessel_zero(ell, s)
    assert abs(specfun.spherical_jn(ell, z)) < 1e-12
    if s > 1:
        assert specfun.bessel_zero(ell, s - 1) < z
    # interlacing with the next order
    assert z < specfun.bessel_zero(ell + 1, s)


def test_bessel_zero_rejects_bad_index():
    with pytest.raises(ValueError):
        specfun.bessel_zero(2, 0)
    with pytest.raises(ValueError):
        specfun.bessel_zero(-1, 1)


@pytest.mark.parametrize("ell", [0, 2, 5])
def test_radial_basis_normalization(ell):
    x, w = np.polynomial.legendre.leggauss(200)
    r, w = 0.5 * (x + 1), 0.5 * w
    rows = []
    for s in range(1, 5):
        rows.append(specfun.radial_basis(specfun.radial_spec(ell, s, specfun.RADIAL_NORM_ORTHONORMAL), r))
    g = np.array(rows) * (w * r * r) @ np.array(rows).T
    np.testing.assert_allclose(g, np.eye(4), atol=1e-12)
    # the default numerator is a uniform rescaling by 4 / sqrt(2)
    spec = specfun.radial_spec(ell, 1)
    assert spec.norm_factor == pytest.approx(4 / abs(special.spherical_jn(ell + 1, spec.zero)))
    np.testing.assert_allclose(specfun.radial_basis(spec, r), 2 * math.sqrt(2) * rows[0], rtol=1e-12)


def test_radial_basis_vanishes_at_boundary():
    for ell in range(4):
        for s in range(1, 4):
            assert abs(specfun.radial_basis(specfun.radial_spec(ell, s), 1.0)) < 1e-12
