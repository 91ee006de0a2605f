import json
import math
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special

from orbitshells import model, specfun
from orbitshells.errors import FormatError
from orbitshells.model import (
    CoefficientSet,
    ExpansionConfig,
    VolumeGrid,
    evaluate_points,
    expand_volume,
    random_coefficients,
    real_to_complex_matrix,
    relative_error,
    render_volume,
)
from orbitshells.rotation import RotationSpec, rotate_coefficients


def test_layout_and_indexing():
    c = CoefficientSet.zeros(3, 2)
    assert c.size == 16 * 2
    c[2, -1, 2] = 5.0
    assert c.block(2)[1, 1] == 5.0
    assert c.index(0, 0, 1) == 0
    assert c.index(1, -1, 1) == 2
    with pytest.raises(IndexError):
        c.index(4, 0, 1)
    with pytest.raises(IndexError):
        c.index(1, 0, 0)
    with pytest.raises(ValueError):
        CoefficientSet(2, 2, "real", np.zeros(5))
    with pytest.raises(ValueError):
        CoefficientSet(1, 1, "real", np.array([1, 1j, 0, 0]))


def test_truncated_and_copy_are_independent(small_coeffs):
    t = small_coeffs.truncated(2)
    assert t.ell_max == 2 and t.size == 9 * 3
    t.values[0] = 99.0
    assert small_coeffs.values[0] != 99.0
    np.testing.assert_array_equal(t.values[1:], small_coeffs.values[1 : t.size])


@pytest.mark.parametrize("ell", range(7))
def test_real_to_complex_matrix_is_unitary(ell):
    t = real_to_complex_matrix(ell)
    np.testing.assert_allclose(t.conj().T @ t, np.eye(2 * ell + 1), atol=1e-15)


def test_real_and_complex_expansions_describe_same_function():
    # oracle: scipy harmonics evaluated directly
    rng = np.random.default_rng(3)
    theta, phi = np.arccos(rng.uniform(-1, 1, 30)), rng.uniform(0, 2 * np.pi, 30)
    for ell in range(5):
        f = rng.standard_normal(2 * ell + 1)
        a = real_to_complex_matrix(ell) @ f
        ms = range(-ell, ell + 1)
        complex_sum = sum(a[m + ell] * special.sph_harm_y(ell, m, theta, phi) for m in ms)
        real_sum = sum(f[m + ell] * specfun.sph_harm_real(ell, m, theta, phi) for m in ms)
        np.testing.assert_allclose(complex_sum.imag, 0.0, atol=1e-13)
        np.testing.assert_allclose(complex_sum.real, real_sum, atol=1e-13)


def test_complex_round_trip_and_conjugate_symmetry(small_coeffs):
    c = small_coeffs.to_complex()
    for ell in range(c.ell_max + 1):
        blk = c.block(ell)
        for m in range(1, ell + 1):
            np.testing.assert_allclose(blk[ell - m], (-1) ** m * blk[ell + m].conj(), atol=1e-15)
    np.testing.assert_allclose(c.to_real().values, small_coeffs.values, atol=1e-15)
    bad = c.copy()
    bad.block(1)[0, 0] += 1j
    with pytest.raises(ValueError):
        bad.to_real()


def test_relative_error_mixed_bases(small_coeffs):
    assert relative_error(small_coeffs.to_complex(), small_coeffs) < 1e-15
    other = small_coeffs.copy()
    other.values *= 1.1
    assert relative_error(other, small_coeffs) == pytest.approx(0.1)


def test_random_coefficients_deterministic():
    a = random_coefficients(4, 3, 2)
    b = random_coefficients(4, 3, 2)
    np.testing.assert_array_equal(a.values, b.values)
    assert not np.array_equal(a.values, random_coefficients(5, 3, 2).values)


def test_evaluate_points_matches_direct_formula():
    c = random_coefficients(1, 3, 2)
    rng = np.random.default_rng(0)
    pts = rng.uniform(-0.57, 0.57, (25, 3))
    r = np.linalg.norm(pts, axis=1)
    theta, phi = np.arccos(pts[:, 2] / r), np.arctan2(pts[:, 1], pts[:, 0])
    cc = c.to_complex()
    ref = np.zeros(len(pts), complex)
    for ell in range(4):
        for s in range(1, 3):
            u = specfun.bessel_zero(ell, s)
            rad = 4 / abs(special.spherical_jn(ell + 1, u)) * special.spherical_jn(ell, u * r)
            for m in range(-ell, ell + 1):
                ref += cc[ell, m, s] * rad * special.sph_harm_y(ell, m, theta, phi)
    np.testing.assert_allclose(ref.imag, 0, atol=1e-12)
    np.testing.assert_allclose(evaluate_points(c, pts), ref.real, atol=1e-12)


def test_voxel_orientation():
    # data[k, j, i] sits at x = i, y = j, z = k
    c = random_coefficients(2, 3, 2)
    n = 9
    vol = render_volume(c, n)
    c0 = (n - 1) / 2
    for k, j, i in [(4, 4, 6), (2, 5, 4), (6, 3, 3), (4, 1, 5)]:
        p = (np.array([i, j, k]) - c0) / c0
        assert vol.data[k, j, i] == pytest.approx(evaluate_points(c, p)[0], abs=1e-12)
    assert vol.data[0, 0, 0] == 0.0


def test_expand_render_round_trip_small():
    c = random_coefficients(11, 4, 3)
    grid = render_volume(c, 15)
    back, cond = expand_volume(grid, ExpansionConfig(4, 3))
    assert relative_error(back, c) < 1e-10
    assert 1.0 <= cond < 10


def test_constant_volume_has_cubic_symmetry():
    # the lattice is octahedrally symmetric, so only cubic harmonics
    # (l = 0, 4, ...) can appear; l = 1..3 vanish
    c, _ = expand_volume(VolumeGrid(np.ones((17, 17, 17))), ExpansionConfig(4, 3))
    for ell in (1, 2, 3):
        assert np.max(np.abs(c.block(ell))) < 1e-10
    assert np.max(np.abs(c.block(0))) > 0.1
    quarter_z = RotationSpec(math.pi / 2, 0.0, 0.0)
    quarter_y = RotationSpec(0.0, math.pi / 2, 0.0)
    for rot in (quarter_z, quarter_y):
        np.testing.assert_allclose(rotate_coefficients(c, rot).values, c.values, atol=1e-12)


def test_regularization_shrinks():
    c = random_coefficients(0, 3, 2)
    grid = render_volume(c, 11)
    plain, _ = expand_volume(grid, ExpansionConfig(3, 2))
    ridge, _ = expand_volume(grid, ExpansionConfig(3, 2, regularization=10.0))
    assert ridge.norm() < plain.norm()
    with pytest.raises(ValueError):
        ExpansionConfig(3, 2, regularization=-1.0)


def test_expand_rejects_bad_input():
    with pytest.raises(ValueError):
        VolumeGrid(np.zeros((4, 4, 5)))
    with pytest.raises(ValueError):
        VolumeGrid(np.zeros((2, 2, 2)))
    bad = np.zeros((7, 7, 7))
    bad[3, 3, 3] = np.nan
    with pytest.raises(ValueError):
        expand_volume(VolumeGrid(bad), ExpansionConfig(1, 1))
    with pytest.raises(ValueError, match="underdetermined"):
        expand_volume(VolumeGrid(np.zeros((5, 5, 5))), ExpansionConfig(6, 3))


def test_flat_volume_is_reshaped():
    assert VolumeGrid(np.arange(27.0)).n == 3


# ---------------------------------------------------------------------------
# file formats


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.integers(0, 6), st.integers(1, 4), st.sampled_from(["real", "complex"]))
def test_coefficient_json_round_trip_exact(seed, ell_max, shells, basis):
    c = random_coefficients(seed, ell_max, shells, basis)
    back = model.coefficients_from_dict(json.loads(json.dumps(model.coefficients_to_dict(c))))
    assert back.basis == c.basis and back.ell_max == ell_max and back.num_shells == shells
    np.testing.assert_array_equal(back.values, c.values)


def test_coefficient_file_round_trip(tmp_path, small_coeffs):
    p = tmp_path / "c.json"
    model.save_coefficients(small_coeffs, p)
    back = model.load_coefficients(p)
    np.testing.assert_array_equal(back.values, small_coeffs.values)
    assert back.provenance == small_coeffs.provenance


def test_coefficient_file_errors(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(FormatError):
        model.load_coefficients(p)
    d = model.coefficients_to_dict(random_coefficients(0, 1, 1))
    d["values"] = d["values"][:-1]
    with pytest.raises(FormatError):
        model.coefficients_from_dict(d)
    with pytest.raises(FormatError):
        model.coefficients_from_dict({"ell_max": 1})


def test_raw_volume_round_trip(tmp_path):
    data = np.random.default_rng(0).standard_normal((7, 7, 7))
    p = tmp_path / "v.raw"
    model.save_volume(VolumeGrid(data), p)
    np.testing.assert_array_equal(model.load_volume(p).data, data)
    blob = p.read_bytes()
    p.write_bytes(blob[:-8])
    with pytest.raises(FormatError):
        model.load_volume(p)


def _mrc_bytes(data, mode=2, nsymbt=0, cella=None):
    nz, ny, nx = data.shape
    header = bytearray(1024)
    struct.pack_into("<4i", header, 0, nx, ny, nz, mode)
    struct.pack_into("<3i", header, 28, nx, ny, nz)
    cella = cella or (float(nx), float(ny), float(nz))
    struct.pack_into("<3f", header, 40, *cella)
    struct.pack_into("<i", header, 92, nsymbt)
    header[208:212] = b"MAP "
    return bytes(header) + b"\x07" * nsymbt + data.astype("<f4").tobytes()


@pytest.mark.parametrize("nsymbt", [0, 80, 160])
def test_mrc_reader_honours_extended_header(tmp_path, nsymbt):
    data = np.random.default_rng(1).standard_normal((5, 5, 5)).astype(np.float32)
    p = tmp_path / "v.mrc"
    p.write_bytes(_mrc_bytes(data, nsymbt=nsymbt, cella=(10.0, 10.0, 10.0)))
    grid = model.load_volume(p, "mrc")
    np.testing.assert_array_equal(grid.data, data.astype(float))
    assert grid.voxel_size == pytest.approx(2.0)
    assert model.mrc_data_offset(p.read_bytes()) == 1024 + nsymbt


def test_mrc_reader_errors(tmp_path):
    data = np.zeros((5, 5, 5), np.float32)
    p = tmp_path / "v.mrc"
    p.write_bytes(_mrc_bytes(data, mode=1))
    with pytest.raises(FormatError, match="mode"):
        model.load_volume(p, "mrc")
    p.write_bytes(_mrc_bytes(np.zeros((4, 5, 5), np.float32)))
    with pytest.raises(FormatError, match="non-cubic"):
        model.load_volume(p, "mrc")
    p.write_bytes(_mrc_bytes(data)[:-4])
    with pytest.raises(FormatError, match="truncated"):
        model.load_volume(p, "mrc")
    p.write_bytes(b"\x00" * 100)
    with pytest.raises(FormatError):
        model.load_volume(p, "mrc")
    with pytest.raises(ValueError):
        model.load_volume(p, "tiff")
