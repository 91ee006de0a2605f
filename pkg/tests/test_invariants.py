import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sympy.physics.wigner import clebsch_gordan as sympy_cg

from orbitshells.errors import FormatError
from orbitshells.invariants import (
    BispectrumTable,
    average_bundles,
    bispectrum,
    bundle_from_dict,
    bundle_to_dict,
    compute_invariants,
    degree2,
    deserialize_bundle,
    ell_triples,
    enumerate_triples,
    serialize_bundle,
)
from orbitshells.model import random_coefficients
from orbitshells.rotation import random_rotation, rotate_coefficients


def _naive_bispectrum(cc, l1, l2, l3, s1, s2, s3):
    """Direct definition with exact CG values from sympy."""
    total = 0j
    for m1 in range(-l1, l1 + 1):
        for m2 in range(-l2, l2 + 1):
            m3 = -m1 - m2
            if abs(m3) > l3:
                continue
            cg = float(sympy_cg(l2, l3, l1, m2, m3, -m1))
            total += (-1) ** m1 * cg * cc[l1, m1, s1] * cc[l2, m2, s2] * cc[l3, m3, s3]
    return total


def test_triple_enumeration_matches_brute_force():
    L, R = 4, 3
    brute = set()
    for (la, sa), (lb, sb), (lc, sc) in itertools.product(itertools.product(range(L + 1), range(1, R + 1)), repeat=3):
        ls = sorted([la, lb, lc])
        if ls[2] > ls[0] + ls[1]:
            continue
        # canonical representative of the multiset of (l, s) pairs
        (a, x), (b, y), (c, z) = sorted([(la, sa), (lb, sb), (lc, sc)])
        brute.add((a, b, c, x, y, z))
    keys = enumerate_triples(L, R)
    assert keys == sorted(keys)
    assert set(keys) == brute
    assert len(ell_triples(10)) == 161


@pytest.mark.slow
def test_bispectrum_matches_definition():
    c = random_coefficients(4, 3, 2)
    cc = c.to_complex()
    table = bispectrum(c)
    for key in enumerate_triples(3, 2):
        assert table[key] == pytest.approx(_naive_bispectrum(cc, *key), abs=1e-12)


def test_value_any_ordering_matches_definition():
    c = random_coefficients(6, 3, 2)
    cc = c.to_complex()
    table = bispectrum(c)
    for l1, l2, l3 in [(1, 2, 3), (3, 1, 2), (2, 3, 1), (2, 2, 1), (1, 3, 3), (3, 2, 2)]:
        for s1, s2, s3 in itertools.product(range(1, 3), repeat=3):
            assert table.value(l1, l2, l3, s1, s2, s3) == pytest.approx(
                _naive_bispectrum(cc, l1, l2, l3, s1, s2, s3), abs=1e-12)
    assert table.value(0, 1, 3, 1, 1, 1) == 0j  # triangle violated
    with pytest.raises(KeyError):
        table[(2, 1, 1, 1, 1, 1)]
    with pytest.raises(KeyError):
        table[(1, 1, 2, 2, 1, 1)]


def test_parity_real_or_imaginary():
    # entries vanishing by symmetry have no scale of their own
    table = bispectrum(random_coefficients(1, 6, 3))
    scale = table.max_abs()
    for key, val in table.items():
        if sum(key[:3]) % 2:
            assert abs(val.real) <= 1e-10 * scale
        else:
            assert abs(val.imag) <= 1e-10 * scale


def test_gram_is_complex_gram():
    c = random_coefficients(2, 4, 3)
    cc = c.to_complex()
    for ell, g in enumerate(degree2(c)):
        a = cc.block(ell)
        np.testing.assert_allclose(g, (a.conj().T @ a).real, atol=1e-13)
        np.testing.assert_allclose((a.conj().T @ a).imag, 0, atol=1e-13)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10**6), st.integers(0, 10**6))
def test_bundle_rotation_invariant(seed, rot_seed):
    c = random_coefficients(seed, 5, 2)
    a = compute_invariants(c)
    b = compute_invariants(rotate_coefficients(c, random_rotation(rot_seed)))
    np.testing.assert_allclose(b.means, a.means, atol=1e-12)
    for ga, gb in zip(a.gram, b.gram):
        np.testing.assert_allclose(gb, ga, atol=1e-11)
    np.testing.assert_allclose(b.bispectrum.flat(), a.bispectrum.flat(), atol=1e-10)


def test_complex_input_gives_same_bundle():
    c = random_coefficients(3, 4, 2)
    a, b = compute_invariants(c), compute_invariants(c.to_complex())
    np.testing.assert_allclose(a.bispectrum.flat(), b.bispectrum.flat(), atol=1e-13)
    np.testing.assert_allclose(a.gram[3], b.gram[3], atol=1e-13)


def test_average_bundles():
    a = compute_invariants(random_coefficients(1, 3, 2))
    b = compute_invariants(random_coefficients(2, 3, 2))
    avg = average_bundles([a, b])
    np.testing.assert_allclose(avg.bispectrum.flat(), (a.bispectrum.flat() + b.bispectrum.flat()) / 2)
    np.testing.assert_allclose(avg.gram[2], (a.gram[2] + b.gram[2]) / 2)
    with pytest.raises(ValueError):
        average_bundles([])


def test_flat_round_trip_fills_tied_orderings():
    c = random_coefficients(5, 4, 3)
    t = bispectrum(c)
    back = BispectrumTable.from_flat(4, 3, t.flat())
    for trip in t.triples():
        np.testing.assert_allclose(back.block(*trip), t.block(*trip), atol=1e-13)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10**6), st.integers(0, 4), st.integers(1, 3))
def test_bundle_json_round_trip_exact(seed, ell_max, shells):
    bundle = compute_invariants(random_coefficients(seed, ell_max, shells))
    back = bundle_from_dict(json.loads(json.dumps(bundle_to_dict(bundle))))
    np.testing.assert_array_equal(back.means, bundle.means)
    for ga, gb in zip(back.gram, bundle.gram):
        np.testing.assert_array_equal(ga, gb)
    np.testing.assert_array_equal(back.bispectrum.flat(), bundle.bispectrum.flat())


def test_bundle_file_round_trip(tmp_path):
    bundle = compute_invariants(random_coefficients(0, 3, 2))
    p = tmp_path / "b.json"
    serialize_bundle(bundle, p)
    back = deserialize_bundle(p)
    np.testing.assert_array_equal(back.bispectrum.flat(), bundle.bispectrum.flat())


def test_bundle_format_errors(tmp_path):
    d = bundle_to_dict(compute_invariants(random_coefficients(0, 2, 2)))
    bad = dict(d, format_version=99)
    with pytest.raises(FormatError, match="version"):
        bundle_from_dict(bad)
    bad = {k: v for k, v in d.items() if k != "gram"}
    with pytest.raises(FormatError, match="gram"):
        bundle_from_dict(bad)
    bad = dict(d, bispectrum=d["bispectrum"][:-1])
    with pytest.raises(FormatError, match="entries"):
        bundle_from_dict(bad)
    recs = [dict(r) for r in d["bispectrum"]]
    recs[0], recs[1] = recs[1], recs[0]
    with pytest.raises(FormatError, match="key"):
        bundle_from_dict(dict(d, bispectrum=recs))
    p = tmp_path / "x.json"
    p.write_text("[1, 2")
    with pytest.raises(FormatError):
        deserialize_bundle(p)


def test_partial_bundle_marks_missing_entries():
    d = bundle_to_dict(compute_invariants(random_coefficients(0, 3, 2)))
    d["bispectrum"] = [r for r in d["bispectrum"] if r["l3"] != 3]
    b = bundle_from_dict(d, allow_missing=True)
    assert np.isnan(b.bispectrum.block(1, 2, 3)).all()
    assert not np.isnan(b.bispectrum.block(1, 2, 2)).any()
