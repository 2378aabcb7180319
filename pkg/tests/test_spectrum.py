import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from morse_ruelle.acceptance import brute_force_multiplicity, brute_force_spectrum
from morse_ruelle.spectrum import (
    CutoffTooLarge,
    DimensionTooLarge,
    ExponentData,
    enumerate_resonances,
    even_odd_cancellation,
    multiplicity_alpha,
    spectral_gap,
    weyl_check,
    weyl_leading,
)

SQRT2 = math.sqrt(2.0)
TORUS = [ExponentData(0, 0, (1.0, SQRT2)), ExponentData(1, 1, (-1.0, SQRT2)),
         ExponentData(2, 1, (-SQRT2, 1.0)), ExponentData(3, 2, (-1.0, -SQRT2))]


@st.composite
def exponent_sets(draw, max_n=3):
    n = draw(st.integers(1, max_n))
    pts = []
    for i in range(draw(st.integers(1, 3))):
        r = draw(st.integers(0, n))
        mags = sorted(draw(st.lists(st.floats(0.6, 3.0), min_size=n, max_size=n)))
        pts.append(ExponentData(i, r, tuple(-m if j < r else m for j, m in enumerate(mags))))
    return n, pts


def test_torus_degree0_table():
    table = enumerate_resonances(TORUS, 0, 3.0)
    expected = [0, 1, SQRT2, 2, 1 + SQRT2, 2 * SQRT2, 3]
    np.testing.assert_allclose(table.lambdas, expected, atol=1e-12)
    assert table.multiplicities.tolist() == [1, 2, 2, 2, 4, 2, 2]
    assert not table.exact


def test_torus_degree1_kernel():
    table = enumerate_resonances(TORUS, 1, 0.5)
    assert table.lambdas.tolist() == [0.0]
    assert table.multiplicities.tolist() == [2]


def test_single_point_kernel_witness():
    for r in range(3):
        pt = ExponentData(0, r, tuple(-1.3 if j < r else 1.7 for j in range(2)))
        table = enumerate_resonances([pt], r, 0.5, exact=True)
        (entry,) = table.entries
        (w,) = entry.witnesses
        assert entry.lam == 0.0 and w.I == () and w.J == () and w.alpha == (0, 0)


@settings(max_examples=60, deadline=None)
@given(data=exponent_sets(), k=st.integers(0, 3), Lam=st.floats(1.0, 6.0))
def test_matches_brute_force(data, k, Lam):
    n, pts = data
    k = min(k, n)
    table = enumerate_resonances(pts, k, Lam, exact=False)
    oracle = brute_force_spectrum([(p.index, p.exponents) for p in pts], k, Lam)
    assert len(table.entries) == len(oracle)
    for e, (lam, m) in zip(table.entries, oracle):
        assert abs(e.lam - lam) <= 1e-12 and e.multiplicity == m


@settings(max_examples=40, deadline=None)
@given(data=exponent_sets(), k=st.integers(0, 3), L1=st.floats(0.5, 4.0), L2=st.floats(0.5, 4.0))
def test_cutoff_monotone_prefix(data, k, L1, L2):
    n, pts = data
    k = min(k, n)
    lo, hi = sorted((L1, L2))
    a = enumerate_resonances(pts, k, lo, exact=False)
    b = enumerate_resonances(pts, k, hi, exact=False)
    m = len(a.entries)
    assert b.lambdas[:m].tolist() == a.lambdas.tolist()
    assert b.multiplicities[:m].tolist() == a.multiplicities.tolist()


@settings(max_examples=40, deadline=None)
@given(data=exponent_sets(), k=st.integers(0, 3))
def test_duality_under_sign_reversal(data, k):
    n, pts = data
    k = min(k, n)
    flipped = [ExponentData(p.id, n - p.index, tuple(sorted(-c for c in p.exponents))) for p in pts]
    a = enumerate_resonances(pts, k, 4.0, exact=False)
    b = enumerate_resonances(flipped, n - k, 4.0, exact=False)
    np.testing.assert_allclose(a.lambdas, b.lambdas, atol=1e-12)
    assert a.multiplicities.tolist() == b.multiplicities.tolist()


@settings(max_examples=100)
@given(n=st.integers(1, 6), data=st.data())
def test_multiplicity_bounds(n, data):
    r = data.draw(st.integers(0, n))
    k = data.draw(st.integers(0, n))
    alpha = data.draw(st.lists(st.integers(0, 3), min_size=n, max_size=n))
    rec = ExponentData(0, r, tuple(-1.0 if j < r else 1.0 for j in range(n)))
    m = multiplicity_alpha(rec, alpha, k)
    assert 0 <= m <= 2**n
    assert m == brute_force_multiplicity(n, r, alpha, k)
    if all(a >= 1 for a in alpha):
        assert m == math.comb(n, k)
    if not any(alpha):
        assert m == (k == r)


def test_multiplicity_dimension_guard():
    rec = ExponentData(0, 0, tuple([1.0] * 21))
    with pytest.raises(DimensionTooLarge):
        multiplicity_alpha(rec, [0] * 21, 0)


def test_cutoff_cap():
    with pytest.raises(CutoffTooLarge):
        enumerate_resonances(TORUS, 0, 50.0, cap=100)


def test_weyl_torus():
    res = weyl_check(TORUS, 0, 200.0)
    assert res["leading"] == pytest.approx(SQRT2 * 200.0**2)
    assert res["relative_gap"] <= 0.03
    ratio = weyl_check(TORUS, 0, 100.0)["count"] / weyl_check(TORUS, 0, 50.0)["count"]
    assert 3.7 <= ratio <= 4.3


def test_weyl_leading_symmetric():
    assert weyl_leading(TORUS, 0, 10.0) == pytest.approx(weyl_leading(TORUS, 2, 10.0))


def test_even_odd_torus():
    groups = even_odd_cancellation(TORUS, 4.0)
    assert groups[0]["multiplicities"] == [1, 2, 1] and groups[0]["alternating_sum"] == 0
    at1 = next(g for g in groups if abs(g["lambda"] - 1.0) < 1e-9)
    assert at1["multiplicities"] == [2, 4, 2]
    assert all(g["alternating_sum"] == 0 for g in groups)


def test_even_odd_quadratic_sphere(qsphere_records):
    groups = even_odd_cancellation(qsphere_records, 6.0)
    assert groups[0]["multiplicities"] == [2, 2, 2] and groups[0]["alternating_sum"] == 2
    assert all(g["alternating_sum"] == 0 for g in groups[1:])


def test_spectral_gap():
    assert spectral_gap(TORUS, 0) == pytest.approx(1.0)
