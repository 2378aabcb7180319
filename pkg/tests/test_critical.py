import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from morse_ruelle.critical import (
    NotCritical,
    check_hypotheses,
    integer_relation,
    lyapunov_exponents,
    sylvester_index,
)

SQRT2, SQRT3 = math.sqrt(2.0), math.sqrt(3.0)


def test_torus_critical_points(torus_records):
    recs = torus_records
    assert [r.index for r in recs] == [0, 1, 1, 2]
    pos = {tuple(np.round(r.position, 10)) for r in recs}
    assert pos == {(round(math.pi, 10), round(math.pi, 10)), (0.0, round(math.pi, 10)),
                   (round(math.pi, 10), 0.0), (0.0, 0.0)}
    np.testing.assert_allclose(recs[0].exponents, [1.0, SQRT2], atol=1e-10)
    np.testing.assert_allclose(recs[3].exponents, [-SQRT2, -1.0], atol=1e-10)
    for r in recs:
        assert r.index == int(np.sum(r.exponents < 0))


def test_quadratic_sphere_critical_points(qsphere_records):
    recs = qsphere_records
    assert [r.index for r in recs] == [0, 0, 1, 1, 2, 2]
    # exponents at +-e_i are 2(a_j - a_i)
    np.testing.assert_allclose(recs[0].exponents, [2.0, 2 * SQRT3], atol=1e-9)
    np.testing.assert_allclose(recs[2].exponents, [-2.0, 2 * (SQRT3 - 1)], atol=1e-9)
    for r in recs:
        assert np.linalg.norm(r.position) == pytest.approx(1.0, abs=1e-12)


def test_height_sphere(hsphere_records):
    south, north = hsphere_records
    np.testing.assert_allclose(south.position, [0, 0, -1], atol=1e-12)
    np.testing.assert_allclose(south.exponents, [1.0, 1.0], atol=1e-10)
    np.testing.assert_allclose(north.exponents, [-1.0, -1.0], atol=1e-10)


def test_torus_hypotheses(torus_records):
    rep = check_hypotheses(torus_records)
    assert rep.excellent
    assert rep.rationally_independent_per_point
    assert not rep.rationally_independent_joint
    assert rep.witnesses


def test_quadratic_sphere_not_excellent(qsphere_records):
    rep = check_hypotheses(qsphere_records)
    assert not rep.excellent
    assert any(w for w in rep.witnesses)


def test_eigenframe_diagonalizes(torus, torus_records):
    for rec in torus_records:
        E = rec.eigenframe
        np.testing.assert_allclose(E.T @ E, np.eye(2), atol=1e-12)
        L = torus.vector_field_jacobian(rec.position[None, :])[0]
        np.testing.assert_allclose(L @ E, E * rec.exponents, atol=1e-10)


def test_not_critical(torus):
    with pytest.raises(NotCritical):
        lyapunov_exponents(torus, [0.5, 0.5])


def test_integer_relation():
    k = integer_relation([1.0, SQRT2, 1.0 + SQRT2], 3, 1e-9)
    assert k is not None and abs(k @ [1.0, SQRT2, 1.0 + SQRT2]) < 1e-9
    assert integer_relation([1.0, SQRT2], 12, 1e-9) is None
    assert integer_relation([1.0, SQRT3, SQRT2], 12, 1e-9) is None


@settings(max_examples=50)
@given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=9, max_size=9), st.integers(0, 3))
def test_sylvester_index_counts_negative_eigenvalues(vals, shift):
    A = np.array(vals).reshape(3, 3)
    S = A + A.T
    w = np.linalg.eigvalsh(S)
    if np.min(np.abs(w)) < 1e-6:
        return
    assert sylvester_index(S) == int(np.sum(w < 0))
