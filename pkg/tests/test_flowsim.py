import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import torus_backward_exact
from morse_ruelle.flowsim import basin_map, count_connections, flow, integrate, limits, limits_batch

angles = st.floats(0.05, 2 * math.pi - 0.05, allow_nan=False)


def test_torus_backward_flow_closed_form(torus):
    rng = np.random.default_rng(1)
    X = rng.uniform(0, 2 * np.pi, (200, 2))
    for t in (0.5, 3.0, 8.0):
        got = torus.wrap(flow(torus, X, [-t], rtol=1e-11)[0])
        np.testing.assert_allclose(torus.displacement(got, torus_backward_exact(X, t)), 0.0, atol=1e-8)


@settings(max_examples=25, deadline=None)
@given(a=angles, b=angles, s=st.floats(0.1, 2.0), t=st.floats(0.1, 2.0))
def test_group_law(torus, a, b, s, t):
    x = np.array([[a, b]])
    one = flow(torus, x, [s + t], rtol=1e-11)[0]
    two = flow(torus, flow(torus, x, [s], rtol=1e-11)[0], [t], rtol=1e-11)[0]
    np.testing.assert_allclose(torus.displacement(one, two[0]), 0.0, atol=1e-8)


@settings(max_examples=25, deadline=None)
@given(a=angles, b=angles)
def test_value_increases_forward(qsphere, a, b):
    p = np.array([[math.sin(a / 2) * math.cos(b), math.sin(a / 2) * math.sin(b), math.cos(a / 2)]])
    vals = [qsphere.value(flow(qsphere, p, [t])[0])[0] for t in (0.1, 0.5, 1.0, 2.0)]
    assert all(v1 <= v2 + 1e-12 for v1, v2 in zip(vals, vals[1:]))
    # the projected flow stays on the sphere
    assert abs(np.linalg.norm(flow(qsphere, p, [3.0])[0]) - 1) < 1e-9


def test_jacobian_at_critical_point_is_matrix_exponential(torus, torus_records):
    for rec in torus_records:
        _, J = flow(torus, rec.position[None, :], [0.7], with_jacobian=True, rtol=1e-12)
        E = rec.eigenframe
        expected = E @ np.diag(np.exp(0.7 * rec.exponents)) @ E.T
        np.testing.assert_allclose(J[0, 0], expected, rtol=1e-9, atol=1e-10)


def test_jacobian_matches_finite_differences(qsphere):
    p = np.array([0.3, 0.5, math.sqrt(1 - 0.34)])
    _, J = flow(qsphere, p[None, :], [0.8], with_jacobian=True, rtol=1e-12)
    B = qsphere.tangent_basis(p)
    h = 1e-6
    for k in range(2):
        plus = flow(qsphere, (p + h * B[:, k])[None, :] / np.linalg.norm(p + h * B[:, k]), [0.8], rtol=1e-12)[0, 0]
        minus = flow(qsphere, (p - h * B[:, k])[None, :] / np.linalg.norm(p - h * B[:, k]), [0.8], rtol=1e-12)[0, 0]
        np.testing.assert_allclose(J[0, 0] @ B[:, k], (plus - minus) / (2 * h), atol=1e-6)


def test_integrate_records_steps(torus):
    tr = integrate(torus, [1.0, 2.0], -3.0)
    assert tr.times[0] == 0.0 and tr.times[-1] == pytest.approx(-3.0)
    assert np.all(np.diff(tr.times) < 0)


def test_torus_limits(torus, torus_records):
    alpha, omega = limits(torus, [1.0, 2.0], torus_records)
    assert torus_records[alpha].index == 0
    assert torus_records[omega].index == 2


def test_quadratic_sphere_basins_split_by_sign(qsphere, qsphere_records):
    X = np.array([[0.5, 0.5, 0.5], [-0.5, 0.2, 0.4], [0.9, -0.1, 0.1]])
    X /= np.linalg.norm(X, axis=1)[:, None]
    alpha, _ = limits_batch(qsphere, X, qsphere_records)
    signs = [np.sign(qsphere_records[i].position[0]) for i in alpha]
    assert signs == [1.0, -1.0, 1.0]


def test_basin_map_shape(torus, torus_records):
    bm = basin_map(torus, torus_records, grid_density=8)
    assert bm.grid.shape == (64, 2)
    assert set(bm.alpha_limit.tolist()) <= {r.id for r in torus_records}
    assert len(bm.to_rows()[0]) == 4


def test_torus_saddle_connections(torus, torus_records):
    minimum, saddle = torus_records[0], torus_records[1]
    con = count_connections(torus, torus_records, minimum, saddle)
    assert con.orbit_count == 2
    assert con.signed_count == 0
    assert con.offset_stable
