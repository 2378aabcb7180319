import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import torus_backward_exact
from morse_ruelle import correlation as co
from morse_ruelle.flowsim import flow
from morse_ruelle.manifold import FormSample, sphere_latlon_grid, torus_grid, volume_form, wedge_pair
from morse_ruelle.spectrum import SpectrumEntry, SpectrumTable, enumerate_resonances

T = np.linspace(0.0, 25.0, 251)


def _trace(y):
    return co.CorrelationTrace(0, T, y, co._tail_mean(y))


def _fit(y, k):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", co.IllConditioned)
        return co.fit_decay(_trace(y), k)


def generic_torus_psi():
    def psi1(X):
        a1, a2 = X[:, 0], X[:, 1]
        return np.cos(a1) + np.cos(a2) + 0.8 * np.sin(a1) + 0.5 * np.sin(a2) + 0.3 * np.sin(a1 + 2 * a2)

    def psi2(X):
        t1, t2 = X[:, 0], X[:, 1]
        return 1 + 0.5 * np.cos(t1) + 0.3 * np.sin(t1) + 0.3 * np.sin(t2) + 0.2 * np.cos(t1 - t2)

    return psi1, psi2


# ---------------------------------------------------------------- fitting


def test_fit_pure_exponentials():
    y = -2 + 1.5 * np.exp(-T) + 0.7 * np.exp(-math.sqrt(2) * T) + 0.4 * np.exp(-2 * T)
    fit = _fit(y, 3)
    np.testing.assert_allclose(fit.rates, [1.0, math.sqrt(2), 2.0], rtol=1e-3)
    assert fit.polynomial_degree == [0, 0, 0]
    assert fit.constant == pytest.approx(-2.0, abs=1e-10)
    assert fit.adequate


@settings(max_examples=15, deadline=None)
@given(a=st.floats(0.3, 3.0), b=st.floats(-3.0, 3.0).filter(lambda v: abs(v) > 0.2),
       lam=st.floats(0.6, 1.5), ratio=st.floats(1.5, 2.5), c=st.floats(-5, 5))
def test_fit_two_rates_property(a, b, lam, ratio, c):
    y = c + a * np.exp(-lam * T) + b * np.exp(-ratio * lam * T)
    fit = _fit(y, 2)
    assert all(r > 0 for r in fit.rates)
    assert fit.rates == sorted(fit.rates)
    assert fit.rates[0] == pytest.approx(lam, rel=0.02)
    assert all(d == 0 for d in fit.polynomial_degree)


def test_fit_detects_jordan_at_leading_rate():
    y = 3 + (1 + 0.5 * T) * np.exp(-T) + 0.6 * np.exp(-2.5 * T)
    fit = _fit(y, 3)
    assert fit.rates[0] == pytest.approx(1.0, rel=1e-3)
    assert fit.polynomial_degree[0] == 1


def test_fit_merges_close_rates_with_warning():
    y = -2 + 1.5 * np.exp(-T) + (0.8 + 1.2 * T) * np.exp(-2 * T)
    with pytest.warns(co.IllConditioned):
        fit = co.fit_decay(_trace(y), 3)
    np.testing.assert_allclose(fit.rates, [1.0, 2.0], rtol=1e-4)
    assert fit.polynomial_degree == [0, 1]


def test_fit_constant_trace():
    fit = co.fit_decay(_trace(np.full_like(T, 4.2)), 2)
    assert fit.rates == [] and fit.constant == pytest.approx(4.2)
    table = enumerate_resonances([], 0, 3.0)
    assert co.compare_to_spectrum(fit, table)["passed"]


def test_fit_needs_samples():
    with pytest.raises(ValueError):
        co.fit_decay(co.CorrelationTrace(0, T[:30], np.exp(-T[:30]), 0.0), 3)


def test_compare_to_spectrum_and_negative_control(torus_records):
    y = -1 + np.exp(-T) + 0.5 * np.exp(-math.sqrt(2) * T)
    fit = _fit(y, 2)
    table = enumerate_resonances(torus_records, 0, 3.0)
    rep = co.compare_to_spectrum(fit, table)
    assert rep["passed"] and [m["lambda"] for m in rep["matches"]] == pytest.approx([1.0, math.sqrt(2)])
    bad = SpectrumTable(0, 4.5, [SpectrumEntry(e.lam * 1.5, e.witnesses) for e in table.entries], 1e-9)
    with pytest.raises(co.UnmatchedRate) as info:
        co.compare_to_spectrum(fit, bad)
    assert not info.value.report["passed"]


# ---------------------------------------------------------------- traces


def test_constant_psi1_is_invariant(torus):
    _, psi2 = generic_torus_psi()
    grid = torus_grid(32, 32)
    tr = co.trace_k0(torus, lambda X: np.ones(len(X)), psi2, [0.0, 1.0, 5.0, 10.0], grid)
    np.testing.assert_allclose(tr.values, grid.integrate(psi2(grid.nodes)), atol=1e-9)


def test_initial_value_is_wedge_pair(torus):
    psi1, psi2 = generic_torus_psi()
    grid = torus_grid(32, 32)
    tr = co.trace_k0(torus, psi1, psi2, [0.0, 1.0], grid)
    expected = wedge_pair(torus, FormSample(0, psi1), FormSample(2, psi2), grid)
    assert tr.values[0] == pytest.approx(expected, rel=1e-14)


def test_trace_matches_closed_form_flow(torus):
    psi1, psi2 = generic_torus_psi()
    grid = torus_grid(64, 64)
    times = np.linspace(0, 10, 21)
    tr = co.trace_k0(torus, psi1, psi2, times, grid)
    w = grid.weights * psi2(grid.nodes)
    exact = [w @ psi1(torus_backward_exact(grid.nodes, t)) for t in times]
    np.testing.assert_allclose(tr.values, exact, atol=1e-9)


def test_semigroup_consistency(torus):
    psi1, psi2 = generic_torus_psi()
    grid = torus_grid(32, 32)
    s = 1.3
    full = co.trace_k0(torus, psi1, psi2, [s + 0.5, s + 2.0], grid)
    shifted = co.trace_k0(torus, lambda X: psi1(flow(torus, X, [-s], rtol=1e-12)[0]), psi2, [0.5, 2.0], grid)
    np.testing.assert_allclose(full.values, shifted.values, atol=1e-6)


def test_monotone_for_f(torus):
    grid = torus_grid(32, 32)
    tr = co.trace_k0(torus, torus.value, lambda X: np.ones(len(X)), np.linspace(0, 8, 33), grid)
    assert np.all(np.diff(tr.values) <= 1e-12)


def test_torus_limit_single_minimum(torus, torus_records):
    grid = torus_grid(64, 64)
    psi1 = lambda X: np.cos(X[:, 0]) + np.cos(X[:, 1])
    one = lambda X: np.ones(len(X))
    tr = co.trace_k0(torus, psi1, one, np.linspace(0, 20, 41), grid)
    assert tr.values[-1] == pytest.approx(-8 * math.pi**2, rel=1e-3)
    lead = co.leading_term(torus, torus_records, psi1, one, grid)
    assert lead == pytest.approx(-8 * math.pi**2, rel=1e-12)


def test_leading_term_odd_cancels(qsphere, qsphere_records):
    grid = sphere_latlon_grid(40, 80)
    lead = co.leading_term(qsphere, qsphere_records, lambda P: P[:, 0], lambda P: np.ones(len(P)), grid)
    assert abs(lead) < 1e-10


def test_top_degree_trace_torus_closed_form(torus):
    grid = torus_grid(32, 32)
    one = lambda X: np.ones(len(X))
    times = [0.0, 1.0, 3.0]
    tr = co.trace_kn(torus, one, one, times, grid)
    assert tr.degree == 2
    th = grid.nodes
    for t, v in zip(times, tr.values):
        # d/dth of 2 arctan(e^{ct} tan(th/2))
        det = np.prod([np.exp(c * t) / (np.cos(th[:, j] / 2) ** 2 + np.exp(2 * c * t) * np.sin(th[:, j] / 2) ** 2)
                       for j, c in enumerate((1.0, math.sqrt(2)))], axis=0)
        assert v == pytest.approx(grid.integrate(det), rel=1e-9)


def test_top_degree_trace_sphere_closed_form(hsphere):
    grid = sphere_latlon_grid(60, 8)
    one = lambda P: np.ones(len(P))
    z = lambda P: P[:, 2]
    times = [0.0, 0.5, 1.5]
    tr = co.trace_kn(hsphere, z, one, times, grid)
    eta = np.arctanh(grid.nodes[:, 2])
    for t, v in zip(times, tr.values):
        # backward flow of f = z shifts eta = artanh z by -t; area density is sech^2 eta
        det = np.cosh(eta) ** 2 / np.cosh(eta - t) ** 2
        assert v == pytest.approx(grid.integrate(np.tanh(eta - t) * det), abs=1e-8)


def test_times_validated(torus):
    with pytest.raises(ValueError):
        co.trace_k0(torus, np.cos, np.cos, [1.0, 0.5], torus_grid(4, 4))


def test_even_psi1_removes_leading_rate(torus):
    _, psi2 = generic_torus_psi()

    def psi1(X):
        return np.cos(X[:, 0]) + np.cos(X[:, 1]) + 0.5 * np.sin(X[:, 1]) + 0.3 * np.cos(X[:, 0]) * np.sin(2 * X[:, 1])

    tr = co.trace_k0(torus, psi1, psi2, T, torus_grid(64, 64))
    fit = co.fit_decay(tr, 2)
    assert fit.rates[0] == pytest.approx(math.sqrt(2), rel=0.02)
