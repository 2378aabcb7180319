"""Correlation functions of the backward flow and their exponential decay.

``C(t) = int_M (phi^{-t})^* psi1 ^ psi2`` is computed on a quadrature grid by
flowing every node backward. Decay rates are extracted by variable-projection
least squares: the linear amplitudes (including a free constant for the
limit) are solved exactly for each trial set of rates, and only the log-rates
are optimized nonlinearly.
"""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import stats
from scipy.optimize import least_squares

from .critical import CriticalPointRecord
from .errors import ArtifactError
from .flowsim import flow, limits_batch
from .manifold import FormSample, ManifoldModel, QuadratureGrid

__all__ = [
    "CorrelationTrace",
    "DecayFit",
    "IllConditioned",
    "UnmatchedRate",
    "trace_k0",
    "trace_kn",
    "leading_term",
    "fit_decay",
    "compare_to_spectrum",
]


class IllConditioned(UserWarning):
    """Two fitted rates closer than ``1/T`` were merged into one rate with a polynomial factor."""


class UnmatchedRate(ArtifactError):
    """A fitted rate has no counterpart in the enumerated spectrum."""

    def __init__(self, message: str, report: dict):
        super().__init__(message)
        self.report = report


@dataclass
class CorrelationTrace:
    degree: int
    times: np.ndarray
    values: np.ndarray
    limit: float
    grid_kind: str = ""
    n_nodes: int = 0

    def rows(self) -> list[tuple[float, float]]:
        return [(float(t), float(v)) for t, v in zip(self.times, self.values)]


@dataclass
class DecayFit:
    """Fitted ``C(t) ~ const + sum_i p_i(t) exp(-rate_i t)``.

    ``coefficients[i]`` are the coefficients of ``t^0, t^1, ...`` of ``p_i`` and
    ``polynomial_degree[i] = len(coefficients[i]) - 1``.
    """

    rates: list[float]
    coefficients: list[list[float]]
    polynomial_degree: list[int]
    residual: float
    window: tuple[float, float]
    constant: float
    chi2_dof: float
    adequate: bool
    merged: int = 0
    noise: dict = field(default_factory=dict)
    tests: list[dict] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "rates": self.rates,
            "coefficients": self.coefficients,
            "polynomial_degree": self.polynomial_degree,
            "residual": self.residual,
            "window": list(self.window),
            "constant": self.constant,
            "chi2_dof": self.chi2_dof,
            "adequate": self.adequate,
            "merged": self.merged,
            "noise": self.noise,
            "tests": self.tests,
        }


# ---------------------------------------------------------------------------
# traces
# ---------------------------------------------------------------------------

def _as_fn(psi) -> Callable[[np.ndarray], np.ndarray]:
    if isinstance(psi, FormSample):
        return lambda X: psi(X).reshape(-1)
    if callable(psi):
        return lambda X: np.asarray(psi(np.atleast_2d(X)), float).reshape(-1)
    c = float(psi)
    return lambda X: np.full(np.atleast_2d(X).shape[0], c)


def _check_times(times: Sequence[float]) -> np.ndarray:
    times = np.asarray(times, float)
    if times.ndim != 1 or len(times) == 0 or times[0] < 0 or np.any(np.diff(times) <= 0):
        raise ValueError("times must be nonnegative and strictly increasing")
    return times


def trace_k0(model: ManifoldModel, psi1, psi2, times: Sequence[float], grid: QuadratureGrid,
             rtol: float = 1e-12, h_max: float = 0.02) -> CorrelationTrace:
    """Degree-0 correlation: ``psi1`` a function, ``psi2`` a top-degree density.

    Nodes are flowed backward once, interval by interval, and ``psi1`` is
    evaluated at each requested time. ``h_max`` caps the step so that the
    integration error stays smooth in ``t`` and small relative to the decay.
    """
    times = _check_times(times)
    f1, f2 = _as_fn(psi1), _as_fn(psi2)
    X = grid.nodes.copy()
    wdens = grid.weights * f2(X)
    vals = np.empty(len(times))
    t_prev = 0.0
    for i, t in enumerate(times):
        if t > t_prev:
            X = flow(model, X, [-(t - t_prev)], rtol=rtol, atol=rtol * 1e-4, h_max=h_max)[0]
            t_prev = t
        vals[i] = float(np.dot(wdens, f1(X)))
    return CorrelationTrace(0, times, vals, _tail_mean(vals), grid.kind, len(X))


def trace_kn(model: ManifoldModel, psi1, psi2, times: Sequence[float], grid: QuadratureGrid,
             rtol: float = 1e-12, h_max: float = 0.02) -> CorrelationTrace:
    """Degree-n correlation: ``psi1`` a top-degree density pulled back, ``psi2`` a function.

    ``(phi^{-t})^*(rho vol) = rho(phi^{-t} x) det d phi^{-t}(x) vol``; the
    determinant comes from the variational equation (restricted to tangent
    planes on the sphere).
    """
    times = _check_times(times)
    f1, f2 = _as_fn(psi1), _as_fn(psi2)
    X = grid.nodes.copy()
    N, d = X.shape
    J = np.broadcast_to(np.eye(d), (N, d, d)).copy()
    wdens = grid.weights * f2(X)
    if model.is_sphere:
        B0 = np.stack([model.tangent_basis(x) for x in X])
    vals = np.empty(len(times))
    t_prev = 0.0
    for i, t in enumerate(times):
        if t > t_prev:
            S, Js = flow(model, X, [-(t - t_prev)], rtol=rtol, atol=rtol * 1e-4, h_max=h_max, with_jacobian=True)
            X = S[0]
            J = np.einsum("nij,njk->nik", Js[0], J)
            t_prev = t
        if model.is_sphere:
            B1 = np.stack([model.tangent_basis(x) for x in X])
            det = np.linalg.det(np.einsum("nji,njk,nkl->nil", B1, J, B0))
        else:
            det = np.linalg.det(J)
        vals[i] = float(np.dot(wdens, f1(X) * det))
    return CorrelationTrace(model.dim, times, vals, _tail_mean(vals), grid.kind, N)


def _tail_mean(vals: np.ndarray) -> float:
    k = max(1, int(math.ceil(0.1 * len(vals))))
    return float(np.mean(vals[-k:]))


def leading_term(model: ManifoldModel, records: Sequence[CriticalPointRecord], psi1, psi2,
                 grid: QuadratureGrid, alpha_limit: Optional[np.ndarray] = None) -> float:
    """``sum_{index(a)=0} psi1(a) * int_{basin(a)} psi2`` with basins from backward limits."""
    f1, f2 = _as_fn(psi1), _as_fn(psi2)
    if alpha_limit is None:
        alpha_limit, _ = limits_batch(model, grid.nodes, records)
    dens = grid.weights * f2(grid.nodes)
    total = 0.0
    for rec in records:
        if rec.index == 0:
            total += float(f1(rec.position[None, :])[0]) * float(np.sum(dens[alpha_limit == rec.id]))
    return total


# ---------------------------------------------------------------------------
# fitting
# ---------------------------------------------------------------------------

def _design(t: np.ndarray, rates: Sequence[float], degrees: Sequence[int]) -> np.ndarray:
    cols = [np.ones_like(t)]
    for lam, dg in zip(rates, degrees):
        e = np.exp(-lam * t)
        for l in range(dg + 1):
            cols.append(e * t**l)
    return np.column_stack(cols)


def _solve(t, y, w, rates, degrees):
    A = _design(t, rates, degrees)
    Aw = A * w[:, None]
    sc = np.linalg.norm(Aw, axis=0)
    sc[sc == 0] = 1.0
    c, *_ = np.linalg.lstsq(Aw / sc, y * w, rcond=None)
    c = c / sc
    return c, (y - A @ c) * w


def _fit(t, y, w, rates0, degrees):
    def res(lr):
        return _solve(t, y, w, np.exp(lr), degrees)[1]

    out = least_squares(res, np.log(np.asarray(rates0, float)), method="lm",
                        xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=4000)
    rates = np.exp(out.x)
    c, r = _solve(t, y, w, rates, degrees)
    return rates, c, float(r @ r)


def _nparams(degrees: Sequence[int]) -> int:
    return 1 + len(degrees) + sum(d + 1 for d in degrees)


def _pure(t, y, w, K, gap):
    best = None
    for mult in itertools.product([1.2, 1.5, 2.0, 2.5, 3.0, 4.0], repeat=K - 1):
        seeds = gap * np.cumprod([1.0, *mult])
        try:
            cand = _fit(t, y, w, seeds, [0] * K)
        except (ValueError, np.linalg.LinAlgError):
            continue
        if best is None or cand[2] < best[2]:
            best = cand
    return best


def _merge(rates, degrees, T):
    rates, degrees, n = list(rates), list(degrees), 0
    while True:
        order = np.argsort(rates)
        rates = [rates[i] for i in order]
        degrees = [degrees[i] for i in order]
        for i in range(len(rates) - 1):
            if rates[i + 1] - rates[i] < 1.0 / T:
                rates[i] = 0.5 * (rates[i] + rates[i + 1])
                degrees[i] = degrees[i] + degrees[i + 1] + 1
                del rates[i + 1], degrees[i + 1]
                n += 1
                break
        else:
            return rates, degrees, n


def _ftest(rss0, deg0, rss1, deg1, N):
    dof = N - _nparams(deg1)
    dp = _nparams(deg1) - _nparams(deg0)
    s2 = max(rss1 / dof, 1.0)
    F = max(rss0 - rss1, 0.0) / dp / s2
    return float(F), float(stats.f.sf(F, dp, dof))


def _extra_rate_rss(t, y, w, rates, degrees, T):
    best = None
    for s in [r * f for r in rates for f in (1.25, 1.5, 2.0, 3.0)]:
        try:
            r1, _, rss1 = _fit(t, y, w, np.append(rates, s), list(degrees) + [0])
        except (ValueError, np.linalg.LinAlgError):
            continue
        if np.min(np.abs(r1[-1] - r1[:-1])) < 1.0 / T:
            continue
        if best is None or rss1 < best:
            best = rss1
    return best


def _gap_estimate(t: np.ndarray, C: np.ndarray) -> float:
    dC = np.abs(np.gradient(C, t))
    slope = -np.gradient(np.log(dC + 1e-300), t)[int(0.7 * len(t)):]
    g = float(np.median(slope))
    return g if np.isfinite(g) and g > 0 else 1.0


def fit_decay(trace: CorrelationTrace, n_rates: int = 3, window: Optional[tuple[float, float]] = None,
              alpha: float = 0.01, noise_rel: float = 1e-8, noise_abs: Optional[float] = None,
              chi_crit: float = 4.0) -> DecayFit:
    """Fit ``const + sum_i p_i(t) exp(-lambda_i t)`` to a trace.

    Procedure: start the window at ``2/gap`` (gap from the log-slope of
    ``|C'|``), fit ``n_rates`` pure exponentials from a grid of seeds, merge
    rates closer than ``1/T`` into one rate with a polynomial factor, and
    advance the window by ``1/gap`` until the reduced chi-square is at most
    ``chi_crit``. Polynomial degrees are then tested rate by rate: a degree
    is lowered when the F-test at level ``alpha`` does not reject the lower
    one, and raised only when the F-test rejects and the raised model also
    beats adding a further distinct rate.

    Noise model: ``sigma = sqrt((noise_rel * |C - C_inf|)^2 + noise_abs^2)``,
    with ``noise_abs`` defaulting to ``1e-14 * max |C|``.
    """
    t_all, C_all = trace.times, trace.values
    if len(t_all) < 20 * n_rates:
        raise ValueError(f"need at least {20 * n_rates} samples")
    T = float(t_all[-1])
    scale = float(np.max(np.abs(C_all))) or 1.0
    noise_abs = 1e-14 * scale if noise_abs is None else noise_abs
    noise = {"rel": noise_rel, "abs": noise_abs}
    if np.max(np.abs(C_all - C_all[-1])) <= 10 * (noise_abs + noise_rel * abs(C_all[-1])):
        return DecayFit([], [], [], float(np.max(np.abs(C_all - C_all[-1]))), (float(t_all[0]), T),
                        float(C_all[-1]), 0.0, True, 0, noise)
    gap = _gap_estimate(t_all, C_all)
    if window is not None:
        starts = [float(window[0])]
        T = float(window[1])
    else:
        starts = list(np.arange(2.0 / gap, T, 1.0 / gap))
    # fit the deviation from a reference limit so weighted residuals keep full precision
    c_inf = trace.limit
    Y_all = C_all - c_inf
    best = None
    for t0 in starts:
        m = (t_all >= t0) & (t_all <= T)
        t, C = t_all[m], Y_all[m]
        if len(t) < 20 * n_rates:
            break
        w = 1.0 / np.sqrt((noise_rel * C) ** 2 + noise_abs**2)
        fit = _pure(t, C, w, n_rates, gap)
        if fit is None:
            continue
        rates, degs, nm = _merge(fit[0], [0] * n_rates, T)
        rss = fit[2]
        if nm:
            r2, _, rss = _fit(t, C, w, rates, degs)
            rates = list(r2)
        red = rss / max(len(t) - _nparams(degs), 1)
        cand = (red, t0, list(rates), list(degs), rss, nm)
        if best is None or red < best[0]:
            best = cand
        if red <= chi_crit:
            break
    if best is None:
        raise ValueError("window too short for the requested number of rates")
    red, t0, rates, degs, rss, nm = best
    if nm:
        warnings.warn(f"{nm} pair(s) of rates closer than 1/T={1 / T:.3g} merged", IllConditioned, stacklevel=2)
    m = (t_all >= t0) & (t_all <= T)
    t, C = t_all[m], Y_all[m]
    w = 1.0 / np.sqrt((noise_rel * C) ** 2 + noise_abs**2)
    N = len(t)
    tests = []
    for i in range(len(rates)):
        while degs[i] > 0:
            d0 = list(degs)
            d0[i] -= 1
            r0, _, rss0 = _fit(t, C, w, rates, d0)
            F, p = _ftest(rss0, d0, rss, degs, N)
            tests.append({"rate": float(rates[i]), "action": "lower", "F": F, "p": p, "accepted": p >= alpha})
            if p < alpha:
                break
            degs, rates, rss = d0, list(r0), rss0
        if degs[i] == 0:
            d1 = list(degs)
            d1[i] += 1
            r1, _, rss1 = _fit(t, C, w, rates, d1)
            F, p = _ftest(rss, degs, rss1, d1, N)
            rival = _extra_rate_rss(t, C, w, np.asarray(rates), degs, T) if p < alpha else None
            accept = p < alpha and (rival is None or rss1 < rival)
            tests.append({"rate": float(rates[i]), "action": "raise", "F": F, "p": p,
                          "rival_rss": rival, "rss_raised": rss1, "accepted": accept})
            if accept:
                degs, rates, rss = d1, list(r1), rss1
    rates_arr, c, rss = _fit(t, C, w, rates, degs)
    order = np.argsort(rates_arr)
    coeffs, pos = [], 1
    for dg in degs:
        coeffs.append([float(v) for v in c[pos:pos + dg + 1]])
        pos += dg + 1
    fitted = _design(t, rates_arr, degs) @ c
    red = rss / max(N - _nparams(degs), 1)
    return DecayFit(
        rates=[float(rates_arr[i]) for i in order],
        coefficients=[coeffs[i] for i in order],
        polynomial_degree=[int(degs[i]) for i in order],
        residual=float(np.max(np.abs(fitted - C))),
        window=(float(t0), float(T)),
        constant=float(c_inf + c[0]),
        chi2_dof=float(red),
        adequate=bool(red <= chi_crit),
        merged=int(nm),
        noise=noise,
        tests=tests,
    )


def compare_to_spectrum(fit: DecayFit, table, tol_rel: float = 0.05) -> dict:
    """Match each fitted rate to the nearest positive table value.

    Raises
    ------
    UnmatchedRate
        When some fitted rate is farther than ``tol_rel`` (relative) from every
        table value.
    """
    if fit.rates and getattr(table, "degree", None) is None:
        raise ValueError("table has no degree")
    lams = np.array([e.lam for e in table.entries if e.lam > table.merge_tol])
    matches, unmatched = [], []
    for rate in fit.rates:
        if len(lams) == 0:
            unmatched.append(rate)
            continue
        j = int(np.argmin(np.abs(lams - rate)))
        err = abs(lams[j] - rate) / lams[j]
        matches.append({"rate": rate, "lambda": float(lams[j]), "rel_error": float(err), "matched": err <= tol_rel})
        if err > tol_rel:
            unmatched.append(rate)
    report = {"matches": matches, "passed": not unmatched, "tol_rel": tol_rel}
    if unmatched:
        raise UnmatchedRate(f"fitted rates without table counterpart: {unmatched}", report)
    return report
