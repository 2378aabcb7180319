"""Acceptance criteria as callable checks shared by the CLI and the test suite.

Every check returns a :class:`CriterionResult`; none raises on a failed
criterion, so a full table is always produced.
"""
from __future__ import annotations

import functools
import itertools
import math
import time
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from . import correlation as corr
from . import morse_complex as mc
from . import spectrum as sp
from .critical import find_critical_points
from .flowsim import count_connections, limits_batch
from .manifold import builtin, sphere_mercator_grid, torus_grid
from .model_currents import property_suite

__all__ = [
    "CriterionResult",
    "brute_force_spectrum",
    "brute_force_multiplicity",
    "CRITERIA",
    "run_all",
    "torus_psi",
    "sphere_psi",
]

SQRT2 = math.sqrt(2.0)
SQRT3 = math.sqrt(3.0)


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    details: dict = field(default_factory=dict)
    runtime: float = 0.0

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        brief = ", ".join(f"{k}={_fmt(v)}" for k, v in self.details.items())
        return f"[{tag}] criterion {self.number}: {self.name} ({self.runtime:.1f}s) {brief}"

    def to_json(self) -> dict:
        return {"number": self.number, "name": self.name, "passed": self.passed,
                "details": _jsonable(self.details), "runtime": self.runtime}


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    return str(v)


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    return v


# ---------------------------------------------------------------------------
# independent oracles
# ---------------------------------------------------------------------------

def brute_force_spectrum(exponent_sets: Sequence[tuple[int, Sequence[float]]], k: int, Lambda: float,
                         merge_tol: float = 1e-9) -> list[tuple[float, int]]:
    """Enumerate every ``(a, alpha, I, J)`` inside the bounding box and tally values.

    ``exponent_sets`` holds ``(index, exponents)`` with the stable exponents first.
    """
    values = []
    for r, chi in exponent_sets:
        mags = [abs(c) for c in chi]
        n = len(mags)
        box = [range(int(Lambda / m) + 1) for m in mags]
        for alpha in itertools.product(*box):
            for I in itertools.chain.from_iterable(itertools.combinations(range(r), q) for q in range(r + 1)):
                for J in itertools.chain.from_iterable(itertools.combinations(range(r, n), q) for q in range(n - r + 1)):
                    if len(J) - len(I) != k - r:
                        continue
                    lam = math.fsum((alpha[j] + (j in I or j in J)) * mags[j] for j in range(n))
                    if lam <= Lambda:
                        values.append(lam)
    values.sort()
    out: list[list] = []
    last = None
    for v in values:
        if out and v - last <= merge_tol:
            out[-1][1] += 1
        else:
            out.append([v, 1])
        last = v
    return [(v, m) for v, m in out]


def brute_force_multiplicity(n: int, r: int, alpha: Sequence[int], k: int) -> int:
    """Count subset pairs over the full power set with the admissibility conditions."""
    count = 0
    for mask in range(1 << n):
        S = [j for j in range(n) if mask >> j & 1]
        I = [j for j in S if j < r]
        J = [j for j in S if j >= r]
        if len(J) - len(I) == k - r and all(alpha[j] >= 1 for j in S):
            count += 1
    return count


# ---------------------------------------------------------------------------
# shared fixtures
# ---------------------------------------------------------------------------

def torus_psi() -> tuple[Callable, Callable]:
    """Test functions without reflection symmetry, so every channel is populated."""

    def psi1(X):
        a1, a2 = X[:, 0], X[:, 1]
        return np.cos(a1) + np.cos(a2) + 0.8 * np.sin(a1) + 0.5 * np.sin(a2) + 0.3 * np.sin(a1 + 2 * a2)

    def psi2(X):
        t1, t2 = X[:, 0], X[:, 1]
        return 1 + 0.5 * np.cos(t1) + 0.3 * np.sin(t1) + 0.3 * np.sin(t2) + 0.2 * np.cos(t1 - t2)

    return psi1, psi2


def sphere_psi() -> tuple[Callable, Callable]:
    def psi1(P):
        X, Y, Z = P.T
        return X + 0.5 * Y + Z + 0.7 * Z**2 + 0.3 * X * Y + 0.2 * X * Z

    def psi2(P):
        x, y, z = P.T
        return 1 + 0.4 * x + 0.3 * z + 0.2 * y * z

    return psi1, psi2


@functools.lru_cache(maxsize=None)
def _records(name: str):
    if name == "torus":
        model = builtin("torus", {"c1": 1.0, "c2": SQRT2})
    elif name == "quadratic_sphere":
        model = builtin("sphere", {"a": 0.0, "b": 1.0, "c": SQRT3})
    else:
        model = builtin("sphere", {"a": 0.0, "b": 0.0, "c": 1.0})
    return model, tuple(find_critical_points(model))


@functools.lru_cache(maxsize=None)
def _torus_trace(n_nodes: int = 256, T: float = 25.0, samples: int = 251):
    model, _ = _records("torus")
    psi1, psi2 = torus_psi()
    return corr.trace_k0(model, psi1, psi2, np.linspace(0.0, T, samples), torus_grid(n_nodes, n_nodes))


@functools.lru_cache(maxsize=None)
def _sphere_trace(T: float = 25.0, samples: int = 251):
    model, _ = _records("height_sphere")
    psi1, psi2 = sphere_psi()
    # psi1 * psi2 has longitude frequencies <= 3, integrated exactly by 8 nodes
    return corr.trace_k0(model, psi1, psi2, np.linspace(0.0, T, samples), sphere_mercator_grid(3201, 8, 40.0))


def _fit(trace, n_rates=3):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", corr.IllConditioned)
        return corr.fit_decay(trace, n_rates=n_rates)


# ---------------------------------------------------------------------------
# criteria
# ---------------------------------------------------------------------------

def criterion_1(n_random: int = 50, seed: int = 0) -> CriterionResult:
    """Enumeration equals the brute-force oracle."""
    t0 = time.perf_counter()
    cases, mismatches = [], 0
    torus = [(0, (1.0, SQRT2)), (1, (-1.0, SQRT2)), (1, (-SQRT2, 1.0)), (2, (-1.0, -SQRT2))]
    for k in range(3):
        cases.append((torus, k, 10.0))
    rng = np.random.default_rng(seed)
    for _ in range(n_random):
        n = int(rng.integers(1, 5))
        pts = []
        for _ in range(int(rng.integers(1, 4))):
            r = int(rng.integers(0, n + 1))
            mags = np.sort(rng.uniform(0.7, 3.0, n))
            pts.append((r, tuple(-m if j < r else m for j, m in enumerate(mags))))
        cases.append((pts, int(rng.integers(0, n + 1)), 6.0))
    for pts, k, Lam in cases:
        data = [sp.ExponentData(i, r, chi) for i, (r, chi) in enumerate(pts)]
        table = sp.enumerate_resonances(data, k, Lam, exact=False)
        oracle = brute_force_spectrum(pts, k, Lam)
        got = list(zip(table.lambdas.tolist(), table.multiplicities.tolist()))
        ok = len(got) == len(oracle) and all(abs(a[0] - b[0]) <= 1e-12 and a[1] == b[1] for a, b in zip(got, oracle))
        mismatches += 0 if ok else 1
    rt = time.perf_counter() - t0
    return CriterionResult(1, "spectrum oracle equivalence", mismatches == 0 and rt < 5.0,
                           {"cases": len(cases), "mismatches": mismatches}, rt)


def criterion_2(max_n: int = 6, max_entry: int = 2) -> CriterionResult:
    """Rank bounds, the delta at alpha = 0 and the binomial value on the open orthant."""
    t0 = time.perf_counter()
    checked, violations = 0, 0
    for n in range(1, max_n + 1):
        for r in range(n + 1):
            rec = sp.ExponentData(0, r, tuple(-1.0 if j < r else 1.0 for j in range(n)))
            for alpha in itertools.product(range(max_entry + 1), repeat=n):
                for k in range(n + 1):
                    m = sp.multiplicity_alpha(rec, alpha, k)
                    ok = 0 <= m <= 2**n and m == brute_force_multiplicity(n, r, alpha, k)
                    if not any(alpha):
                        ok &= m == (1 if k == r else 0)
                    if all(a >= 1 for a in alpha):
                        ok &= m == math.comb(n, k)
                    checked += 1
                    violations += 0 if ok else 1
    rt = time.perf_counter() - t0
    return CriterionResult(2, "rank claims", violations == 0 and rt < 10.0,
                           {"checked": checked, "violations": violations}, rt)


def criterion_3() -> CriterionResult:
    t0 = time.perf_counter()
    _, recs = _records("torus")
    res = sp.weyl_check(recs, 0, 200.0)
    lams = [50.0, 100.0, 200.0, 400.0]
    counts = [sp.enumerate_resonances(recs, 0, L, exact=False).total() for L in lams]
    slope = float(np.polyfit(np.log(lams), np.log(counts), 1)[0])
    rt = time.perf_counter() - t0
    ok = res["relative_gap"] <= 0.03 and abs(slope - 2.0) <= 0.05 and rt < 30.0
    return CriterionResult(3, "Weyl law", ok, {"relative_gap": res["relative_gap"], "slope": slope,
                                                "count": res["count"], "leading": res["leading"]}, rt)


def criterion_4() -> CriterionResult:
    t0 = time.perf_counter()
    details, ok = {}, True
    for name, chi in (("torus", 0), ("quadratic_sphere", 2)):
        _, recs = _records(name)
        groups = sp.even_odd_cancellation(recs, 10.0)
        bad = [g["lambda"] for g in groups if g["lambda"] > 1e-9 and g["alternating_sum"] != 0]
        zero = [g["alternating_sum"] for g in groups if g["lambda"] <= 1e-9]
        ok &= not bad and zero == [chi]
        details[f"{name}_lambda0"] = zero[0] if zero else None
        details[f"{name}_violations"] = len(bad)
    return CriterionResult(4, "even/odd cancellation", bool(ok), details, time.perf_counter() - t0)


def criterion_5(n_random: int = 500) -> CriterionResult:
    t0 = time.perf_counter()
    rows = property_suite(n_random=n_random)
    rt = time.perf_counter() - t0
    failures = sum(r.failures for r in rows)
    return CriterionResult(5, "symbolic eigencurrent suite", failures == 0 and rt < 20.0,
                           {"cases": sum(r.cases for r in rows), "failures": failures}, rt)


def criterion_6() -> CriterionResult:
    t0 = time.perf_counter()
    model, recs = _records("torus")
    trace = _torus_trace()
    fit = _fit(trace)
    psi1, psi2 = torus_psi()
    lead = corr.leading_term(model, recs, psi1, psi2, torus_grid(256, 256))
    limit_err = abs(trace.limit - lead) / abs(lead)
    table = sp.enumerate_resonances(recs, 0, 3.0)
    try:
        corr.compare_to_spectrum(fit, table)
        matched = True
    except corr.UnmatchedRate:
        matched = False
    bad = sp.SpectrumTable(0, table.cutoff * 1.5,
                           [sp.SpectrumEntry(e.lam * 1.5, e.witnesses) for e in table.entries], table.merge_tol)
    try:
        corr.compare_to_spectrum(fit, bad)
        negative = False
    except corr.UnmatchedRate:
        negative = True
    rt = time.perf_counter() - t0
    dom = fit.rates[0] if fit.rates else math.nan
    ok = abs(dom - 1.0) <= 0.02 and limit_err <= 1e-3 and matched and negative and rt < 600.0
    return CriterionResult(6, "correlation decay", ok, {
        "rates": fit.rates, "dominant_rel_err": abs(dom - 1.0), "limit": trace.limit, "leading": lead,
        "limit_rel_err": limit_err, "matched": matched, "negative_control": negative}, rt)


def criterion_7() -> CriterionResult:
    """Torus fit has no polynomial factors; the sphere-height fit needs one at rate 1."""
    t0 = time.perf_counter()
    tfit = _fit(_torus_trace())
    sfit = _fit(_sphere_trace())
    torus_ok = bool(tfit.rates) and all(d == 0 for d in tfit.polynomial_degree)
    at1 = [d for lam, d in zip(sfit.rates, sfit.polynomial_degree) if abs(lam - 1.0) <= 0.02]
    sphere_ok = bool(at1) and at1[0] >= 1
    return CriterionResult(7, "Jordan detection contrast", torus_ok and sphere_ok, {
        "torus_degrees": tfit.polynomial_degree, "sphere_rates": sfit.rates,
        "sphere_degrees": sfit.polynomial_degree, "sphere_degree_at_rate_1": at1[0] if at1 else None},
        time.perf_counter() - t0)


def criterion_8() -> CriterionResult:
    t0 = time.perf_counter()
    details, ok = {}, True
    for name, betti, chi in (("torus", [1, 2, 1], 0), ("quadratic_sphere", [1, 0, 1], 2)):
        model, recs = _records(name)
        cons = [count_connections(model, recs, a, b) for a in recs for b in recs if b.index == a.index + 1]
        try:
            data = mc.build(recs, cons)
        except mc.ComplexInconsistent:
            details[f"{name}_betti"] = None
            ok = False
            continue
        ineq = mc.morse_inequalities(data)
        lef = mc.lefschetz(recs, [0.1, 1.0, 10.0]).lefschetz_rhs
        ok &= (data.betti == betti and all(r["holds"] for r in ineq) and mc.poincare_duality(data)
               and lef == [chi] * 3)
        details[f"{name}_betti"] = data.betti
        details[f"{name}_lefschetz"] = lef
    rt = time.perf_counter() - t0
    return CriterionResult(8, "topology suite", bool(ok) and rt < 120.0, details, rt)


def criterion_9(n_nodes: int = 128) -> CriterionResult:
    t0 = time.perf_counter()
    model, recs = _records("torus")
    grid = torus_grid(n_nodes, n_nodes)
    alpha, _ = limits_batch(model, grid.nodes, recs)
    rep = mc.kernel_projector_k0(model, recs, lambda X: np.cos(X[:, 0]), grid.nodes, t=40.0, alpha_limit=alpha)
    frac = rep["fraction_within_tol"]
    return CriterionResult(9, "kernel projector", frac >= 0.99,
                           {"fraction_within_1e-6": frac, "max_deviation": rep["max_deviation"]},
                           time.perf_counter() - t0)


CRITERIA: dict[int, Callable[[], CriterionResult]] = {
    1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5,
    6: criterion_6, 7: criterion_7, 8: criterion_8, 9: criterion_9,
}


def run_all(select: Sequence[int] | None = None, printer: Callable[[str], None] | None = print) -> list[CriterionResult]:
    out = []
    for num in select or sorted(CRITERIA):
        res = CRITERIA[num]()
        if printer is not None:
            printer(res.line())
        out.append(res)
    return out
