"""Morse complex, Betti numbers, trace identities and the degree-0 projector."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from sympy import Matrix

from .critical import CriticalPointRecord
from .errors import ArtifactError
from .flowsim import ConnectionCount, flow, limits_batch
from .manifold import ManifoldModel

__all__ = [
    "ComplexData",
    "TraceReport",
    "ComplexInconsistent",
    "DegenerateTime",
    "build",
    "integer_rank",
    "morse_inequalities",
    "poincare_duality",
    "lefschetz",
    "kernel_projector_k0",
    "koszul_homology",
]


class ComplexInconsistent(ArtifactError):
    """``d o d != 0``: an upstream sign or clustering error."""


class DegenerateTime(ArtifactError):
    """``1 - exp(-t chi)`` is numerically zero for some exponent."""


@dataclass
class ComplexData:
    """Generators, integer coboundaries ``d_k : C^k -> C^{k+1}`` and derived invariants."""

    generators: list[list[int]]
    d_matrices: list[np.ndarray]
    c: list[int]
    betti: list[int]
    euler: int
    ranks: list[int] = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.c) - 1

    def to_json(self) -> dict:
        return {
            "generators": self.generators,
            "d_matrices": [m.astype(int).tolist() for m in self.d_matrices],
            "c": self.c,
            "betti": self.betti,
            "euler": self.euler,
            "ranks": self.ranks,
        }


@dataclass
class TraceReport:
    times: list[float]
    lefschetz_rhs: list[int]
    euler_lhs: int

    def to_json(self) -> dict:
        return {"times": self.times, "values": self.lefschetz_rhs, "euler": self.euler_lhs}


def integer_rank(M: np.ndarray) -> int:
    """Exact rank over the rationals."""
    if M.size == 0:
        return 0
    return int(Matrix(M.astype(int).tolist()).rank())


def build(records: Sequence[CriticalPointRecord], connections: Sequence[ConnectionCount], n: Optional[int] = None) -> ComplexData:
    """Assemble the Morse complex from signed connection counts.

    Raises
    ------
    ComplexInconsistent
        If some ``d_{k+1} d_k`` is nonzero, or an adjacent pair is missing.
    """
    n = len(records[0].exponents) if n is None else n
    gens = [[rec.id for rec in records if rec.index == k] for k in range(n + 1)]
    pos = {rec.id: gens[rec.index].index(rec.id) for rec in records}
    index = {rec.id: rec.index for rec in records}
    d = [np.zeros((len(gens[k + 1]), len(gens[k])), dtype=np.int64) for k in range(n)]
    seen = set()
    for con in connections:
        k = index[con.source]
        if index[con.target] != k + 1:
            raise ComplexInconsistent(f"connection {con.source}->{con.target} is not between adjacent indices")
        d[k][pos[con.target], pos[con.source]] += con.signed_count
        seen.add((con.source, con.target))
    for k in range(n):
        for a in gens[k]:
            for b in gens[k + 1]:
                if (a, b) not in seen:
                    raise ComplexInconsistent(f"missing connection data for {a}->{b}")
    for k in range(n - 1):
        prod = d[k + 1] @ d[k]
        if np.any(prod != 0):
            raise ComplexInconsistent(f"d_{k + 1} d_{k} != 0:\n{prod}")
    ranks = [integer_rank(m) for m in d]
    c = [len(g) for g in gens]
    betti = [c[k] - (ranks[k] if k < n else 0) - (ranks[k - 1] if k > 0 else 0) for k in range(n + 1)]
    euler = sum((-1) ** k * c[k] for k in range(n + 1))
    return ComplexData(gens, d, c, betti, euler, ranks)


def morse_inequalities(data: ComplexData) -> list[dict]:
    """Strong Morse inequalities, with equality required at ``k = n``."""
    out = []
    n = data.n
    for k in range(n + 1):
        lhs = sum((-1) ** (k - j) * data.c[j] for j in range(k + 1))
        rhs = sum((-1) ** (k - j) * data.betti[j] for j in range(k + 1))
        holds = lhs >= rhs and (k < n or lhs == rhs)
        out.append({"k": k, "lhs": lhs, "rhs": rhs, "holds": holds, "equality": lhs == rhs})
    return out


def poincare_duality(data_f: ComplexData, data_minus_f: Optional[ComplexData] = None) -> bool:
    """``b_k(f) = b_{n-k}(f)`` and, when given, ``b_k(f) = b_{n-k}(-f)``."""
    b = data_f.betti
    ok = b == b[::-1]
    if data_minus_f is not None:
        ok = ok and b == data_minus_f.betti[::-1]
    return bool(ok)


def lefschetz(records: Sequence[CriticalPointRecord], times: Sequence[float]) -> TraceReport:
    """Signed fixed-point sum of ``phi^{-t}`` at each time.

    Each critical point contributes ``sign prod_j (1 - exp(-t chi_j))``.

    Raises
    ------
    DegenerateTime
    """
    values = []
    for t in times:
        if t <= 0:
            raise ValueError("times must be positive")
        total = 0
        for rec in records:
            fac = -np.expm1(-t * np.asarray(rec.exponents, float))
            if np.min(np.abs(fac)) < 1e-14:
                raise DegenerateTime(f"|1 - exp(-t chi)| < 1e-14 at t={t}, critical point {rec.id}")
            total += int(np.sign(np.prod(fac)))
        values.append(total)
    euler = sum((-1) ** rec.index for rec in records)
    return TraceReport([float(t) for t in times], values, euler)


def kernel_projector_k0(model: ManifoldModel, records: Sequence[CriticalPointRecord], psi: Callable,
                        grid: np.ndarray, t: float = 40.0, alpha_limit: Optional[np.ndarray] = None,
                        rtol: float = 1e-10, tol: float = 1e-6) -> dict:
    """Degree-0 projector realized on grid samples.

    The prediction at ``x`` is ``psi(a)`` for the index-0 point ``a`` whose
    unstable manifold contains ``x``; the empirical value is
    ``psi(phi^{-t}(x))``.
    """
    grid = np.atleast_2d(np.asarray(grid, float))
    if alpha_limit is None:
        alpha_limit, _ = limits_batch(model, grid, records)
    by_id = {rec.id: rec for rec in records}
    pred = np.full(len(grid), np.nan)
    for rec in records:
        if rec.index == 0:
            pred[alpha_limit == rec.id] = float(psi(rec.position[None, :])[0])
    emp = psi(flow(model, grid, [-t], rtol=rtol)[0])
    dev = np.abs(emp - pred)
    valid = ~np.isnan(pred)
    return {
        "predicted": pred,
        "empirical": emp,
        "deviation": dev,
        "in_open_basins": float(np.mean(valid)),
        "fraction_within_tol": float(np.mean(valid & (dev < tol))),
        "max_deviation": float(np.nanmax(dev)) if valid.any() else math.nan,
        "tol": tol,
    }


def koszul_homology(data: ComplexData, germ_vanishing: Optional[bool] = None) -> dict:
    """Homology of ``(C^*, i_V)``; with a vanishing differential it is ``C^k``.

    ``germ_vanishing`` is the result of the symbolic contraction check on the
    generator germs; it is recomputed when omitted.
    """
    if germ_vanishing is None:
        from .model_currents import LinearModelSpec, contract_with_V, generator
        germ_vanishing = True
        n = data.n
        for r in range(n + 1):
            spec = LinearModelSpec.symbolic(n, r)
            germ_vanishing &= contract_with_V(spec, generator(spec, (0,) * n, (), ())).is_zero()
    if not germ_vanishing:
        raise ComplexInconsistent("contraction does not vanish on the generator germs")
    dims = list(data.c)
    alt = sum((-1) ** k * m for k, m in enumerate(dims))
    return {"dimensions": dims, "alternating_sum": alt, "matches_euler": alt == data.euler}
