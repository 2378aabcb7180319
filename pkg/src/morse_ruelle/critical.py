"""Critical points, Lyapunov exponents and the standing hypotheses.

The Lyapunov exponents at a critical point ``a`` are the eigenvalues of the
metric-symmetrized Hessian, i.e. the solutions of ``Hess f(a) xi = chi g(a) xi``.
The flow ascends ``f``, so negative exponents are stable directions and their
count is the Morse index.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
import scipy.linalg

from .errors import ArtifactError
from .manifold import BuiltinKind, ManifoldModel

__all__ = [
    "CriticalPointRecord",
    "HypothesisReport",
    "SingularHessian",
    "NotCritical",
    "find_critical_points",
    "lyapunov_exponents",
    "eigen_decomposition",
    "sylvester_index",
    "check_hypotheses",
    "integer_relation",
]

DEGENERACY_TOL = 1e-8
NOT_CRITICAL_TOL = 1e-8
MERGE_DIST = 1e-6


class SingularHessian(ArtifactError):
    """A critical point is degenerate (the function is not Morse there)."""


class NotCritical(ArtifactError):
    """The point is not a critical point of f."""


@dataclass(frozen=True)
class CriticalPointRecord:
    """A nondegenerate critical point.

    Attributes
    ----------
    id : int
        Position in the sorted list returned by :func:`find_critical_points`.
    position : ndarray
        Model coordinates.
    value : float
        ``f(a)``.
    index : int
        Morse index r (number of negative exponents).
    exponents : ndarray
        Sorted Lyapunov exponents.
    eigenframe : ndarray
        ``(d, n)`` columns are g-orthonormal eigenvectors in model coordinates,
        ordered like ``exponents``, each with its largest entry positive.
    """

    id: int
    position: np.ndarray
    value: float
    index: int
    exponents: np.ndarray
    eigenframe: np.ndarray

    @property
    def stable_frame(self) -> np.ndarray:
        return self.eigenframe[:, : self.index]

    @property
    def unstable_frame(self) -> np.ndarray:
        return self.eigenframe[:, self.index:]

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "position": [float(v) for v in self.position],
            "value": float(self.value),
            "index": int(self.index),
            "exponents": [float(v) for v in self.exponents],
        }


@dataclass
class HypothesisReport:
    """Outcome of the excellence, independence and nonresonance checks.

    A false flag always carries at least one witness in ``witnesses``.
    """

    excellent: bool
    rationally_independent_joint: bool
    rationally_independent_per_point: bool
    sternberg_nonresonant: bool
    witnesses: list[dict] = field(default_factory=list)
    relation_bound: int = 12
    tol: float = 1e-9
    joint_relation_bound: int = 12

    def to_json(self) -> dict:
        return {
            "excellent": self.excellent,
            "rationally_independent_joint": self.rationally_independent_joint,
            "rationally_independent_per_point": self.rationally_independent_per_point,
            "sternberg_nonresonant": self.sternberg_nonresonant,
            "relation_bound": self.relation_bound,
            "joint_relation_bound": self.joint_relation_bound,
            "tol": self.tol,
            "witnesses": self.witnesses,
        }


# ---------------------------------------------------------------------------
# linear algebra at a point
# ---------------------------------------------------------------------------

def _orient(frame: np.ndarray) -> np.ndarray:
    out = frame.copy()
    for j in range(out.shape[1]):
        i = int(np.argmax(np.abs(out[:, j]) - 1e-9 * np.arange(out.shape[0])))
        if out[i, j] < 0:
            out[:, j] = -out[:, j]
    return out


def eigen_decomposition(model: ManifoldModel, a: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    """Exponents and model-coordinate eigenframe at ``a`` (no criticality check)."""
    a = np.asarray(a, float)
    H = model.riemannian_hessian(a)
    G = model.tangent_metric(a)
    chi, xi = scipy.linalg.eigh(H, G)
    B = model.tangent_basis(a)
    return chi, _orient(B @ xi)


def lyapunov_exponents(model: ManifoldModel, a: Sequence[float]) -> np.ndarray:
    """Sorted Lyapunov exponents at a critical point.

    Raises
    ------
    NotCritical
        If ``|V_f(a)| >= 1e-8``.
    """
    a = np.asarray(a, float)
    v = model.vector_field(a[None, :])[0]
    if np.linalg.norm(v) >= NOT_CRITICAL_TOL:
        raise NotCritical(f"|V_f| = {np.linalg.norm(v):.3e} at {a.tolist()}")
    return eigen_decomposition(model, a)[0]


def sylvester_index(H: np.ndarray) -> int:
    """Number of negative eigenvalues of a symmetric matrix via an LDL^T factorization."""
    _, D, _ = scipy.linalg.ldl(np.asarray(H, float))
    return int(np.sum(np.linalg.eigvalsh(D) < 0))


# ---------------------------------------------------------------------------
# search
# ---------------------------------------------------------------------------

def _seeds(model: ManifoldModel, density: int) -> np.ndarray:
    if model.is_sphere:
        th = (np.arange(density) + 0.5) * math.pi / density
        ph = (np.arange(2 * density) + 0.5) * math.pi / density
        T, P = np.meshgrid(th, ph, indexing="ij")
        return np.column_stack([(np.sin(T) * np.cos(P)).ravel(), (np.sin(T) * np.sin(P)).ravel(), np.cos(T).ravel()])
    ch = model.chart
    axes = [ch.lower[i] + (np.arange(density) + 0.5) * ch.extent[i] / density for i in range(model.dim)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([m.ravel() for m in mesh])


def _newton(model: ManifoldModel, x: np.ndarray, tol: float, max_iter: int = 60) -> Optional[np.ndarray]:
    for _ in range(max_iter):
        v = model.vector_field(x[None, :])[0]
        if np.linalg.norm(v) < tol:
            return x
        J = model.vector_field_jacobian(x[None, :])[0]
        if model.is_sphere:
            B = model.tangent_basis(x)
            try:
                s = np.linalg.solve(B.T @ J @ B, -(B.T @ v))
            except np.linalg.LinAlgError:
                return None
            step = B @ s
        else:
            try:
                step = np.linalg.solve(J, -v)
            except np.linalg.LinAlgError:
                return None
        nrm = np.linalg.norm(step)
        if nrm > 0.5:
            step *= 0.5 / nrm
        x = model.project(x + step)
        if not np.all(np.isfinite(x)):
            return None
    v = model.vector_field(x[None, :])[0]
    return x if np.linalg.norm(v) < tol else None


def find_critical_points(model: ManifoldModel, grid_density: int = 16, newton_tol: float = 1e-12) -> list[CriticalPointRecord]:
    """Locate all critical points by Newton iteration from a seed grid.

    Parameters
    ----------
    grid_density : int
        Seeds per dimension (at least 8).
    newton_tol : float
        Stopping threshold on ``|V_f|``.

    Returns
    -------
    list of CriticalPointRecord
        Sorted by (index, value, coordinates); ``id`` is the list position.

    Raises
    ------
    SingularHessian
        If a converged point has an exponent with ``|chi| < 1e-8``.
    """
    if grid_density < 8:
        raise ValueError("grid_density must be at least 8")
    if newton_tol <= 0:
        raise ValueError("newton_tol must be positive")
    found: list[np.ndarray] = []
    for x0 in _seeds(model, grid_density):
        x = _newton(model, x0.copy(), newton_tol)
        if x is None:
            continue
        x = model.wrap(x)
        if any(model.distance(x, y) < MERGE_DIST for y in found):
            continue
        found.append(x)
    raw = []
    for x in found:
        chi, frame = eigen_decomposition(model, x)
        if np.min(np.abs(chi)) < DEGENERACY_TOL:
            raise SingularHessian(f"degenerate critical point at {x.tolist()} (exponents {chi.tolist()})")
        r = int(np.sum(chi < 0))
        x = np.where(np.abs(x) < 1e-15, 0.0, x)
        raw.append((r, float(model.value(x)[0]), tuple(np.round(x, 9)), x, chi, frame))
    raw.sort(key=lambda t: (t[0], t[1], t[2]))
    return [
        CriticalPointRecord(i, x, val, r, chi, frame)
        for i, (r, val, _, x, chi, frame) in enumerate(raw)
    ]


# ---------------------------------------------------------------------------
# hypotheses
# ---------------------------------------------------------------------------

def integer_relation(values: Sequence[float], bound: int, tol: float) -> Optional[np.ndarray]:
    """Find a nonzero integer vector ``k`` with ``|k|_inf <= bound`` and ``|k . values| < tol``.

    Exhaustive over the box via a meet-in-the-middle split. Returns ``None``
    when no relation exists within the bound.
    """
    v = np.asarray(values, float)
    m = len(v)
    if m == 0:
        return None
    for i in range(m):
        if abs(v[i]) < tol:
            k = np.zeros(m, int)
            k[i] = 1
            return k
    rng = np.arange(-bound, bound + 1)
    h = m // 2
    left, right = v[:h], v[h:]

    def sums(part: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        if len(part) == 0:
            return np.zeros(1), np.zeros((1, 0), int)
        K = np.array(list(itertools.product(rng, repeat=len(part))), int)
        return K @ part, K

    sl, Kl = sums(left)
    sr, Kr = sums(right)
    order = np.argsort(sr)
    sr_sorted = sr[order]
    lo = np.searchsorted(sr_sorted, -sl - tol, side="left")
    hi = np.searchsorted(sr_sorted, -sl + tol, side="right")
    for i in np.nonzero(hi > lo)[0]:
        for j in order[lo[i]:hi[i]]:
            k = np.concatenate([Kl[i], Kr[j]])
            if np.any(k != 0) and abs(k @ v) < tol:
                return k
    return None


def _relation_witness(kind: str, labels: Sequence[str], values: np.ndarray, k: np.ndarray) -> dict:
    return {
        "kind": kind,
        "relation": {lab: int(c) for lab, c in zip(labels, k) if c != 0},
        "residual": float(abs(k @ values)),
    }


def _independence(labels: list[str], values: np.ndarray, bound: int, tol: float, kind: str) -> Optional[dict]:
    mags = np.abs(values)
    # equal magnitudes give an immediate relation
    for i in range(len(mags)):
        for j in range(i + 1, len(mags)):
            if abs(mags[i] - mags[j]) < tol:
                k = np.zeros(len(mags), int)
                k[i] = 1
                k[j] = -1 if np.sign(values[i]) == np.sign(values[j]) else 1
                return _relation_witness(kind, labels, values, k)
    k = integer_relation(values, bound, tol)
    return None if k is None else _relation_witness(kind, labels, values, k)


def _sternberg(rec: CriticalPointRecord, bound: int, tol: float) -> Optional[dict]:
    chi = np.asarray(rec.exponents, float)
    n = len(chi)
    for total in range(2, bound + 1):
        for combo in itertools.combinations_with_replacement(range(n), total):
            k = np.bincount(combo, minlength=n)
            s = float(k @ chi)
            for i in range(n):
                if abs(chi[i] - s) < tol:
                    return {
                        "kind": "sternberg",
                        "critical_id": rec.id,
                        "i": i,
                        "k": [int(v) for v in k],
                        "residual": abs(chi[i] - s),
                    }
    return None


def check_hypotheses(records: Sequence[CriticalPointRecord], relation_bound: int = 12, tol: float = 1e-9,
                     values: Optional[Sequence[float]] = None) -> HypothesisReport:
    """Excellence, rational independence (per point and joint) and Sternberg nonresonance.

    Independence is refuted or not within ``|k|_inf <= relation_bound``; a
    ``True`` flag therefore certifies only the absence of small relations.
    """
    if relation_bound < 2:
        raise ValueError("relation_bound must be at least 2")
    witnesses: list[dict] = []
    vals = [r.value for r in records] if values is None else list(values)
    excellent = True
    for i, j in itertools.combinations(range(len(vals)), 2):
        if abs(vals[i] - vals[j]) <= tol:
            excellent = False
            witnesses.append({"kind": "excellence", "critical_ids": [records[i].id, records[j].id],
                              "value": float(vals[i])})
            break
    per_point = True
    for rec in records:
        labels = [f"chi[{rec.id}][{j}]" for j in range(len(rec.exponents))]
        w = _independence(labels, np.asarray(rec.exponents, float), relation_bound, tol, "per_point")
        if w is not None:
            per_point = False
            w["critical_id"] = rec.id
            witnesses.append(w)
    labels = [f"chi[{rec.id}][{j}]" for rec in records for j in range(len(rec.exponents))]
    allv = np.concatenate([np.asarray(r.exponents, float) for r in records]) if records else np.zeros(0)
    jb = _joint_bound(len(allv), relation_bound)
    wj = _independence(labels, allv, jb, tol, "joint")
    joint = wj is None
    if wj is not None:
        witnesses.append(wj)
    sternberg = True
    for rec in records:
        w = _sternberg(rec, relation_bound, tol)
        if w is not None:
            sternberg = False
            witnesses.append(w)
    return HypothesisReport(excellent, joint, per_point, sternberg, witnesses, relation_bound, tol, jb)


def _joint_bound(m: int, bound: int) -> int:
    # keep the half-box enumeration below ~4e6 entries
    half = (m + 1) // 2
    b = bound
    while b > 1 and (2 * b + 1) ** half > 4_000_000:
        b -= 1
    return b
