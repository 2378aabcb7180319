"""Enumeration of resonance index sets with multiplicities and witnesses.

For a critical point ``a`` of index ``r`` with exponents ``chi``, a witness in
degree ``k`` is a triple ``(alpha, I, J)`` with ``alpha`` in N^n,
``I`` a subset of the stable indices, ``J`` a subset of the unstable indices and
``|J| - |I| = k - r``. Its value is

    lambda = sum_{j in I u J} (alpha_j + 1)|chi_j| + sum_{j not in I u J} alpha_j |chi_j|.

Indices in witnesses are 0-based.
"""
from __future__ import annotations

import heapq
import itertools
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

import numpy as np

from .errors import ArtifactError

__all__ = [
    "ExponentData",
    "ResonanceWitness",
    "SpectrumEntry",
    "SpectrumTable",
    "CutoffTooLarge",
    "DimensionTooLarge",
    "enumerate_resonances",
    "multiplicity_alpha",
    "weyl_check",
    "weyl_leading",
    "even_odd_cancellation",
    "spectral_gap",
    "as_exponent_data",
]

SUPERSET_LABEL = "index-set superset; multiplicities are combinatorial upper data, exactness not guaranteed"
EXACT_LABEL = "exact under joint rational independence"
MAX_SUBSET_DIM = 20


class CutoffTooLarge(ArtifactError):
    """The number of witnesses below the cutoff exceeds the configured cap."""


class DimensionTooLarge(ArtifactError):
    """Subset enumeration beyond the supported dimension."""


@dataclass(frozen=True)
class ExponentData:
    """Minimal critical-point data needed for enumeration."""

    id: int
    index: int
    exponents: tuple[float, ...]

    def __post_init__(self) -> None:
        chi = self.exponents
        if any(c == 0 for c in chi):
            raise ValueError("exponents must be nonzero")
        if sum(1 for c in chi if c < 0) != self.index:
            raise ValueError("index must equal the number of negative exponents")


def as_exponent_data(records: Sequence) -> list[ExponentData]:
    out = []
    for i, rec in enumerate(records):
        if isinstance(rec, ExponentData):
            out.append(rec)
        else:
            out.append(ExponentData(int(getattr(rec, "id", i)), int(rec.index),
                                    tuple(float(c) for c in sorted(rec.exponents))))
    return out


@dataclass(frozen=True)
class ResonanceWitness:
    critical_id: int
    alpha: tuple[int, ...]
    I: tuple[int, ...]
    J: tuple[int, ...]
    degree: int
    value: float

    def to_json(self) -> dict:
        return {"critical_id": self.critical_id, "alpha": list(self.alpha), "I": list(self.I), "J": list(self.J)}


@dataclass
class SpectrumEntry:
    lam: float
    witnesses: list[ResonanceWitness] = field(default_factory=list)

    @property
    def multiplicity(self) -> int:
        return len(self.witnesses)

    def to_json(self) -> dict:
        return {"lambda": self.lam, "multiplicity": self.multiplicity,
                "witnesses": [w.to_json() for w in self.witnesses]}


@dataclass
class SpectrumTable:
    """Sorted resonance entries of one degree below a cutoff."""

    degree: int
    cutoff: float
    entries: list[SpectrumEntry]
    merge_tol: float
    exact: bool = False

    @property
    def label(self) -> str:
        return EXACT_LABEL if self.exact else SUPERSET_LABEL

    @property
    def lambdas(self) -> np.ndarray:
        return np.array([e.lam for e in self.entries])

    @property
    def multiplicities(self) -> np.ndarray:
        return np.array([e.multiplicity for e in self.entries], int)

    def total(self) -> int:
        return int(sum(e.multiplicity for e in self.entries))

    def to_json(self, witnesses: bool = True) -> dict:
        entries = []
        for e in self.entries:
            d = {"lambda": e.lam, "multiplicity": e.multiplicity}
            if witnesses:
                d["witnesses"] = [w.to_json() for w in e.witnesses]
            entries.append(d)
        return {"degree": self.degree, "cutoff": self.cutoff, "merge_tol": self.merge_tol,
                "exact": self.exact, "label": self.label, "entries": entries}


def _admissible_pairs(r: int, n: int, k: int) -> list[tuple[tuple[int, ...], tuple[int, ...]]]:
    pairs = []
    for nI in range(r + 1):
        nJ = nI + k - r
        if 0 <= nJ <= n - r:
            for I in itertools.combinations(range(r), nI):
                for J in itertools.combinations(range(r, n), nJ):
                    pairs.append((I, J))
    return pairs


def _alpha_stream(mags: np.ndarray, limit: float) -> Iterator[tuple[float, tuple[int, ...]]]:
    """Multi-indices in increasing ``alpha . mags`` up to ``limit`` (best-first)."""
    n = len(mags)
    start = (0,) * n
    heap = [(0.0, start, 0)]
    while heap:
        val, alpha, last = heapq.heappop(heap)
        yield val, alpha
        # canonical children: only raise coordinates >= the last raised one
        for j in range(last, n):
            child = alpha[:j] + (alpha[j] + 1,) + alpha[j + 1:]
            cv = math.fsum(a * m for a, m in zip(child, mags))
            if cv <= limit:
                heapq.heappush(heap, (cv, child, j))


def _witness_stream(pt: ExponentData, k: int, Lambda: float) -> Iterator[tuple[float, ResonanceWitness]]:
    chi = np.asarray(pt.exponents, float)
    mags = np.abs(chi)
    n = len(chi)
    streams = []
    for I, J in _admissible_pairs(pt.index, n, k):
        shift = math.fsum(mags[j] for j in I + J)
        if shift > Lambda:
            continue

        def gen(I=I, J=J, shift=shift):
            for base, alpha in _alpha_stream(mags, Lambda - shift):
                lam = math.fsum([shift, base])
                yield lam, ResonanceWitness(pt.id, alpha, I, J, k, lam)
        streams.append(gen())
    return heapq.merge(*streams, key=lambda t: t[0])


def enumerate_resonances(records: Sequence, k: int, Lambda: float, merge_tol: float = 1e-9,
                         cap: int = 10_000_000, exact: Optional[bool] = None) -> SpectrumTable:
    """Resonance candidates of degree ``k`` with ``lambda <= Lambda``.

    Parameters
    ----------
    records : sequence
        ``CriticalPointRecord`` or :class:`ExponentData` items.
    k : int
        Form degree, ``0 <= k <= n``.
    Lambda : float
        Cutoff.
    merge_tol : float
        Consecutive values closer than this are one entry.
    cap : int
        Maximum number of witnesses.
    exact : bool, optional
        Whether joint rational independence holds; when omitted it is tested
        with :func:`critical.check_hypotheses`.

    Raises
    ------
    CutoffTooLarge
    """
    pts = as_exponent_data(records)
    if not pts:
        return SpectrumTable(k, Lambda, [], merge_tol, True)
    n = len(pts[0].exponents)
    if not 0 <= k <= n:
        raise ValueError(f"degree {k} outside [0, {n}]")
    if Lambda <= 0:
        raise ValueError("Lambda must be positive")
    if exact is None:
        from .critical import check_hypotheses
        exact = check_hypotheses(pts, values=[float(i) for i in range(len(pts))]).rationally_independent_joint
    merged = heapq.merge(*(_witness_stream(p, k, Lambda) for p in pts), key=lambda t: t[0])
    entries: list[SpectrumEntry] = []
    count = 0
    for lam, w in merged:
        if lam > Lambda:
            break
        count += 1
        if count > cap:
            raise CutoffTooLarge(f"more than {cap} witnesses below {Lambda}")
        if entries and lam - entries[-1].witnesses[-1].value <= merge_tol:
            entries[-1].witnesses.append(w)
        else:
            entries.append(SpectrumEntry(lam, [w]))
    return SpectrumTable(k, float(Lambda), entries, merge_tol, bool(exact))


def multiplicity_alpha(record, alpha: Sequence[int], k: int) -> int:
    """Number of admissible ``(I, J)`` with ``alpha_j >= 1`` on ``I u J``.

    Raises
    ------
    DimensionTooLarge
        For ``n > 20``.
    """
    n = len(record.exponents)
    if n > MAX_SUBSET_DIM:
        raise DimensionTooLarge(f"n={n} exceeds {MAX_SUBSET_DIM}")
    if len(alpha) != n or any(a < 0 for a in alpha):
        raise ValueError("alpha must be a nonnegative multi-index of length n")
    r = int(record.index)
    return sum(1 for I, J in _admissible_pairs(r, n, k) if all(alpha[j] >= 1 for j in I + J))


def weyl_leading(records: Sequence, k: int, Lambda: float) -> float:
    pts = as_exponent_data(records)
    n = len(pts[0].exponents)
    s = math.fsum(1.0 / math.prod(abs(c) for c in p.exponents) for p in pts)
    return Lambda**n / (math.factorial(k) * math.factorial(n - k)) * s


def weyl_check(records: Sequence, k: int, Lambda: float) -> dict:
    """Resonance count below ``Lambda`` against the leading Weyl term."""
    table = enumerate_resonances(records, k, Lambda, exact=False)
    count = table.total()
    leading = weyl_leading(records, k, Lambda)
    return {"count": count, "leading": leading, "relative_gap": abs(count - leading) / leading}


def even_odd_cancellation(records: Sequence, Lambda: float, merge_tol: float = 1e-9) -> list[dict]:
    """Alternating sum over degrees of multiplicities at each value below ``Lambda``."""
    pts = as_exponent_data(records)
    n = len(pts[0].exponents)
    values = []
    for k in range(n + 1):
        for e in enumerate_resonances(pts, k, Lambda, merge_tol, exact=False).entries:
            values.append((e.lam, k, e.multiplicity))
    values.sort()
    groups: list[dict] = []
    for lam, k, m in values:
        if groups and lam - groups[-1]["_last"] <= merge_tol:
            g = groups[-1]
        else:
            g = {"lambda": lam, "multiplicities": [0] * (n + 1)}
            groups.append(g)
        g["multiplicities"][k] += m
        g["_last"] = lam
    for g in groups:
        del g["_last"]
        g["alternating_sum"] = int(sum((-1) ** k * m for k, m in enumerate(g["multiplicities"])))
    return groups


def spectral_gap(records: Sequence, k: int) -> float:
    """Smallest strictly positive value in the degree-``k`` table."""
    pts = as_exponent_data(records)
    Lambda = 2.0 * max(abs(c) for p in pts for c in p.exponents)
    while True:
        table = enumerate_resonances(pts, k, Lambda, exact=False)
        pos = [e.lam for e in table.entries if e.lam > table.merge_tol]
        if pos:
            return float(pos[0])
        Lambda *= 2.0
