"""Gradient-flow integration, limit sets, basins and connection counting.

The integrator is an embedded Dormand-Prince 5(4) pair advancing a whole batch
of states with one shared step size, so that thousands of quadrature nodes or
shooting seeds are integrated with vectorized field evaluations. Output times
are hit exactly by shortening the step. The variational equation
``dJ/dt = DV(x) J`` can be carried along.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .critical import CriticalPointRecord
from .errors import ArtifactError
from .manifold import ManifoldModel

__all__ = [
    "Trajectory",
    "BasinMap",
    "ConnectionCount",
    "StepFailure",
    "NoConvergence",
    "IndexGapNotOne",
    "AmbiguousCluster",
    "UnsupportedDimension",
    "flow",
    "integrate",
    "limits",
    "limits_batch",
    "basin_map",
    "count_connections",
]

MIN_STEP = 1e-14


class StepFailure(ArtifactError):
    """Adaptive step size fell below the underflow threshold."""


class NoConvergence(ArtifactError):
    """No critical point captured the trajectory within the horizon."""


class IndexGapNotOne(ArtifactError):
    """Connections are only counted between indices r and r+1."""


class AmbiguousCluster(ArtifactError):
    """Two detected connecting orbits are too close to separate reliably."""


class UnsupportedDimension(ArtifactError):
    """Unstable manifolds of dimension three or more are not searched."""


# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4


@dataclass
class Trajectory:
    """A single integrated orbit.

    Attributes
    ----------
    times : ndarray
        Monotone (increasing for forward, decreasing for backward flow).
    states : ndarray
        ``(len(times), d)``.
    jacobians : ndarray or None
        ``(len(times), d, d)`` coordinate Jacobians of the flow map.
    """

    times: np.ndarray
    states: np.ndarray
    jacobians: Optional[np.ndarray] = None


@dataclass
class BasinMap:
    """Forward and backward limits of a grid of points (ids from ``critical``)."""

    grid: np.ndarray
    alpha_limit: np.ndarray
    omega_limit: np.ndarray

    def to_rows(self) -> list[list]:
        return [
            [*map(float, x), int(a), int(o)]
            for x, a, o in zip(self.grid, self.alpha_limit, self.omega_limit)
        ]


@dataclass
class ConnectionCount:
    """Signed number of flow lines from ``source`` (index r) to ``target`` (index r+1)."""

    source: int
    target: int
    signed_count: int
    orbits: list[Trajectory] = field(default_factory=list)
    signs: list[int] = field(default_factory=list)
    offset_stable: bool = True

    @property
    def orbit_count(self) -> int:
        return len(self.orbits)

    def to_json(self) -> dict:
        return {
            "source": self.source,
            "target": self.target,
            "signed_count": self.signed_count,
            "orbit_count": self.orbit_count,
            "signs": list(self.signs),
            "offset_stable": self.offset_stable,
        }


# ---------------------------------------------------------------------------
# integrator
# ---------------------------------------------------------------------------

class _System:
    """Right-hand side for states, optionally augmented with Jacobians."""

    def __init__(self, model: ManifoldModel, with_jacobian: bool):
        self.model = model
        self.jac = with_jacobian
        self.d = model.ambient_dim

    def __call__(self, Y: np.ndarray, sgn: float) -> np.ndarray:
        d = self.d
        X = Y[:, :d]
        V = self.model.vector_field(X)
        if not self.jac:
            return sgn * V
        J = Y[:, d:].reshape(-1, d, d)
        DV = self.model.vector_field_jacobian(X)
        dJ = np.einsum("nij,njk->nik", DV, J)
        return sgn * np.concatenate([V, dJ.reshape(len(Y), -1)], axis=1)

    def post(self, Y: np.ndarray) -> np.ndarray:
        if self.model.is_sphere:
            Y = Y.copy()
            Y[:, : self.d] = self.model.project(Y[:, : self.d])
        return Y


def _dopri(sys: _System, Y0: np.ndarray, t_out: np.ndarray, rtol: float, atol: float,
           h_max: Optional[float] = None, record_steps: bool = False):
    """Integrate ``Y0`` from 0 through the times in ``t_out`` (same sign, monotone).

    Returns the states at ``t_out`` and, when ``record_steps``, every accepted step.
    """
    t_out = np.asarray(t_out, float)
    if len(t_out) == 0:
        return np.empty((0, *Y0.shape)), None
    span = float(t_out[-1])
    sgn = 1.0 if span >= 0 else -1.0
    targets = np.abs(t_out)
    if np.any(np.diff(targets) < 0):
        raise ValueError("output times must be monotone in the flow direction")
    out = np.empty((len(t_out), *Y0.shape))
    steps_t, steps_y = ([0.0], [Y0.copy()]) if record_steps else (None, None)
    Y = Y0.copy()
    t = 0.0
    k_out = 0
    while k_out < len(targets) and targets[k_out] <= 0.0:
        out[k_out] = Y
        k_out += 1
    if k_out == len(targets):
        return out, (np.array(steps_t), np.array(steps_y)) if record_steps else None
    f0 = sys(Y, sgn)
    scale0 = atol + rtol * np.abs(Y)
    d0 = np.sqrt(np.mean((Y / scale0) ** 2))
    d1 = np.sqrt(np.mean((f0 / scale0) ** 2))
    h = 0.01 * d0 / d1 if d0 > 1e-5 and d1 > 1e-5 else 1e-3
    h = min(h, targets[-1])
    if h_max is not None:
        h = min(h, h_max)
    K = np.empty((7, *Y.shape))
    while k_out < len(targets):
        target = targets[k_out]
        hit = t + h >= target * (1 - 1e-15)
        step = target - t if hit else h
        K[0] = f0
        for s in range(1, 7):
            Ys = Y + step * np.tensordot(np.asarray(_A[s]), K[:s], axes=(0, 0))
            K[s] = sys(Ys, sgn)
        Ynew = Y + step * np.tensordot(_B5[:6], K[:6], axes=(0, 0))
        err = step * np.tensordot(_E, K, axes=(0, 0))
        scale = atol + rtol * np.maximum(np.abs(Y), np.abs(Ynew))
        en = float(np.sqrt(np.max(np.mean((err / scale) ** 2, axis=1)))) if Y.size else 0.0
        if not np.isfinite(en):
            en = 1e10
        if en <= 1.0:
            t = target if hit else t + step
            Y = sys.post(Ynew)
            f0 = sys(Y, sgn) if sys.model.is_sphere else K[6]
            if record_steps:
                steps_t.append(sgn * t)
                steps_y.append(Y.copy())
            if hit:
                out[k_out] = Y
                k_out += 1
                while k_out < len(targets) and targets[k_out] <= t:
                    out[k_out] = Y
                    k_out += 1
            fac = 5.0 if en == 0 else min(5.0, max(0.2, 0.9 * en ** -0.2))
            if not hit or step >= h:
                h = h * fac
        else:
            h = step * max(0.2, 0.9 * en ** -0.2)
        if h_max is not None:
            h = min(h, h_max)
        if h < MIN_STEP:
            raise StepFailure(f"step size {h:.3e} below {MIN_STEP} at t={sgn * t:.6g}")
    return out, (np.array(steps_t), np.array(steps_y)) if record_steps else None


def flow(model: ManifoldModel, X0: np.ndarray, times: Sequence[float], rtol: float = 1e-10,
         atol: Optional[float] = None, with_jacobian: bool = False, h_max: Optional[float] = None):
    """Flow a batch of points to each of ``times`` (all of one sign).

    Returns
    -------
    states : ndarray
        ``(len(times), N, d)``.
    jacobians : ndarray, optional
        ``(len(times), N, d, d)`` when ``with_jacobian``.
    """
    X0 = np.atleast_2d(np.asarray(X0, float))
    d = model.ambient_dim
    atol = rtol * 1e-2 if atol is None else atol
    sys = _System(model, with_jacobian)
    Y0 = X0
    if with_jacobian:
        Y0 = np.concatenate([X0, np.tile(np.eye(d).ravel(), (len(X0), 1))], axis=1)
    out, _ = _dopri(sys, Y0, np.asarray(times, float), rtol, atol, h_max)
    if with_jacobian:
        return out[..., :d], out[..., d:].reshape(*out.shape[:2], d, d)
    return out


def integrate(model: ManifoldModel, x0: Sequence[float], t_final: float, rtol: float = 1e-10,
              with_jacobian: bool = False, atol: Optional[float] = None,
              h_max: Optional[float] = None) -> Trajectory:
    """Integrate one orbit, recording every accepted step.

    ``t_final`` may be negative for the backward flow.

    Raises
    ------
    StepFailure
    """
    x0 = np.asarray(x0, float)
    model.chart_for(x0)
    d = model.ambient_dim
    atol = rtol * 1e-2 if atol is None else atol
    sys = _System(model, with_jacobian)
    Y0 = x0[None, :]
    if with_jacobian:
        Y0 = np.concatenate([Y0, np.eye(d).ravel()[None, :]], axis=1)
    _, (ts, ys) = _dopri(sys, Y0, np.array([t_final]), rtol, atol, h_max, record_steps=True)
    states = ys[:, 0, :d]
    jac = ys[:, 0, d:].reshape(-1, d, d) if with_jacobian else None
    return Trajectory(ts, states, jac)


# ---------------------------------------------------------------------------
# limits and basins
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _Capture:
    positions: np.ndarray
    ids: np.ndarray
    escape: list  # per record: dual basis rows for directions that grow in each time direction


def _capture_data(model: ManifoldModel, records: Sequence[CriticalPointRecord]) -> dict:
    data = {}
    for sgn in (1.0, -1.0):
        rows = []
        for rec in records:
            E = rec.eigenframe
            G = model.metric(rec.position)[0] if not model.is_sphere else np.eye(model.ambient_dim)
            grow = (sgn * rec.exponents) > 0
            rows.append((E[:, grow].T @ G))  # coordinates along growing eigen-directions
        data[sgn] = rows
    return data


def _captured(model, X, records, cap, radius, esc_tol):
    """Per point: id of a capturing critical point or -1."""
    ids = np.full(len(X), -1, int)
    for rec, rows in zip(records, cap):
        D = model.displacement(X, rec.position)
        dist = np.linalg.norm(D, axis=1)
        near = (dist < radius) & (ids < 0)
        if not near.any():
            continue
        if rows.shape[0] == 0:
            ids[near] = rec.id
        else:
            esc = np.max(np.abs(D[near] @ rows.T), axis=1)
            sel = np.nonzero(near)[0][esc <= esc_tol]
            ids[sel] = rec.id
    return ids


def limits_batch(model: ManifoldModel, X0: np.ndarray, records: Sequence[CriticalPointRecord],
                 horizon: float = 200.0, capture_radius: float = 1e-4, rtol: float = 1e-10,
                 chunk: float = 2.0, escape_tol: float = 1e-14, jobs: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Backward and forward limit ids for a batch of points.

    A point is captured by a critical point ``a`` once it is within
    ``capture_radius`` of ``a`` and its components along the directions that
    grow (in the current time direction) are below ``escape_tol``; for a sink
    that second condition is vacuous.

    Raises
    ------
    NoConvergence
        Reports the first point not captured within ``horizon``.
    """
    X0 = np.atleast_2d(np.asarray(X0, float))
    if jobs > 1 and len(X0) > 256:
        parts = np.array_split(np.arange(len(X0)), jobs)
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            futs = [ex.submit(limits_batch, model, X0[p], records, horizon, capture_radius, rtol, chunk,
                              escape_tol, 1) for p in parts]
            res = [f.result() for f in futs]
        return np.concatenate([r[0] for r in res]), np.concatenate([r[1] for r in res])
    cap = _capture_data(model, records)
    result = {}
    for sgn in (-1.0, 1.0):
        X = X0.copy()
        ids = _captured(model, X, records, cap[sgn], capture_radius, escape_tol)
        t = 0.0
        while (ids < 0).any():
            if t >= horizon:
                bad = X0[np.nonzero(ids < 0)[0][0]]
                raise NoConvergence(f"no capture within horizon {horizon} ({'forward' if sgn > 0 else 'backward'}) "
                                    f"for start point {bad.tolist()}")
            act = np.nonzero(ids < 0)[0]
            dt = min(chunk, horizon - t)
            X[act] = flow(model, X[act], [sgn * dt], rtol=rtol)[0]
            t += dt
            ids[act] = _captured(model, X[act], records, cap[sgn], capture_radius, escape_tol)
        result[sgn] = ids
    return result[-1.0], result[1.0]


def limits(model: ManifoldModel, x0: Sequence[float], records: Sequence[CriticalPointRecord],
           horizon: float = 200.0, capture_radius: float = 1e-4, rtol: float = 1e-10) -> tuple[int, int]:
    """``(alpha_id, omega_id)`` of a single point."""
    x0 = np.asarray(x0, float)
    model.chart_for(x0)
    a, o = limits_batch(model, x0[None, :], records, horizon, capture_radius, rtol)
    return int(a[0]), int(o[0])


def basin_map(model: ManifoldModel, records: Sequence[CriticalPointRecord], grid_density: int = 128,
              grid: Optional[np.ndarray] = None, jobs: int = 1, **kwargs) -> BasinMap:
    """Limits for every point of a grid (default: ``grid_density`` per dimension).

    The torus grid has nodes at multiples of ``2pi/grid_density``; the sphere
    grid uses ``grid_density`` cell-centred latitudes and twice as many longitudes.
    """
    if grid is None:
        grid = _basin_grid(model, grid_density)
    a, o = limits_batch(model, grid, records, jobs=jobs, **kwargs)
    return BasinMap(np.asarray(grid), a, o)


def _basin_grid(model: ManifoldModel, m: int) -> np.ndarray:
    if model.is_sphere:
        th = (np.arange(m) + 0.5) * math.pi / m
        ph = np.arange(2 * m) * math.pi / m
        T, P = np.meshgrid(th, ph, indexing="ij")
        return np.column_stack([(np.sin(T) * np.cos(P)).ravel(), (np.sin(T) * np.sin(P)).ravel(), np.cos(T).ravel()])
    ch = model.chart
    axes = [ch.lower[i] + np.arange(m) * ch.extent[i] / m for i in range(model.dim)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([g.ravel() for g in mesh])


# ---------------------------------------------------------------------------
# connections
# ---------------------------------------------------------------------------

def _seed_points(model, a: CriticalPointRecord, U: np.ndarray, delta: float) -> np.ndarray:
    return model.project(a.position[None, :] + delta * U)


def _closest_approach(model, b: CriticalPointRecord, X0: np.ndarray, t_max: float, rtol: float):
    """Distance to ``b`` and E^u(b) coordinates at the closest recorded approach.

    Near ``b`` the unstable coordinates keep their sign, so the accepted
    integrator steps resolve the closest approach well enough.
    """
    sys = _System(model, False)
    _, (ts, S) = _dopri(sys, np.atleast_2d(X0), np.array([t_max]), rtol, rtol * 1e-2, record_steps=True)
    D = model.displacement(S, b.position)
    dist = np.linalg.norm(D, axis=2)
    k = np.argmin(dist, axis=0)
    idx = np.arange(len(X0))
    Dk = D[k, idx]
    Eu = b.unstable_frame
    comp = Dk @ (model.metric(b.position)[0] @ Eu if not model.is_sphere else Eu)
    return dist[k, idx], comp, ts[k]


def _transport_sign(model, a: CriticalPointRecord, b: CriticalPointRecord, x0: np.ndarray,
                    t_arrive: float, rtol: float, segment: float = 0.5) -> int:
    """Orientation sign of the unstable frame of ``a`` carried to ``b``."""
    frame = a.unstable_frame.copy()
    x = x0.copy()
    t = 0.0
    while t < t_arrive - 1e-12:
        dt = min(segment, t_arrive - t)
        S, J = flow(model, x[None, :], [dt], rtol=rtol, with_jacobian=True)
        x = S[0, 0]
        frame = J[0, 0] @ frame
        q, r = np.linalg.qr(frame)
        frame = q * np.sign(np.diag(r))
        t += dt
    v = model.vector_field(x[None, :])[0]
    basis = np.column_stack([v / np.linalg.norm(v), b.unstable_frame])
    if model.is_sphere:
        T = model.tangent_basis(x)
        M = np.linalg.lstsq(T.T @ basis, T.T @ frame, rcond=None)[0]
    else:
        M = np.linalg.lstsq(basis, frame, rcond=None)[0]
    s = np.sign(np.linalg.det(M))
    return int(s) if s != 0 else 0


def _connections_1d(model, records, a, b, delta, rtol, horizon, capture_radius):
    u = a.unstable_frame[:, 0]
    seeds = _seed_points(model, a, np.array([u, -u]), delta)
    _, omega = limits_batch(model, seeds, records, horizon=horizon, capture_radius=capture_radius, rtol=rtol)
    found = []
    for side, (x0, o) in enumerate(zip(seeds, omega)):
        if o == b.id:
            found.append((x0, 1.0 if side == 0 else -1.0))
    return found


def _connections_2d(model, a, b, n_shoot, delta, rtol, t_max, accept_dist, bisect_tol=1e-10):
    E = a.unstable_frame
    phi = (np.arange(n_shoot) + 0.5) * 2 * math.pi / n_shoot

    def seeds_at(ph):
        return _seed_points(model, a, (np.outer(np.cos(ph), E[:, 0]) + np.outer(np.sin(ph), E[:, 1])), delta)

    dist, comp, _ = _closest_approach(model, b, seeds_at(phi), t_max, rtol)
    s = np.sign(comp[:, 0])
    brackets = [(phi[i], phi[i] + 2 * math.pi / n_shoot) for i in range(n_shoot)
                if s[i] * s[(i + 1) % n_shoot] < 0]
    if not brackets:
        return [], 2 * math.pi / n_shoot
    lo = np.array([br[0] for br in brackets])
    hi = np.array([br[1] for br in brackets])
    slo = np.sign(_closest_approach(model, b, seeds_at(lo), t_max, rtol)[1][:, 0])
    while np.max(hi - lo) > bisect_tol:
        mid = 0.5 * (lo + hi)
        sm = np.sign(_closest_approach(model, b, seeds_at(mid), t_max, rtol)[1][:, 0])
        left = sm == slo
        lo = np.where(left, mid, lo)
        hi = np.where(left, hi, mid)
    mid = 0.5 * (lo + hi)
    d_mid, _, t_arr = _closest_approach(model, b, seeds_at(mid), t_max, rtol)
    keep = d_mid < accept_dist
    out = [(x0, float(ph), float(ta)) for x0, ph, ta, k in zip(seeds_at(mid), mid, t_arr, keep) if k]
    return out, 2 * math.pi / n_shoot


def count_connections(model: ManifoldModel, records: Sequence[CriticalPointRecord], a: CriticalPointRecord,
                      b: CriticalPointRecord, n_shoot: int = 360, delta: float = 1e-3, rtol: float = 1e-10,
                      t_max: float = 30.0, horizon: float = 200.0, capture_radius: float = 1e-4,
                      accept_dist: float = 1e-3, check_offset: bool = True) -> ConnectionCount:
    """Signed count of flow lines from ``a`` to ``b`` (``index(b) = index(a) + 1``).

    Seeds lie on the sphere of radius ``delta`` in the unstable eigenspace of
    ``a``. For a one-dimensional unstable space the two seeds are followed to
    their forward limit. For a two-dimensional one, connections are the sign
    changes, around the seed circle, of the E^u(b) component at the closest
    approach to ``b``; each bracket is refined by bisection and accepted when
    the refined orbit passes within ``accept_dist`` of ``b``.

    Signs: the eigenframe order orients ``E^u(a)`` and ``E^u(b)``; the frame of
    ``E^u(a)`` is transported along the orbit with the variational equation
    and compared with ``(V/|V|, E^u(b))`` at the closest approach.

    Raises
    ------
    IndexGapNotOne, AmbiguousCluster, UnsupportedDimension
    """
    if b.index != a.index + 1:
        raise IndexGapNotOne(f"index({b.id})={b.index} is not index({a.id})+1={a.index + 1}")
    if n_shoot < 360:
        raise ValueError("n_shoot must be at least 360")
    m = model.dim - a.index

    def run(dl):
        if m == 1:
            hits = _connections_1d(model, records, a, b, dl, rtol, horizon, capture_radius)
            orbits, signs = [], []
            for x0, side in hits:
                traj = integrate(model, x0, t_max, rtol=rtol)
                orbits.append(traj)
                # the transported frame stays parallel to V, so the sign is the side of the seed
                signs.append(int(side))
            return orbits, signs, []
        if m == 2:
            hits, spacing = _connections_2d(model, a, b, n_shoot, dl, rtol, t_max, accept_dist)
            uniq = []
            for x0, ph, ta in sorted(hits, key=lambda h: h[1]):
                if uniq and abs(ph - uniq[-1][1]) < 1e-6:
                    continue
                uniq.append((x0, ph, ta))
            angles = [u[1] for u in uniq]
            for i in range(len(angles)):
                for j in range(i + 1, len(angles)):
                    gap = abs(angles[i] - angles[j])
                    gap = min(gap, 2 * math.pi - gap)
                    if gap < 10 * spacing:
                        raise AmbiguousCluster(f"orbits at angles {angles[i]:.6f} and {angles[j]:.6f} "
                                               f"closer than 10 seed spacings; increase n_shoot")
            orbits, signs = [], []
            for x0, ph, ta in uniq:
                orbits.append(integrate(model, x0, ta, rtol=rtol))
                signs.append(_transport_sign(model, a, b, x0, ta, rtol))
            return orbits, signs, angles
        raise UnsupportedDimension(f"unstable dimension {m} at critical point {a.id}")

    orbits, signs, _ = run(delta)
    stable = True
    if check_offset:
        o2, s2, _ = run(delta / 2)
        stable = len(o2) == len(orbits) and sum(s2) == sum(signs)
    return ConnectionCount(a.id, b.id, int(sum(signs)), orbits, signs, stable)
