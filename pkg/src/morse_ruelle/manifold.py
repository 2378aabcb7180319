"""Compact model manifolds carrying a metric and a Morse function.

Two built-in models are provided:

* ``FlatTorus2``: the torus ``[0, 2pi)^2`` with the flat metric and
  ``f = c1 cos(th1) + c2 cos(th2)``.
* ``RoundSphere2Embedded``: the unit sphere in R^3 with the induced metric and
  either ``f = a x^2 + b y^2 + c z^2`` or the height function ``f = z``.

Points are stored in chart coordinates for flat models and in ambient
coordinates for the embedded sphere. All evaluators are vectorized over an
``(N, d)`` array of points, where ``d`` is the ambient coordinate count.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Mapping, Optional, Sequence

import numpy as np

from .errors import ArtifactError
from .expr import compile_expression

__all__ = [
    "BuiltinKind",
    "Chart",
    "ManifoldModel",
    "FormSample",
    "QuadratureGrid",
    "PointOutsideAtlas",
    "DegreeMismatch",
    "UnknownBuiltin",
    "BadParams",
    "builtin",
    "model_from_config",
    "gradient_at",
    "wedge_pair",
    "volume_form",
    "torus_grid",
    "sphere_latlon_grid",
    "sphere_mercator_grid",
    "box_grid",
    "default_grid",
]

TWO_PI = 2.0 * math.pi
FD_STEP = 1e-6
SPHERE_TOL = 1e-12


class PointOutsideAtlas(ArtifactError):
    """No chart of the model contains the requested point."""


class DegreeMismatch(ArtifactError):
    """Form degrees are incompatible with the requested operation."""


class UnknownBuiltin(ArtifactError):
    """The requested built-in model name is not recognised."""


class BadParams(ArtifactError):
    """Model parameters violate the Morse or well-posedness requirements."""


class BuiltinKind(str, Enum):
    FLAT_TORUS2 = "flat_torus2"
    ROUND_SPHERE2 = "round_sphere2"
    CUSTOM = "custom"


Array = np.ndarray
PointFn = Callable[[Array], Array]


@dataclass(frozen=True)
class Chart:
    """A coordinate patch with its geometric data.

    Parameters
    ----------
    lower, upper : array_like
        Box bounds of the domain.
    periodic : tuple of bool
        Coordinates identified modulo ``upper - lower``.
    metric_fn : callable
        ``(N, d) -> (N, d, d)`` metric tensor in chart coordinates.
    f_fn : callable
        ``(N, d) -> (N,)`` Morse function.
    grad_f_fn : callable, optional
        ``(N, d) -> (N, d)`` coordinate gradient (differential) of ``f``.
    hess_f_fn : callable, optional
        ``(N, d) -> (N, d, d)`` coordinate second derivatives of ``f``.
    embedded_sphere : bool
        Coordinates are ambient R^3 and points are constrained to ``|p| = 1``.
    metric_constant : bool
        Metric independent of the point, enabling the analytic Jacobian of V.
    """

    lower: Array
    upper: Array
    periodic: tuple[bool, ...]
    metric_fn: PointFn
    f_fn: PointFn
    grad_f_fn: Optional[PointFn] = None
    hess_f_fn: Optional[PointFn] = None
    embedded_sphere: bool = False
    metric_constant: bool = True

    @property
    def extent(self) -> Array:
        return np.asarray(self.upper, float) - np.asarray(self.lower, float)

    def contains(self, X: Array) -> Array:
        X = np.atleast_2d(X)
        ok = np.all(np.isfinite(X), axis=1)
        if self.embedded_sphere:
            return ok & (np.abs(np.linalg.norm(X, axis=1) - 1.0) < 1e-6)
        lo, hi = np.asarray(self.lower, float), np.asarray(self.upper, float)
        per = np.asarray(self.periodic, bool)
        inside = (X >= lo - 1e-12) & (X <= hi + 1e-12)
        return ok & np.all(inside | per, axis=1)


def _identity_metric(d: int) -> PointFn:
    eye = np.eye(d)
    return lambda X: np.broadcast_to(eye, (np.atleast_2d(X).shape[0], d, d))


@dataclass(frozen=True)
class ManifoldModel:
    """A compact Riemannian manifold with a Morse function.

    Attributes
    ----------
    name : str
    dim : int
        Intrinsic dimension n.
    charts : list of Chart
    builtin_kind : BuiltinKind
    params : dict
        Named float parameters that built the model.
    """

    name: str
    dim: int
    charts: tuple[Chart, ...]
    builtin_kind: BuiltinKind
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise BadParams("dim must be positive")
        if not self.charts:
            raise BadParams("at least one chart is required")
        ginv = None
        ch = self.charts[0]
        if ch.metric_constant and not ch.embedded_sphere:
            G = np.asarray(ch.metric_fn(np.asarray(ch.lower, float)[None, :]), float)[0]
            ginv = None if np.allclose(G, np.eye(len(G)), rtol=0, atol=0) else np.linalg.inv(G)
        object.__setattr__(self, "_ginv", ginv)

    # -- geometry -----------------------------------------------------
    @property
    def chart(self) -> Chart:
        return self.charts[0]

    @property
    def ambient_dim(self) -> int:
        return len(self.chart.lower)

    @property
    def is_sphere(self) -> bool:
        return self.chart.embedded_sphere

    @property
    def periodic(self) -> Array:
        return np.asarray(self.chart.periodic, bool)

    def chart_for(self, x: Array) -> Chart:
        x = np.asarray(x, float)
        if x.shape[-1] != self.ambient_dim:
            raise PointOutsideAtlas(f"point has {x.shape[-1]} coordinates, expected {self.ambient_dim}")
        for ch in self.charts:
            if bool(np.all(ch.contains(x))):
                return ch
        raise PointOutsideAtlas(f"no chart covers {x.tolist()}")

    def project(self, X: Array) -> Array:
        """Map points back onto the model (sphere normalization)."""
        if self.is_sphere:
            return X / np.linalg.norm(X, axis=-1, keepdims=True)
        return X

    def wrap(self, X: Array) -> Array:
        """Canonical representative: periodic coordinates reduced to the box."""
        X = self.project(np.asarray(X, float))
        per = self.periodic
        if per.any():
            lo = np.asarray(self.chart.lower, float)
            ext = self.chart.extent
            Y = np.array(X, copy=True)
            Y[..., per] = lo[per] + np.mod(Y[..., per] - lo[per], ext[per])
            Y[..., per] = np.where(np.abs(Y[..., per] - (lo + ext)[per]) < 1e-9, lo[per], Y[..., per])
            return Y
        return X

    def displacement(self, X: Array, a: Array) -> Array:
        """Shortest coordinate displacement ``X - a`` (wrap-around aware)."""
        D = np.asarray(X, float) - np.asarray(a, float)
        per = self.periodic
        if per.any():
            ext = self.chart.extent
            D[..., per] = D[..., per] - ext[per] * np.round(D[..., per] / ext[per])
        return D

    def distance(self, X: Array, a: Array) -> Array:
        return np.linalg.norm(self.displacement(X, a), axis=-1)

    def metric(self, X: Array) -> Array:
        return np.asarray(self.chart.metric_fn(np.atleast_2d(X)), float)

    # -- Morse function -----------------------------------------------
    def value(self, X: Array) -> Array:
        X = np.atleast_2d(np.asarray(X, float))
        return np.asarray(self.chart.f_fn(X), float)

    def differential(self, X: Array) -> Array:
        """Coordinate (ambient for the sphere) gradient of ``f``."""
        X = np.atleast_2d(np.asarray(X, float))
        if self.chart.grad_f_fn is not None:
            return np.asarray(self.chart.grad_f_fn(X), float)
        return self.fd_differential(X)

    def fd_differential(self, X: Array) -> Array:
        X = np.atleast_2d(np.asarray(X, float))
        h = FD_STEP * np.where(np.isfinite(self.chart.extent), self.chart.extent, 1.0)
        out = np.empty_like(X)
        for j in range(X.shape[1]):
            e = np.zeros(X.shape[1])
            e[j] = h[j]
            out[:, j] = (self.chart.f_fn(X + e) - self.chart.f_fn(X - e)) / (2 * h[j])
        return out

    def ambient_hessian(self, X: Array) -> Array:
        X = np.atleast_2d(np.asarray(X, float))
        if self.chart.hess_f_fn is not None:
            return np.asarray(self.chart.hess_f_fn(X), float)
        h = FD_STEP * np.where(np.isfinite(self.chart.extent), self.chart.extent, 1.0) * 10
        d = X.shape[1]
        H = np.empty((X.shape[0], d, d))
        for j in range(d):
            e = np.zeros(d)
            e[j] = h[j]
            H[:, :, j] = (self.differential(X + e) - self.differential(X - e)) / (2 * h[j])
        return 0.5 * (H + np.swapaxes(H, 1, 2))

    # -- gradient vector field ------------------------------------------
    def vector_field(self, X: Array) -> Array:
        """``V_f = grad f`` for a batch of points, ``(N, d) -> (N, d)``."""
        X = np.atleast_2d(np.asarray(X, float))
        g = self.differential(X)
        if self.is_sphere:
            return g - np.sum(X * g, axis=1, keepdims=True) * X
        if self.chart.metric_constant:
            return g if self._ginv is None else g @ self._ginv.T
        return np.linalg.solve(self.metric(X), g[..., None])[..., 0]

    def vector_field_jacobian(self, X: Array) -> Array:
        """Coordinate Jacobian ``DV`` of the (extended) vector field."""
        X = np.atleast_2d(np.asarray(X, float))
        n, d = X.shape
        if self.is_sphere:
            g = self.differential(X)
            H = self.ambient_hessian(X)
            Hp = np.einsum("nij,nj->ni", H, X)
            pg = np.sum(X * g, axis=1)
            J = H - np.einsum("ni,nj->nij", X, g + Hp) - pg[:, None, None] * np.eye(d)
            return J
        if self.chart.metric_constant:
            H = self.ambient_hessian(X)
            return H if self._ginv is None else np.einsum("ij,njk->nik", self._ginv, H)
        h = FD_STEP * self.chart.extent
        J = np.empty((n, d, d))
        for j in range(d):
            e = np.zeros(d)
            e[j] = h[j]
            J[:, :, j] = (self.vector_field(X + e) - self.vector_field(X - e)) / (2 * h[j])
        return J

    # -- intrinsic data at a point ----------------------------------------
    def tangent_basis(self, x: Array) -> Array:
        """``(d, n)`` basis of the tangent space; orthonormal for the sphere."""
        x = np.asarray(x, float)
        if not self.is_sphere:
            return np.eye(self.dim)
        # Householder-free construction: complete x to an orthonormal frame.
        q, _ = np.linalg.qr(np.column_stack([x, np.eye(3)]))
        B = q[:, 1:3]
        if np.linalg.det(np.column_stack([x, B])) < 0:
            B = B[:, ::-1]
        return B

    def tangent_metric(self, x: Array) -> Array:
        if self.is_sphere:
            return np.eye(self.dim)
        return self.metric(x)[0]

    def riemannian_hessian(self, x: Array) -> Array:
        """Hessian of ``f`` in tangent-basis coordinates (exact at critical points)."""
        x = np.asarray(x, float)
        H = self.ambient_hessian(x)[0]
        if self.is_sphere:
            g = self.differential(x)[0]
            B = self.tangent_basis(x)
            return B.T @ (H - float(x @ g) * np.eye(3)) @ B
        return 0.5 * (H + H.T)

    def negated(self) -> "ManifoldModel":
        """The same manifold carrying ``-f``."""
        ch = self.chart

        def neg(fn):
            return None if fn is None else (lambda X, fn=fn: -np.asarray(fn(X)))

        nch = Chart(
            lower=ch.lower,
            upper=ch.upper,
            periodic=ch.periodic,
            metric_fn=ch.metric_fn,
            f_fn=neg(ch.f_fn),
            grad_f_fn=neg(ch.grad_f_fn),
            hess_f_fn=neg(ch.hess_f_fn),
            embedded_sphere=ch.embedded_sphere,
            metric_constant=ch.metric_constant,
        )
        params = dict(self.params)
        params["negated"] = 0.0 if params.get("negated", 0.0) else 1.0
        return ManifoldModel(f"-({self.name})", self.dim, (nch,), self.builtin_kind, params)


# ---------------------------------------------------------------------------
# built-in models
# ---------------------------------------------------------------------------

def _flat_torus(c1: float, c2: float) -> ManifoldModel:
    for nm, c in (("c1", c1), ("c2", c2)):
        if not np.isfinite(c) or c == 0:
            raise BadParams(f"{nm} must be finite and nonzero, got {c}")
    c = np.array([c1, c2], float)

    def f(X):
        return c1 * np.cos(X[:, 0]) + c2 * np.cos(X[:, 1])

    def grad(X):
        return -c * np.sin(X)

    def hess(X):
        H = np.zeros((X.shape[0], 2, 2))
        H[:, 0, 0] = -c1 * np.cos(X[:, 0])
        H[:, 1, 1] = -c2 * np.cos(X[:, 1])
        return H

    chart = Chart(
        lower=np.zeros(2),
        upper=np.full(2, TWO_PI),
        periodic=(True, True),
        metric_fn=_identity_metric(2),
        f_fn=f,
        grad_f_fn=grad,
        hess_f_fn=hess,
    )
    return ManifoldModel(
        f"FlatTorus2(c1={c1!r}, c2={c2!r})", 2, (chart,), BuiltinKind.FLAT_TORUS2, {"c1": float(c1), "c2": float(c2)}
    )


def _round_sphere(a: float, b: float, c: float) -> ManifoldModel:
    vals = (a, b, c)
    if not all(np.isfinite(v) for v in vals):
        raise BadParams("sphere parameters must be finite")
    height = a == 0 and b == 0 and c == 1
    if not height and len({a, b, c}) != 3:
        raise BadParams(f"quadratic sphere needs pairwise distinct (a, b, c), got {vals}")
    A = np.array(vals, float)

    if height:
        def f(X):
            return X[:, 2].copy()

        def grad(X):
            out = np.zeros_like(X)
            out[:, 2] = 1.0
            return out

        def hess(X):
            return np.zeros((X.shape[0], 3, 3))
        label = "RoundSphere2Embedded(f=z)"
    else:
        def f(X):
            return X**2 @ A

        def grad(X):
            return 2.0 * A * X

        def hess(X):
            return np.broadcast_to(2.0 * np.diag(A), (X.shape[0], 3, 3)).copy()
        label = f"RoundSphere2Embedded(a={a!r}, b={b!r}, c={c!r})"

    chart = Chart(
        lower=-np.ones(3),
        upper=np.ones(3),
        periodic=(False, False, False),
        metric_fn=_identity_metric(3),
        f_fn=f,
        grad_f_fn=grad,
        hess_f_fn=hess,
        embedded_sphere=True,
    )
    return ManifoldModel(label, 2, (chart,), BuiltinKind.ROUND_SPHERE2, {"a": float(a), "b": float(b), "c": float(c)})


_ALIASES = {
    "flattorus2": BuiltinKind.FLAT_TORUS2,
    "flat_torus2": BuiltinKind.FLAT_TORUS2,
    "torus": BuiltinKind.FLAT_TORUS2,
    "roundsphere2embedded": BuiltinKind.ROUND_SPHERE2,
    "round_sphere2": BuiltinKind.ROUND_SPHERE2,
    "round_sphere2_embedded": BuiltinKind.ROUND_SPHERE2,
    "sphere": BuiltinKind.ROUND_SPHERE2,
}


def builtin(name: str, params: Optional[Mapping[str, float]] = None) -> ManifoldModel:
    """Construct a built-in model.

    Parameters
    ----------
    name : str
        ``"FlatTorus2"`` or ``"RoundSphere2Embedded"`` (snake-case aliases
        ``flat_torus2`` and ``round_sphere2`` are accepted).
    params : mapping, optional
        ``{"c1", "c2"}`` for the torus (defaults ``1, sqrt(2)``);
        ``{"a", "b", "c"}`` for the sphere (defaults ``0, 0, 1``, the height
        function ``f = z``).

    Raises
    ------
    UnknownBuiltin, BadParams
    """
    kind = _ALIASES.get(str(name).lower())
    if kind is None:
        raise UnknownBuiltin(f"unknown built-in model {name!r}")
    params = dict(params or {})
    try:
        if kind is BuiltinKind.FLAT_TORUS2:
            allowed = {"c1", "c2"}
            _reject_unknown(params, allowed)
            return _flat_torus(float(params.get("c1", 1.0)), float(params.get("c2", math.sqrt(2.0))))
        _reject_unknown(params, {"a", "b", "c"})
        return _round_sphere(float(params.get("a", 0.0)), float(params.get("b", 0.0)), float(params.get("c", 1.0)))
    except (TypeError, ValueError) as exc:
        raise BadParams(str(exc)) from None


def _reject_unknown(params: Mapping[str, Any], allowed: set[str]) -> None:
    extra = set(params) - allowed
    if extra:
        raise BadParams(f"unknown parameters {sorted(extra)}; allowed {sorted(allowed)}")


def custom_model(expression: str, dim: int, lower: Sequence[float], upper: Sequence[float],
                 periodic: Sequence[bool], name: str = "custom") -> ManifoldModel:
    """Flat model whose Morse function is given as an expression in ``x1..xn``.

    Gradients use central finite differences.
    """
    names = tuple(f"x{i + 1}" for i in range(dim))
    fn = compile_expression(expression, names)
    chart = Chart(
        lower=np.asarray(lower, float),
        upper=np.asarray(upper, float),
        periodic=tuple(bool(p) for p in periodic),
        metric_fn=_identity_metric(dim),
        f_fn=fn,
    )
    return ManifoldModel(name, dim, (chart,), BuiltinKind.CUSTOM, {})


def model_from_config(section: Mapping[str, Any]) -> ManifoldModel:
    """Build a model from a parsed ``[model]`` TOML table."""
    section = dict(section)
    kind = section.pop("kind", None)
    params = section.pop("params", {})
    if kind is None:
        raise BadParams("[model] needs a 'kind'")
    if str(kind).lower() == "custom":
        expr = section.pop("f", None)
        dim = int(section.pop("dim", 2))
        lower = section.pop("lower", [0.0] * dim)
        upper = section.pop("upper", [TWO_PI] * dim)
        periodic = section.pop("periodic", [True] * dim)
        if section:
            raise BadParams(f"unknown [model] keys {sorted(section)}")
        if expr is None:
            raise BadParams("custom model needs an expression 'f'")
        return custom_model(expr, dim, lower, upper, periodic)
    if section:
        raise BadParams(f"unknown [model] keys {sorted(section)}")
    return builtin(kind, params)


def gradient_at(model: ManifoldModel, x: Sequence[float]) -> Array:
    """Gradient vector ``V_f(x) = g(x)^{-1} df(x)`` in chart coordinates.

    Raises
    ------
    PointOutsideAtlas
    """
    x = np.asarray(x, float)
    model.chart_for(x)
    return model.vector_field(x[None, :])[0]


# ---------------------------------------------------------------------------
# forms and quadrature
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FormSample:
    """A differential form given by its coefficient function.

    ``eval_fn`` maps ``(N, d)`` points to ``(N,)`` for degree 0 and n (the
    density against the Riemannian volume form), and to ``(N, C(n, k))`` on
    the increasing basis ``dx_K`` otherwise.
    """

    degree: int
    eval_fn: PointFn

    def __call__(self, X: Array) -> Array:
        return np.asarray(self.eval_fn(np.atleast_2d(X)), float)


def volume_form(model: ManifoldModel) -> FormSample:
    return FormSample(model.dim, lambda X: np.ones(np.atleast_2d(X).shape[0]))


@dataclass(frozen=True)
class QuadratureGrid:
    """Tensor quadrature rule: nodes in model coordinates and weights."""

    nodes: Array
    weights: Array
    shape: tuple[int, ...]
    kind: str

    def integrate(self, values: Array) -> float:
        return float(np.dot(self.weights, values))


def torus_grid(n1: int = 256, n2: int = 256, offset: float = 0.5) -> QuadratureGrid:
    """Periodic trapezoid rule on ``[0, 2pi)^2``; ``offset`` shifts nodes by a fraction of a cell."""
    h1, h2 = TWO_PI / n1, TWO_PI / n2
    t1 = (np.arange(n1) + offset) * h1
    t2 = (np.arange(n2) + offset) * h2
    A, B = np.meshgrid(t1, t2, indexing="ij")
    nodes = np.column_stack([A.ravel(), B.ravel()])
    return QuadratureGrid(nodes, np.full(n1 * n2, h1 * h2), (n1, n2), "torus_trapezoid")


def _sphere_nodes(z: Array, phi: Array) -> Array:
    r = np.sqrt(np.clip(1.0 - z**2, 0.0, None))
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


def sphere_latlon_grid(nlat: int = 200, nlon: int = 400) -> QuadratureGrid:
    """Latitude-longitude rule with exact cell areas; nodes at cell centres avoid the poles."""
    edges = np.linspace(0.0, math.pi, nlat + 1)
    theta = 0.5 * (edges[:-1] + edges[1:])
    band = np.cos(edges[:-1]) - np.cos(edges[1:])
    phi = (np.arange(nlon) + 0.5) * TWO_PI / nlon
    T, P = np.meshgrid(theta, phi, indexing="ij")
    W = np.repeat(band, nlon) * (TWO_PI / nlon)
    nodes = _sphere_nodes(np.cos(T.ravel()), P.ravel())
    # recompute x, y from theta directly to keep polar nodes accurate
    s = np.sin(T.ravel())
    nodes[:, 0] = s * np.cos(P.ravel())
    nodes[:, 1] = s * np.sin(P.ravel())
    return QuadratureGrid(nodes, W, (nlat, nlon), "sphere_latlon")


def sphere_mercator_grid(neta: int = 3201, nphi: int = 64, eta_max: float = 40.0) -> QuadratureGrid:
    """Rule uniform in ``eta = artanh z``; resolves boundary layers at both poles.

    Cell weights are the exact band areas ``dphi * (tanh eta_hi - tanh eta_lo)``.
    """
    edges = np.linspace(-eta_max, eta_max, neta + 1)
    eta = 0.5 * (edges[:-1] + edges[1:])
    band = np.tanh(edges[1:]) - np.tanh(edges[:-1])
    phi = (np.arange(nphi) + 0.5) * TWO_PI / nphi
    E, P = np.meshgrid(eta, phi, indexing="ij")
    sech = 1.0 / np.cosh(E.ravel())
    nodes = np.column_stack([sech * np.cos(P.ravel()), sech * np.sin(P.ravel()), np.tanh(E.ravel())])
    W = np.repeat(band, nphi) * (TWO_PI / nphi)
    return QuadratureGrid(nodes, W, (neta, nphi), "sphere_mercator")


def box_grid(model: ManifoldModel, n: int = 64) -> QuadratureGrid:
    """Midpoint rule on the chart box of a flat model."""
    ch = model.chart
    axes = [ch.lower[i] + (np.arange(n) + 0.5) * ch.extent[i] / n for i in range(model.dim)]
    mesh = np.meshgrid(*axes, indexing="ij")
    nodes = np.column_stack([m.ravel() for m in mesh])
    w = float(np.prod(ch.extent)) / n**model.dim
    return QuadratureGrid(nodes, np.full(nodes.shape[0], w), (n,) * model.dim, "box_midpoint")


def default_grid(model: ManifoldModel) -> QuadratureGrid:
    if model.builtin_kind is BuiltinKind.FLAT_TORUS2:
        return torus_grid()
    if model.is_sphere:
        return sphere_latlon_grid()
    return box_grid(model)


def _perm_sign(seq: Sequence[int]) -> int:
    s = 1
    seq = list(seq)
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                s = -s
    return s


def wedge_pair(model: ManifoldModel, a: FormSample, b: FormSample, grid: QuadratureGrid) -> float:
    """Integrate ``a ^ b`` over the model with the given quadrature rule.

    Raises
    ------
    DegreeMismatch
        If ``a.degree + b.degree != n`` or an intermediate degree is used on
        the embedded sphere.
    """
    n = model.dim
    if a.degree + b.degree != n or a.degree < 0 or b.degree < 0:
        raise DegreeMismatch(f"degrees {a.degree} + {b.degree} != {n}")
    X = grid.nodes
    k = a.degree
    if k in (0, n):
        dens = a(X).reshape(-1) * b(X).reshape(-1)
        return grid.integrate(dens)
    if model.is_sphere:
        raise DegreeMismatch("intermediate degrees are not supported on the embedded sphere")
    basis_k = list(itertools.combinations(range(n), k))
    basis_c = list(itertools.combinations(range(n), n - k))
    A = a(X).reshape(X.shape[0], len(basis_k))
    B = b(X).reshape(X.shape[0], len(basis_c))
    dens = np.zeros(X.shape[0])
    for i, K in enumerate(basis_k):
        Kc = tuple(j for j in range(n) if j not in K)
        dens += _perm_sign(K + Kc) * A[:, i] * B[:, basis_c.index(Kc)]
    return grid.integrate(dens)
