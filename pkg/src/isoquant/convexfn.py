"""Convex potentials V, Legendre conjugates, the measure mu_V and the functional p_V.

The measure attached to a nonnegative convex ``V`` on R^n has density

    (1/Z_V) (1 + V(x)/(n-1))^(-n),

and the functional version of anisotropic perimeter is

    p_V(f) = int V*(-grad f / f^{n'}) f^{n'} + (int V d mu_V)(int f^{n'}),

with n' = n/(n-1). Radially symmetric potentials are integrated with
one-dimensional radial rules; everything else goes through adaptive cubature
on a box.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from . import geometry as geo
from .quadrature import (
    DivergentIntegralError,
    Estimate,
    QuadratureSpec,
    box_integral,
    radial_integral,
)


class ConjugateTruncationWarning(RuntimeWarning):
    """The lattice sup defining a sampled conjugate was attained on the lattice boundary."""


# ---------------------------------------------------------------------------
# potentials


@dataclass(frozen=True, eq=False)
class Indicatrix:
    """0 on ``body``, +inf outside; its conjugate is the support function."""

    body: geo.ConvexBody

    @property
    def dim(self) -> int:
        return self.body.dim


@dataclass(frozen=True)
class Quadratic:
    """V(x) = scale * |x|^2."""

    scale: float = 1.0
    dim: int = 2

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("Quadratic scale must be positive")
        if self.dim < 2:
            raise ValueError("dimension must be >= 2")


@dataclass(frozen=True)
class PowerNorm:
    """V(x) = scale * |x|^exponent with exponent > 1."""

    exponent: float
    scale: float = 1.0
    dim: int = 2

    def __post_init__(self):
        if not self.exponent > 1:
            raise ValueError("PowerNorm exponent must exceed 1")
        if not self.scale > 0:
            raise ValueError("PowerNorm scale must be positive")
        if self.dim < 2:
            raise ValueError("dimension must be >= 2")


@dataclass(frozen=True, eq=False)
class GridSampled:
    """Values of V on a regular lattice spanning ``[lo, hi]``; +inf off the lattice box.

    ``values`` has one axis per dimension; entries may be +inf. Between
    nodes V is multilinearly interpolated.
    """

    lo: np.ndarray
    hi: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        if vals.ndim < 2 or lo.shape != (vals.ndim,) or hi.shape != (vals.ndim,):
            raise ValueError("lattice bounds must match the value array dimension (n >= 2)")
        if np.any(hi <= lo) or min(vals.shape) < 3:
            raise ValueError("lattice needs lo < hi and at least 3 nodes per axis")
        if np.any(np.isnan(vals)) or np.any(vals < 0):
            raise ValueError("sampled V must be nonnegative")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return self.values.ndim

    @property
    def axes(self) -> list[np.ndarray]:
        return [np.linspace(a, b, m) for a, b, m in zip(self.lo, self.hi, self.values.shape)]

    @property
    def nodes(self) -> np.ndarray:
        grids = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    def convexity_defect(self) -> float:
        """Most negative second difference along lattice axes over finite triples."""
        worst = 0.0
        v = self.values
        for ax in range(v.ndim):
            a = np.moveaxis(v, ax, 0)
            d2 = a[:-2] + a[2:] - 2.0 * a[1:-1]
            finite = np.isfinite(a[:-2]) & np.isfinite(a[2:]) & np.isfinite(a[1:-1])
            if np.any(finite):
                worst = min(worst, float(d2[finite].min()))
        return -worst

    @classmethod
    def from_function(cls, func: Callable[[np.ndarray], np.ndarray], lo, hi, shape) -> "GridSampled":
        lo, hi = np.asarray(lo, float), np.asarray(hi, float)
        axes = [np.linspace(a, b, m) for a, b, m in zip(lo, hi, shape)]
        grids = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=1)
        return cls(lo, hi, np.asarray(func(pts), dtype=float).reshape(tuple(shape)))


ConvexFunction = Union[Indicatrix, Quadratic, PowerNorm, GridSampled]


def _radial_exponent(V) -> float | None:
    if isinstance(V, Quadratic):
        return 2.0
    if isinstance(V, PowerNorm):
        return float(V.exponent)
    return None


def conjugate_homogeneity(V: ConvexFunction) -> float | None:
    """Degree q with V*(t y) = t^q V*(y), when V* is positively homogeneous."""
    if isinstance(V, Indicatrix):
        return 1.0
    p = _radial_exponent(V)
    return None if p is None else p / (p - 1.0)


def _points(x, n: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != n:
        raise ValueError(f"expected points in R^{n}, got shape {x.shape}")
    return x, single


def _radial_value(V, r):
    return V.scale * r ** _radial_exponent(V)


def eval_V(V: ConvexFunction, x):
    """V(x) in [0, +inf]; vectorised over rows of ``x``."""
    pts, single = _points(x, V.dim)
    if isinstance(V, Indicatrix):
        out = np.where(V.body.contains(pts), 0.0, np.inf)
    elif isinstance(V, Quadratic):
        out = V.scale * np.einsum("ij,ij->i", pts, pts)
    elif isinstance(V, PowerNorm):
        out = _radial_value(V, np.linalg.norm(pts, axis=1))
    elif isinstance(V, GridSampled):
        out = _grid_interp(V)(pts)
    else:
        raise TypeError(f"unsupported potential {type(V).__name__}")
    return float(out[0]) if single else out


def _grid_interp(V: GridSampled):
    big = 1e300
    vals = np.where(np.isfinite(V.values), V.values, big)
    interp = RegularGridInterpolator(V.axes, vals, bounds_error=False, fill_value=np.inf)

    def fn(p):
        out = interp(p)
        return np.where(out >= 1e299, np.inf, out)

    return fn


def grad_V(V: ConvexFunction, x):
    pts, single = _points(x, V.dim)
    if isinstance(V, Quadratic):
        out = 2.0 * V.scale * pts
    elif isinstance(V, PowerNorm):
        p = V.exponent
        r = np.linalg.norm(pts, axis=1, keepdims=True)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(r > 0, V.scale * p * r ** (p - 2.0) * pts, 0.0)
    elif isinstance(V, Indicatrix):
        inside = V.body.contains(pts)
        out = np.where(inside[:, None], 0.0, np.nan)
    else:
        out = central_gradient(lambda q: eval_V(V, q), pts)
    return out[0] if single else out


def central_gradient(func: Callable[[np.ndarray], np.ndarray], pts: np.ndarray) -> np.ndarray:
    """Central differences with the scale-aware step h = 1e-5 (1 + |x|)."""
    pts = np.atleast_2d(pts)
    h = 1e-5 * (1.0 + np.linalg.norm(pts, axis=1))
    out = np.empty_like(pts)
    for i in range(pts.shape[1]):
        step = np.zeros_like(pts)
        step[:, i] = h
        out[:, i] = (func(pts + step) - func(pts - step)) / (2.0 * h)
    return out


def conjugate(V: ConvexFunction, y):
    """Legendre transform V*(y) = sup_x x.y - V(x).

    Closed forms for the analytic variants; for :class:`GridSampled` the sup
    runs over the lattice nodes and a :class:`ConjugateTruncationWarning` is
    emitted when a maximiser sits on the lattice boundary.
    """
    pts, single = _points(y, V.dim)
    if isinstance(V, Indicatrix):
        out = V.body.support(pts)
    elif isinstance(V, Quadratic):
        out = np.einsum("ij,ij->i", pts, pts) / (4.0 * V.scale)
    elif isinstance(V, PowerNorm):
        p, s = V.exponent, V.scale
        q = p / (p - 1.0)
        out = (p - 1.0) * s * (np.linalg.norm(pts, axis=1) / (s * p)) ** q
    elif isinstance(V, GridSampled):
        out, arg = _lattice_sup(V.nodes, V.values.ravel(), pts)
        idx = np.array(np.unravel_index(arg, V.values.shape)).T
        on_edge = np.any((idx == 0) | (idx == np.array(V.values.shape) - 1), axis=1)
        if np.any(on_edge):
            warnings.warn(
                f"{int(on_edge.sum())} conjugate value(s) attained on the lattice boundary; "
                "truncation suspected",
                ConjugateTruncationWarning,
                stacklevel=2,
            )
    else:
        raise TypeError(f"unsupported potential {type(V).__name__}")
    return float(out[0]) if single else out


def _lattice_sup(nodes: np.ndarray, values: np.ndarray, y: np.ndarray, chunk: int = 2048):
    finite = np.isfinite(values)
    idx_map = np.flatnonzero(finite)
    x, v = nodes[finite], values[finite]
    best = np.empty(y.shape[0])
    arg = np.empty(y.shape[0], dtype=int)
    for s in range(0, y.shape[0], chunk):
        scores = y[s:s + chunk] @ x.T - v
        k = np.argmax(scores, axis=1)
        best[s:s + chunk] = scores[np.arange(k.size), k]
        arg[s:s + chunk] = idx_map[k]
    return best, arg


def discrete_legendre(points, values, y) -> np.ndarray:
    """Brute-force sup over samples: max_i points_i . y - values_i."""
    points = np.asarray(points, dtype=float)
    y = np.atleast_2d(np.asarray(y, dtype=float))
    return _lattice_sup(points, np.asarray(values, dtype=float), y)[0]


def young_gap(V: ConvexFunction, x, y):
    """V(x) + V*(y) - x.y (nonnegative; zero when y = grad V(x))."""
    vx = eval_V(V, x)
    if np.any(~np.isfinite(vx)):
        raise ValueError("young_gap needs V(x) finite")
    xs, single = _points(x, V.dim)
    ys, _ = _points(y, V.dim)
    out = np.atleast_1d(vx) + np.atleast_1d(conjugate(V, ys)) - np.einsum("ij,ij->i", xs, ys)
    return float(out[0]) if single else out


# ---------------------------------------------------------------------------
# the measure mu_V


def _check_dim(V, n: int | None) -> int:
    n = V.dim if n is None else int(n)
    if n != V.dim:
        raise ValueError(f"functional dimension n={n} does not match V (dimension {V.dim})")
    if n < 2:
        raise ValueError("n must be >= 2")
    return n


def _weight_power(V, n: int, power: float, quad: QuadratureSpec) -> Estimate:
    """int (1 + V/(n-1))^(-power) dx over R^n."""
    if isinstance(V, Indicatrix):
        return Estimate(geo.volume(V.body), 0.0)
    p = _radial_exponent(V)
    if p is not None:
        # integrand ~ r^{n-1-p*power} at infinity
        if p * power <= n:
            raise DivergentIntegralError(
                f"int (1+V/(n-1))^-{power} diverges for |x|^{p:g} growth in dimension {n}"
            )
        return radial_integral(
            lambda r: (1.0 + _radial_value(V, r) / (n - 1)) ** (-power), n,
            rel_tol=min(quad.rel_tol, 1e-10),
        )
    if isinstance(V, GridSampled):
        return _lattice_integral(V, lambda v: (1.0 + v / (n - 1)) ** (-power), quad)
    raise TypeError(f"unsupported potential {type(V).__name__}")


def _lattice_integral(V: GridSampled, g, quad: QuadratureSpec) -> Estimate:
    vals = g(V.values)
    vals = np.where(np.isfinite(V.values), vals, 0.0)
    weights = np.ones(())
    for ax, a in enumerate(V.axes):
        w = np.full(a.size, a[1] - a[0])
        w[[0, -1]] *= 0.5
        weights = np.multiply.outer(weights, w)
    total = float((weights * vals).sum())
    edge = np.zeros(V.values.shape, dtype=bool)
    for ax in range(V.dim):
        sl = [slice(None)] * V.dim
        sl[ax] = [0, -1]
        edge[tuple(sl)] = True
    peak = np.abs(vals).max()
    tail = np.abs(vals[edge]).max() if peak > 0 else 0.0
    if peak == 0 or tail > 1e-14 * peak and tail * edge.sum() > quad.rel_tol * abs(total):
        raise DivergentIntegralError("Z_V infinite or quadrature domain too small")
    return Estimate(total, tail * float(weights.max()) * edge.sum())


def partition_Z(V: ConvexFunction, n: int | None = None,
                quad: QuadratureSpec | None = None) -> Estimate:
    """Z_V = int (1 + V/(n-1))^(-n) dx with an error estimate."""
    n = _check_dim(V, n)
    return _weight_power(V, n, float(n), quad or QuadratureSpec())


def mu_V_density(V: ConvexFunction, n: int | None, Z: float, x):
    n = _check_dim(V, n)
    v = np.asarray(eval_V(V, x))
    with np.errstate(over="ignore"):
        out = np.where(np.isfinite(v), (1.0 + v / (n - 1)) ** (-float(n)), 0.0) / Z
    return float(out) if out.ndim == 0 else out


def moment(V: ConvexFunction, n: int | None = None, quad: QuadratureSpec | None = None) -> float:
    """int (1 + V/(n-1)) d mu_V; raises :class:`DivergentIntegralError` if infinite."""
    n = _check_dim(V, n)
    quad = quad or QuadratureSpec()
    if isinstance(V, Indicatrix):
        return 1.0
    Z = _weight_power(V, n, float(n), quad).value
    return _weight_power(V, n, float(n - 1), quad).value / Z


def potential_mean(V: ConvexFunction, n: int | None = None,
                   quad: QuadratureSpec | None = None) -> float:
    """int V d mu_V (may be +inf)."""
    n = _check_dim(V, n)
    if isinstance(V, Indicatrix):
        return 0.0
    try:
        return (n - 1) * (moment(V, n, quad) - 1.0)
    except DivergentIntegralError:
        return math.inf


# ---------------------------------------------------------------------------
# test functions f


@dataclass(frozen=True)
class RadialProfile:
    center: np.ndarray
    value: Callable[[np.ndarray], np.ndarray]
    derivative: Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Nonnegative locally Lipschitz f with its gradient.

    ``support_box`` encloses the effective support (where all integrands of
    interest are below round-off). ``radial`` is set when f depends only on
    |x - center|, which enables one-dimensional quadrature.
    """

    value: Callable[[np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray], np.ndarray]
    dim: int
    support_box: tuple[tuple[float, float], ...] | None = None
    radial: RadialProfile | None = None
    label: str = "f"
    params: dict = field(default_factory=dict)

    def __call__(self, x):
        pts, single = _points(x, self.dim)
        out = self.value(pts)
        return float(out[0]) if single else out

    def scaled(self, c: float) -> "ScalarField":
        radial = None
        if self.radial is not None:
            r = self.radial
            radial = RadialProfile(r.center, lambda t: c * r.value(t), lambda t: c * r.derivative(t))
        return ScalarField(lambda x: c * self.value(x), lambda x: c * self.gradient(x), self.dim,
                           self.support_box, radial, f"{c:g}*{self.label}", dict(self.params))


def field_from_callable(func: Callable[[np.ndarray], np.ndarray], dim: int,
                        support_box, label: str = "f") -> ScalarField:
    """Wrap a vectorised function; gradient by central differences."""
    return ScalarField(func, lambda x: central_gradient(func, x), dim,
                       tuple(map(tuple, support_box)), None, label)


def _radial_field(center, prof, dprof, dim, box, label, params) -> ScalarField:
    center = np.asarray(center, dtype=float)

    def value(x):
        return prof(np.linalg.norm(x - center, axis=1))

    def gradient(x):
        d = x - center
        r = np.linalg.norm(d, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            unit = np.where(r[:, None] > 0, d / r[:, None], 0.0)
        return dprof(r)[:, None] * unit

    return ScalarField(value, gradient, dim, box, RadialProfile(center, prof, dprof), label, params)


def extremal_profile(V: ConvexFunction, n: int | None = None, a=None) -> ScalarField:
    """f(x) = (1 + V(x - a)/(n-1))^{-(n-1)}, the equality profile of the functional inequality."""
    n = _check_dim(V, n)
    a = np.zeros(n) if a is None else np.asarray(a, dtype=float)
    if isinstance(V, Indicatrix):
        raise ValueError("the indicatrix profile 1_K is not locally Lipschitz")
    params = {"profile": "extremal", "a": a.tolist()}
    p = _radial_exponent(V)
    if p is not None:
        s = V.scale

        def prof(r):
            return (1.0 + s * r**p / (n - 1)) ** (1.0 - n)

        def dprof(r):
            return -((1.0 + s * r**p / (n - 1)) ** (-float(n))) * s * p * r ** (p - 1.0)

        return _radial_field(a, prof, dprof, n, None, "extremal", params)

    def value(x):
        v = eval_V(V, x - a)
        return np.where(np.isfinite(v), (1.0 + v / (n - 1)) ** (1.0 - n), 0.0)

    def gradient(x):
        v = eval_V(V, x - a)
        g = grad_V(V, x - a)
        return -((1.0 + v / (n - 1)) ** (-float(n)))[:, None] * g

    box = tuple(zip(V.lo + a, V.hi + a)) if isinstance(V, GridSampled) else None
    return ScalarField(value, gradient, n, box, None, "extremal", params)


def gaussian_bump(center, precision, amplitude: float = 1.0) -> ScalarField:
    """amplitude * exp(-(x-c)^T P (x-c) / 2)."""
    c = np.asarray(center, dtype=float)
    P = np.asarray(precision, dtype=float)
    n = c.size
    lam_min = float(np.linalg.eigvalsh(P).min())
    if lam_min <= 0:
        raise ValueError("precision matrix must be positive definite")
    reach = 12.0 / math.sqrt(lam_min)

    def value(x):
        d = x - c
        return amplitude * np.exp(-0.5 * np.einsum("ij,jk,ik->i", d, P, d))

    def gradient(x):
        return -value(x)[:, None] * ((x - c) @ P)

    box = tuple((ci - reach, ci + reach) for ci in c)
    radial = None
    if np.allclose(P, P[0, 0] * np.eye(n)):
        k = P[0, 0]
        radial = RadialProfile(c, lambda r: amplitude * np.exp(-0.5 * k * r**2),
                               lambda r: -amplitude * k * r * np.exp(-0.5 * k * r**2))
    return ScalarField(value, gradient, n, box, radial, "gaussian",
                       {"center": c.tolist(), "precision": P.tolist(), "amplitude": amplitude})


def compact_bump(center, shape, exponent: float = 4.0, amplitude: float = 1.0) -> ScalarField:
    """amplitude * (1 - |S (x - c)|^2)_+^exponent, supported on an ellipsoid."""
    c = np.asarray(center, dtype=float)
    S = np.asarray(shape, dtype=float)
    n = c.size
    if exponent <= 1:
        raise ValueError("exponent must exceed 1 for a C^1 bump")
    Sinv = np.linalg.inv(S)
    half = np.linalg.norm(Sinv, axis=1)

    def value(x):
        u = (x - c) @ S.T
        base = np.clip(1.0 - np.einsum("ij,ij->i", u, u), 0.0, None)
        return amplitude * base**exponent

    def gradient(x):
        u = (x - c) @ S.T
        base = np.clip(1.0 - np.einsum("ij,ij->i", u, u), 0.0, None)
        coef = -2.0 * amplitude * exponent * base ** (exponent - 1.0)
        return coef[:, None] * (u @ S)

    box = tuple((ci - h, ci + h) for ci, h in zip(c, half))
    return ScalarField(value, gradient, n, box, None, "compact_bump",
                       {"center": c.tolist(), "shape": S.tolist(), "exponent": exponent,
                        "amplitude": amplitude})


# ---------------------------------------------------------------------------
# the functional p_V and its lower bound


@dataclass
class FunctionalTerms:
    """Pieces of p_V(f) with their quadrature error estimates."""

    conjugate_term: float
    potential_mean: float
    f_power_integral: float
    error: float
    method: str
    vanishing_hits: int = 0

    @property
    def total(self) -> float:
        if math.isinf(self.potential_mean):
            return math.inf
        return self.conjugate_term + self.potential_mean * self.f_power_integral


def _conjugate_integrand(V, n: int, fv: np.ndarray, g: np.ndarray):
    """V*(-g / f^{n'}) f^{n'} evaluated pointwise; returns (values, vanishing-set hits)."""
    nprime = n / (n - 1.0)
    q = conjugate_homogeneity(V)
    zero = fv <= 0.0
    gnorm = np.linalg.norm(g, axis=1)
    if q == 1.0:
        # 1-homogeneous: f^{n'} cancels exactly, no singular set
        return conjugate(V, -g), 0
    if q is not None:
        vs = np.atleast_1d(conjugate(V, -g))
        with np.errstate(divide="ignore", invalid="ignore"):
            logs = np.log(vs) + nprime * (1.0 - q) * np.log(fv)
            out = np.exp(logs)
        out = np.where(vs == 0.0, 0.0, out)
        hits = zero & (gnorm > 0)
        out = np.where(zero, 0.0, out)
        return out, int(hits.sum())
    # GridSampled: V* is finite with recession function max_x x.y over the lattice
    out = np.zeros(fv.size)
    pos = ~zero
    if np.any(pos):
        fp = fv[pos] ** nprime
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConjugateTruncationWarning)
            out[pos] = np.atleast_1d(conjugate(V, -g[pos] / fp[:, None])) * fp
    hits = zero & (gnorm > 0)
    if np.any(hits):
        finite = np.isfinite(V.values.ravel())
        out[hits] = discrete_legendre(V.nodes[finite], np.zeros(finite.sum()), -g[hits])
    return out, 0


def p_V_terms(V: ConvexFunction, f: ScalarField, n: int | None = None,
              quad: QuadratureSpec | None = None) -> FunctionalTerms:
    n = _check_dim(V, n)
    if f.dim != n:
        raise ValueError("f and V live in different dimensions")
    quad = quad or QuadratureSpec()
    nprime = n / (n - 1.0)
    pm = potential_mean(V, n, quad)
    if math.isinf(pm):
        # the second term alone makes p_V(f) infinite
        return FunctionalTerms(math.nan, pm, math.nan, math.inf, "divergent")
    if f.radial is not None and _radial_exponent(V) is not None and quad.box is None:
        prof, dprof = f.radial.value, f.radial.derivative
        def term(r):
            r = np.atleast_1d(r)
            fv = prof(r)
            g = np.abs(dprof(r))
            vals, _ = _conjugate_integrand(V, n, fv, np.stack([g] + [np.zeros_like(g)] * (n - 1), axis=1))
            return vals[0]

        t1 = radial_integral(term, n, rel_tol=min(quad.rel_tol, 1e-10))
        t2 = radial_integral(lambda r: prof(np.atleast_1d(r))[0] ** nprime, n,
                             rel_tol=min(quad.rel_tol, 1e-10))
        err = t1.error + (abs(pm) * t2.error if math.isfinite(pm) else 0.0)
        return FunctionalTerms(t1.value, pm, t2.value, err, "radial")

    box = quad.box or f.support_box
    if box is None:
        raise ValueError("non-radial integrands need a quadrature box (QuadratureSpec.box)")
    hits = [0]

    def integrand(x):
        fv = f.value(x)
        g = f.gradient(x)
        vals, h = _conjugate_integrand(V, n, fv, g)
        hits[0] += h
        return np.stack([vals, np.clip(fv, 0.0, None) ** nprime], axis=1)

    est = box_integral(integrand, box, quad.rel_tol, quad.abs_tol, quad.max_cells)
    t1, t2 = (float(v) for v in est.value)
    err = float(est.error[0]) + (abs(pm) * float(est.error[1]) if math.isfinite(pm) else 0.0)
    return FunctionalTerms(t1, pm, t2, err, "cubature", hits[0])


def p_V_functional(V: ConvexFunction, f: ScalarField, n: int | None = None,
                   quad: QuadratureSpec | None = None) -> float:
    """p_V(f); +inf when int V d mu_V diverges."""
    return p_V_terms(V, f, n, quad).total


def thm1_bracket(V: ConvexFunction, n: int | None = None,
                 quad: QuadratureSpec | None = None) -> float:
    """n Z_V^{1/n} int (1 + V/(n-1)) d mu_V, the f-independent constant."""
    n = _check_dim(V, n)
    quad = quad or QuadratureSpec()
    Z = partition_Z(V, n, quad).value
    return n * Z ** (1.0 / n) * moment(V, n, quad)


def f_norm(f: ScalarField, n: int, quad: QuadratureSpec | None = None) -> float:
    """||f||_{L^{n'}}."""
    quad = quad or QuadratureSpec()
    nprime = n / (n - 1.0)
    if f.radial is not None and quad.box is None:
        prof = f.radial.value
        val = radial_integral(lambda r: prof(np.atleast_1d(r))[0] ** nprime, n,
                              rel_tol=min(quad.rel_tol, 1e-10)).value
    else:
        box = quad.box or f.support_box
        if box is None:
            raise ValueError("non-radial f needs a quadrature box")
        val = float(box_integral(lambda x: np.clip(f.value(x), 0, None) ** nprime, box,
                                 quad.rel_tol, quad.abs_tol, quad.max_cells).value)
    return val ** (1.0 / nprime)


def thm1_rhs(V: ConvexFunction, n: int | None, f: ScalarField,
             quad: QuadratureSpec | None = None) -> float:
    """[n Z_V^{1/n} int (1 + V/(n-1)) d mu_V] * ||f||_{n'}."""
    n = _check_dim(V, n)
    return thm1_bracket(V, n, quad) * f_norm(f, n, quad)


# ---------------------------------------------------------------------------
# JSON


def potential_from_dict(data: dict) -> ConvexFunction:
    kind = data.get("type")
    if kind == "indicatrix":
        return Indicatrix(geo.body_from_dict(data["body"]))
    if kind == "quadratic":
        return Quadratic(float(data.get("scale", 1.0)), int(data.get("dim", 2)))
    if kind == "power_norm":
        return PowerNorm(float(data["exponent"]), float(data.get("scale", 1.0)),
                         int(data.get("dim", 2)))
    if kind == "grid":
        shape = tuple(data["shape"])
        vals = np.array([math.inf if v is None else v for v in data["values"]], float)
        return GridSampled(data["lo"], data["hi"], vals.reshape(shape))
    raise ValueError(f"unknown potential type {kind!r}")


def potential_to_dict(V: ConvexFunction) -> dict:
    if isinstance(V, Indicatrix):
        return {"type": "indicatrix", "body": geo.body_to_dict(V.body)}
    if isinstance(V, Quadratic):
        return {"type": "quadratic", "scale": V.scale, "dim": V.dim}
    if isinstance(V, PowerNorm):
        return {"type": "power_norm", "exponent": V.exponent, "scale": V.scale, "dim": V.dim}
    if isinstance(V, GridSampled):
        vals = [None if not math.isfinite(v) else float(v) for v in V.values.ravel()]
        return {"type": "grid", "lo": V.lo.tolist(), "hi": V.hi.tolist(),
                "shape": list(V.values.shape), "values": vals}
    raise TypeError(f"unsupported potential {type(V).__name__}")
