"""Discrete optimal transport between body measures.

Exact plans come from a network-simplex LP (POT's ``emd``); entropic plans
from a log-domain Sinkhorn loop with epsilon annealing, rounded onto the
transport polytope at the end so both solvers return feasible couplings.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import logsumexp

from . import geometry as geo

# POT probes every installed array backend on import; only numpy is used here.
for _key in ("POT_BACKEND_DISABLE_PYTORCH", "POT_BACKEND_DISABLE_TENSORFLOW",
             "POT_BACKEND_DISABLE_JAX", "POT_BACKEND_DISABLE_CUPY"):
    os.environ.setdefault(_key, "1")
import ot  # noqa: E402

DEFAULT_EXACT_BUDGET = 250_000


class TransportError(RuntimeError):
    """Solver failure: budget exceeded, infeasible input or non-convergence."""


class LipschitzError(ValueError):
    pass


# ---------------------------------------------------------------------------
# F and costs


def F_func(t, allow_negative: bool = False):
    """F(t) = t - log(1 + t), convex and increasing on [0, inf).

    ``allow_negative`` extends the evaluation to t > -1 (needed for the
    matrix function tr F(D^2 theta) whose eigenvalues may be below 1).
    """
    t = np.asarray(t, dtype=float)
    lower = -1.0 if allow_negative else 0.0
    if np.any(t < lower) or (allow_negative and np.any(t <= -1.0)):
        raise ValueError(f"F argument out of range (lower bound {lower:g})")
    out = t - np.log1p(t)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class EuclideanPower:
    """c(x, y) = |x - y|^p."""

    p: float = 1.0

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("EuclideanPower needs p >= 1")

    def matrix(self, x, y) -> np.ndarray:
        d = cdist(x, y)
        return d if self.p == 1 else d**self.p

    def to_dict(self) -> dict:
        return {"type": "euclidean_power", "p": self.p}


@dataclass(frozen=True)
class CheegerF:
    """c(x, y) = F(d_che |x - y|)."""

    d_che: float

    def __post_init__(self):
        if not self.d_che > 0:
            raise ValueError("CheegerF needs a positive Cheeger constant")

    def matrix(self, x, y) -> np.ndarray:
        return F_func(self.d_che * cdist(x, y))

    def to_dict(self) -> dict:
        return {"type": "cheeger_F", "d_che": self.d_che}


CostSpec = Union[EuclideanPower, CheegerF]


def cost_from_dict(data: dict) -> CostSpec:
    kind = data.get("type")
    if kind == "euclidean_power":
        return EuclideanPower(float(data.get("p", 1.0)))
    if kind == "cheeger_F":
        return CheegerF(float(data["d_che"]))
    raise ValueError(f"unknown cost type {kind!r}")


# ---------------------------------------------------------------------------
# measures


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    points: np.ndarray
    weights: np.ndarray
    source_tag: dict = field(default_factory=dict)

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        w = np.asarray(self.weights, dtype=float).ravel()
        if pts.shape[0] != w.size or w.size == 0:
            raise ValueError("points and weights disagree in length")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and nonnegative")
        if abs(w.sum() - 1.0) > 1e-12 * max(1, w.size) ** 0.5:
            raise ValueError(f"weights sum to {w.sum():.15g}, not 1")
        if np.unique(pts, axis=0).shape[0] != pts.shape[0]:
            raise ValueError("support points must be pairwise distinct")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, points, tag: dict | None = None) -> "DiscreteMeasure":
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return cls(pts, np.full(pts.shape[0], 1.0 / pts.shape[0]), tag or {})

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.weights.size

    def mean(self) -> np.ndarray:
        return self.weights @ self.points

    def push_forward(self, A=None, b=None) -> "DiscreteMeasure":
        """Image measure under x -> A x + b."""
        pts = self.points if A is None else self.points @ np.asarray(A, float).T
        if b is not None:
            pts = pts + np.asarray(b, float)
        return DiscreteMeasure(pts, self.weights, dict(self.source_tag))

    def translate(self, v) -> "DiscreteMeasure":
        return self.push_forward(None, v)


def discretize_body(body: geo.ConvexBody, resolution: int, refine: bool = True,
                    subcells: int = 4) -> DiscreteMeasure:
    """Grid carrier of the uniform measure on ``body``.

    A regular ``resolution^n`` grid covers the bounding box. Cells whose
    corners are all inside get full weight at their center; with ``refine``
    the remaining cells that touch the body are subsampled (``subcells^n``
    points) and carry the inside fraction as weight, located at the mean of
    their inside subsamples. Without ``refine`` only cell centers inside the
    body are kept, with equal weights.
    """
    if resolution < 1:
        raise ValueError("resolution must be positive")
    n = body.dim
    bbox = body.bounding_box()
    edges = [np.linspace(lo, hi, resolution + 1) for lo, hi in bbox]
    step = (bbox[:, 1] - bbox[:, 0]) / resolution
    centers_axes = [0.5 * (e[:-1] + e[1:]) for e in edges]
    cgrid = np.meshgrid(*centers_axes, indexing="ij")
    centers = np.stack([g.ravel() for g in cgrid], axis=1)
    center_in = body.contains(centers)
    cell_volume = float(np.prod(step))

    if not refine:
        if not np.any(center_in):
            raise ValueError("no grid cell center lies inside the body; raise the resolution")
        pts = centers[center_in]
        return DiscreteMeasure.uniform(pts, {
            "resolution": resolution, "refined": False,
            "volume_estimate": cell_volume * int(center_in.sum()),
            "cell_diameter": float(np.linalg.norm(step)),
        })

    kgrid = np.meshgrid(*edges, indexing="ij")
    corners = np.stack([g.ravel() for g in kgrid], axis=1)
    corner_in = body.contains(corners).reshape((resolution + 1,) * n)
    all_in = np.ones((resolution,) * n, dtype=bool)
    any_in = np.zeros((resolution,) * n, dtype=bool)
    for shift in np.ndindex(*(2,) * n):
        sl = tuple(slice(s, s + resolution) for s in shift)
        all_in &= corner_in[sl]
        any_in |= corner_in[sl]
    all_in, any_in = all_in.ravel(), any_in.ravel()
    partial = (any_in | center_in) & ~all_in

    points = centers.copy()
    frac = all_in.astype(float)
    if np.any(partial):
        offs = (np.arange(subcells) + 0.5) / subcells - 0.5
        sub = np.stack([g.ravel() for g in np.meshgrid(*([offs] * n), indexing="ij")], axis=1)
        sub = sub * step
        idx = np.flatnonzero(partial)
        samples = centers[idx][:, None, :] + sub[None, :, :]
        inside = body.contains(samples.reshape(-1, n)).reshape(idx.size, -1)
        counts = inside.sum(axis=1)
        frac[idx] = counts / sub.shape[0]
        hit = counts > 0
        sums = (samples * inside[:, :, None]).sum(axis=1)
        points[idx[hit]] = sums[hit] / counts[hit, None]
    keep = frac > 0
    if not np.any(keep):
        raise ValueError("no grid cell meets the body; raise the resolution")
    w = frac[keep]
    return DiscreteMeasure(points[keep], w / w.sum(), {
        "resolution": resolution, "refined": True,
        "volume_estimate": cell_volume * float(w.sum()),
        "cell_diameter": float(np.linalg.norm(step)),
    })


# ---------------------------------------------------------------------------
# plans and solvers


@dataclass(eq=False)
class TransportPlan:
    rows: np.ndarray
    cols: np.ndarray
    mass: np.ndarray
    primal_cost: float
    marginal_defect: float
    solver: str
    source: DiscreteMeasure
    target: DiscreteMeasure
    cost: CostSpec
    epsilon: float | None = None
    info: dict = field(default_factory=dict)

    def dense(self) -> np.ndarray:
        out = np.zeros((len(self.source), len(self.target)))
        np.add.at(out, (self.rows, self.cols), self.mass)
        return out

    def recompute_cost(self) -> float:
        x = self.source.points[self.rows]
        y = self.target.points[self.cols]
        return float(self.mass @ _pair_costs(self.cost, x, y))

    def header(self) -> dict:
        return {"cost": self.cost.to_dict(), "marginal_defect": self.marginal_defect,
                "solver": self.solver, "epsilon": self.epsilon, "value": self.primal_cost,
                "n_source": len(self.source), "n_target": len(self.target)}


def _pair_costs(cost: CostSpec, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    d = np.linalg.norm(x - y, axis=1)
    if isinstance(cost, EuclideanPower):
        return d if cost.p == 1 else d**cost.p
    return F_func(cost.d_che * d)


def _marginal_defect(G: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    return float(max(np.abs(G.sum(axis=1) - a).max(), np.abs(G.sum(axis=0) - b).max()))


def _plan_from_dense(G, mu, nu, cost, C, solver, epsilon=None, info=None) -> TransportPlan:
    r, c = np.nonzero(G > 0)
    mass = G[r, c]
    return TransportPlan(r, c, mass, float(np.sum(mass * C[r, c])),
                         _marginal_defect(G, mu.weights, nu.weights), solver, mu, nu, cost,
                         epsilon, info or {})


def solve_exact(mu: DiscreteMeasure, nu: DiscreteMeasure, cost: CostSpec,
                budget: int = DEFAULT_EXACT_BUDGET) -> TransportPlan:
    """Optimal coupling of the transport LP (network simplex)."""
    pairs = len(mu) * len(nu)
    if pairs > budget:
        raise TransportError(
            f"{len(mu)}x{len(nu)} = {pairs} pairs exceeds the exact budget {budget}; "
            "use entropic or raise the budget"
        )
    if mu.dim != nu.dim:
        raise TransportError("measures live in different dimensions")
    C = np.ascontiguousarray(cost.matrix(mu.points, nu.points))
    G, log = ot.emd(mu.weights, nu.weights, C, numItermax=max(10**7, 200 * pairs), log=True)
    if log.get("result_code", 1) != 1:
        raise TransportError(f"network simplex failed: {log.get('warning')}")
    return _plan_from_dense(np.asarray(G), mu, nu, cost, C, "exact")


def solve_entropic(mu: DiscreteMeasure, nu: DiscreteMeasure, cost: CostSpec,
                   epsilon: float, max_iter: int = 100_000, tol: float = 1e-9,
                   anneal: bool = True) -> TransportPlan:
    """Log-domain Sinkhorn plan, rounded onto the exact marginals.

    Convergence is measured by the row-marginal defect of the scaled kernel
    (columns are exact after each half step). With ``anneal`` the
    regularisation decreases geometrically from the cost scale to
    ``epsilon``, warm-starting the potentials.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    C = cost.matrix(mu.points, nu.points)
    loga, logb = np.log(mu.weights), np.log(nu.weights)
    f = np.zeros(len(mu))
    g = np.zeros(len(nu))
    schedule = [epsilon]
    if anneal:
        top = max(float(C.max()), epsilon)
        k = max(0, int(math.ceil(math.log(top / epsilon, 4))))
        schedule = [epsilon * 4.0**j for j in range(k, 0, -1)] + [epsilon]
    it = 0
    defect = math.inf
    for eps in schedule:
        final = eps == schedule[-1]
        stage_tol = tol if final else max(tol, 1e-4)
        while it < max_iter:
            it += 1
            f = -eps * logsumexp(logb[None, :] + (g[None, :] - C) / eps, axis=1)
            g = -eps * logsumexp(loga[:, None] + (f[:, None] - C) / eps, axis=0)
            if it % 10 == 0:
                logP = loga[:, None] + logb[None, :] + (f[:, None] + g[None, :] - C) / eps
                defect = float(np.abs(np.exp(logsumexp(logP, axis=1)) - mu.weights).max())
                if defect <= stage_tol:
                    break
    if defect > tol:
        raise TransportError(
            f"Sinkhorn did not reach defect {tol:g} in {max_iter} iterations (defect {defect:.3e})"
        )
    P = np.exp(loga[:, None] + logb[None, :] + (f[:, None] + g[None, :] - C) / epsilon)
    G = _round_to_marginals(P, mu.weights, nu.weights)
    return _plan_from_dense(G, mu, nu, cost, C, "entropic", epsilon,
                            {"iterations": it, "sinkhorn_defect": defect})


def _round_to_marginals(P: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Project a nearly feasible plan onto the transport polytope (Altschuler et al.)."""
    r = P.sum(axis=1)
    X = P * np.minimum(a / np.where(r > 0, r, 1.0), 1.0)[:, None]
    c = X.sum(axis=0)
    X = X * np.minimum(b / np.where(c > 0, c, 1.0), 1.0)[None, :]
    er = a - X.sum(axis=1)
    ec = b - X.sum(axis=0)
    s = er.sum()
    if s > 0:
        X = X + np.outer(er, ec) / s
    return X


def transport_cost(mu: DiscreteMeasure, nu: DiscreteMeasure, cost: CostSpec,
                   solver: str = "exact", **kwargs) -> float:
    """W_c(mu, nu) via the chosen solver."""
    if solver == "exact":
        return solve_exact(mu, nu, cost, **kwargs).primal_cost
    if solver == "entropic":
        if "epsilon" not in kwargs:
            C = cost.matrix(mu.points, nu.points)
            kwargs["epsilon"] = 0.01 * float(np.median(C[C > 0])) if np.any(C > 0) else 1e-3
        return solve_entropic(mu, nu, cost, **kwargs).primal_cost
    raise ValueError(f"unknown solver {solver!r}")


# ---------------------------------------------------------------------------
# diagnostics


def dual_lower_bound(mu: DiscreteMeasure, nu: DiscreteMeasure,
                     phi: Callable[[np.ndarray], np.ndarray],
                     lipschitz_tol: float = 1e-12, chunk: int = 1024) -> float:
    """int phi d mu - int phi d nu for a 1-Lipschitz phi (checked on the supports)."""
    pts = np.concatenate([mu.points, nu.points])
    vals = np.asarray(phi(pts), dtype=float)
    for s in range(0, pts.shape[0], chunk):
        d = cdist(pts[s:s + chunk], pts)
        dv = np.abs(vals[s:s + chunk, None] - vals[None, :])
        if np.any(dv > d * (1.0 + lipschitz_tol) + lipschitz_tol):
            raise LipschitzError("phi is not 1-Lipschitz on the union of the supports")
    m = len(mu)
    return float(mu.weights @ vals[:m] - nu.weights @ vals[m:])


def barycentric_map(plan: TransportPlan) -> tuple[np.ndarray, np.ndarray]:
    """Source points and the mass-weighted mean of their targets."""
    m = len(plan.source)
    row_mass = np.bincount(plan.rows, weights=plan.mass, minlength=m)
    acc = np.zeros((m, plan.target.dim))
    np.add.at(acc, plan.rows, plan.mass[:, None] * plan.target.points[plan.cols])
    used = row_mass > 0
    return plan.source.points[used], acc[used] / row_mass[used, None]


def monotonicity_defect(sources: np.ndarray, images: np.ndarray, chunk: int = 1024) -> float:
    """min over pairs of (T(x) - T(y)).(x - y); nonnegative for monotone maps."""
    worst = math.inf
    sq_x = np.einsum("ij,ij->i", sources, images)
    for s in range(0, sources.shape[0], chunk):
        xs, ts = sources[s:s + chunk], images[s:s + chunk]
        # (t_i - t_j).(x_i - x_j) = t_i.x_i + t_j.x_j - t_i.x_j - t_j.x_i
        val = sq_x[s:s + chunk, None] + sq_x[None, :] - ts @ sources.T - xs @ images.T
        worst = min(worst, float(val.min()))
    return worst


def northwest_corner_plan(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Feasible coupling from the north-west corner rule."""
    a = np.array(a, dtype=float)
    b = np.array(b, dtype=float)
    G = np.zeros((a.size, b.size))
    i = j = 0
    while i < a.size and j < b.size:
        m = min(a[i], b[j])
        G[i, j] += m
        a[i] -= m
        b[j] -= m
        if a[i] <= 1e-15 and i < a.size - 1:
            i += 1
        elif b[j] <= 1e-15 and j < b.size - 1:
            j += 1
        elif i == a.size - 1 and j == b.size - 1:
            break
        elif a[i] <= b[j]:
            i += 1
        else:
            j += 1
    return G


def random_feasible_plan(a: np.ndarray, b: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """North-west corner plan after random row/column orderings."""
    pr, pc = rng.permutation(a.size), rng.permutation(b.size)
    G = northwest_corner_plan(a[pr], b[pc])
    out = np.empty_like(G)
    out[np.ix_(pr, pc)] = G
    return out


@dataclass(frozen=True)
class TranslationSearch:
    """Grid of translations ``center + [-half_width, half_width]^n`` plus local refinement."""

    half_width: float
    points_per_axis: int = 5
    refinements: int = 2
    center: tuple[float, ...] | None = None


def wasserstein_translation_min(mu: DiscreteMeasure, nu: DiscreteMeasure, cost: CostSpec,
                                search: TranslationSearch, solver: str = "exact",
                                **solver_kwargs) -> tuple[np.ndarray, float]:
    """min over v of W_c(tau_v mu, nu) by grid search with local refinement.

    The zero translation is always evaluated, so the result never exceeds
    W_c(mu, nu).
    """
    n = mu.dim
    center = np.zeros(n) if search.center is None else np.asarray(search.center, float)

    def value(v):
        return transport_cost(mu.translate(v), nu, cost, solver, **solver_kwargs)

    best_v = np.zeros(n)
    best = value(best_v)
    half = float(search.half_width)
    k = max(2, int(search.points_per_axis))
    for level in range(search.refinements + 1):
        ticks = np.linspace(-half, half, k)
        for offset in np.stack(np.meshgrid(*([ticks] * n), indexing="ij"), -1).reshape(-1, n):
            v = center + offset
            val = value(v)
            if val < best - 1e-15:
                best, best_v = val, v
        center = best_v
        half = half / (k - 1)
    return best_v, best


# ---------------------------------------------------------------------------
# export


def write_plan_csv(plan: TransportPlan, path) -> None:
    """CSV of (i, j, mass) preceded by a one-line JSON header comment."""
    with open(path, "w", newline="") as fh:
        fh.write("# " + json.dumps(plan.header(), sort_keys=True) + "\n")
        w = csv.writer(fh)
        w.writerow(["i", "j", "mass"])
        for i, j, m in zip(plan.rows, plan.cols, plan.mass):
            w.writerow([int(i), int(j), repr(float(m))])


def write_measure_csv(mu: DiscreteMeasure, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{k}" for k in range(mu.dim)] + ["weight"])
        for p, wt in zip(mu.points, mu.weights):
            w.writerow([repr(float(c)) for c in p] + [repr(float(wt))])


def read_measure_csv(path) -> DiscreteMeasure:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return DiscreteMeasure(data[:, :-1], data[:, -1])
