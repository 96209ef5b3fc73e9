"""Convex bodies: support functions, volumes, facets, anisotropic perimeters.

Four body variants are supported: :class:`Box`, :class:`Ball`,
:class:`Polytope` (vertex representation, n <= 3) and :class:`AffineImage`.
Volumes, centroids and facet decompositions are exact (closed forms or
simplicial decompositions); only bodies with curved boundary fall back to
quadrature, and then only for the perimeter of a ball.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence, Union

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .quadrature import (
    ball_volume, gauss_legendre, simplex_rule, sphere_area, sphere_rule, tensor_rule,
)

CONTAIN_TOL = 1e-12


class GeometryError(ValueError):
    """Invalid body, or an operation the body variant does not support."""


@dataclass(frozen=True)
class Facet:
    area: float
    outer_normal: np.ndarray
    representative_point: np.ndarray


def _vec(x, name: str) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if a.ndim != 1 or not np.all(np.isfinite(a)):
        raise GeometryError(f"{name} must be a finite 1-d vector")
    return a


class ConvexBody:
    """Common interface; concrete variants below."""

    dim: int

    def support(self, z) -> np.ndarray:  # pragma: no cover - interface
        raise NotImplementedError

    def contains(self, x, tol: float = CONTAIN_TOL) -> np.ndarray:  # pragma: no cover
        raise NotImplementedError

    def bounding_box(self) -> np.ndarray:
        """``(n, 2)`` array of per-axis ``[lo, hi]`` computed from the support function."""
        eye = np.eye(self.dim)
        return np.stack([-self.support(-eye), self.support(eye)], axis=1)


@dataclass(frozen=True, eq=False)
class Box(ConvexBody):
    half_sides: np.ndarray
    center: np.ndarray | None = None

    def __post_init__(self):
        h = _vec(self.half_sides, "half_sides")
        if h.size < 2 or np.any(h <= 0):
            raise GeometryError("Box needs n >= 2 positive half sides")
        c = np.zeros_like(h) if self.center is None else _vec(self.center, "center")
        if c.shape != h.shape:
            raise GeometryError("Box center has the wrong dimension")
        object.__setattr__(self, "half_sides", h)
        object.__setattr__(self, "center", c)

    @property
    def dim(self) -> int:
        return self.half_sides.size

    def support(self, z):
        z = np.asarray(z, dtype=float)
        return np.abs(z) @ self.half_sides + z @ self.center

    def contains(self, x, tol=CONTAIN_TOL):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.all(np.abs(x - self.center) <= self.half_sides * (1 + tol) + tol, axis=1)

    def vertices(self) -> np.ndarray:
        signs = np.array(list(itertools.product((-1.0, 1.0), repeat=self.dim)))
        return self.center + signs * self.half_sides


@dataclass(frozen=True, eq=False)
class Ball(ConvexBody):
    radius: float
    center: np.ndarray | None = None
    dimension: int = 2

    def __post_init__(self):
        if not (self.radius > 0 and math.isfinite(self.radius)):
            raise GeometryError("Ball radius must be positive")
        if self.center is None:
            c = np.zeros(self.dimension)
        else:
            c = _vec(self.center, "center")
            object.__setattr__(self, "dimension", c.size)
        if c.size < 2:
            raise GeometryError("Ball needs n >= 2")
        object.__setattr__(self, "radius", float(self.radius))
        object.__setattr__(self, "center", c)

    @property
    def dim(self) -> int:
        return self.dimension

    def support(self, z):
        z = np.asarray(z, dtype=float)
        return self.radius * np.linalg.norm(z, axis=-1) + z @ self.center

    def contains(self, x, tol=CONTAIN_TOL):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.linalg.norm(x - self.center, axis=1) <= self.radius * (1 + tol) + tol


@dataclass(frozen=True, eq=False)
class Polytope(ConvexBody):
    """Convex hull of a finite vertex list; restricted to n in {2, 3}."""

    vertices: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] < 2 or not np.all(np.isfinite(v)):
            raise GeometryError("Polytope vertices must be a finite (m, n) array with n >= 2")
        if v.shape[1] > 3:
            raise GeometryError("Polytope bodies are limited to n <= 3; use Box/Ball/AffineImage")
        if v.shape[0] < v.shape[1] + 1:
            raise GeometryError("degenerate polytope: too few vertices to span R^n")
        object.__setattr__(self, "vertices", v)
        self.hull  # validate eagerly

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @cached_property
    def hull(self) -> ConvexHull:
        centered = self.vertices - self.vertices.mean(axis=0)
        scale = np.abs(centered).max()
        if scale == 0 or np.linalg.matrix_rank(centered / scale, tol=1e-10) < self.dim:
            raise GeometryError("degenerate polytope: affine dimension < n")
        try:
            return ConvexHull(self.vertices)
        except QhullError as exc:
            raise GeometryError(f"degenerate polytope: {exc}") from exc

    @cached_property
    def extreme_points(self) -> np.ndarray:
        return self.vertices[self.hull.vertices]

    @cached_property
    def interior_point(self) -> np.ndarray:
        return self.extreme_points.mean(axis=0)

    def fan(self, apex=None) -> np.ndarray:
        """Simplices ``(k, n+1, n)`` decomposing the body, apex first."""
        apex = self.interior_point if apex is None else np.asarray(apex, dtype=float)
        tri = self.vertices[self.hull.simplices]
        return np.concatenate([np.broadcast_to(apex, (tri.shape[0], 1, self.dim)), tri], axis=1)

    @cached_property
    def _fan_volumes(self) -> np.ndarray:
        simp = self.fan()
        edges = simp[:, 1:] - simp[:, :1]
        return np.abs(np.linalg.det(edges)) / math.factorial(self.dim)

    def support(self, z):
        z = np.asarray(z, dtype=float)
        return np.max(z @ self.extreme_points.T, axis=-1)

    def contains(self, x, tol=CONTAIN_TOL):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        eq = self.hull.equations
        scale = 1.0 + np.abs(self.vertices).max()
        return np.all(x @ eq[:, :-1].T + eq[:, -1] <= tol * scale, axis=1)


@dataclass(frozen=True, eq=False)
class AffineImage(ConvexBody):
    """The body ``{A y + b : y in base}`` for invertible ``A``."""

    matrix: np.ndarray
    shift: np.ndarray
    base: ConvexBody

    def __post_init__(self):
        A = np.asarray(self.matrix, dtype=float)
        b = _vec(self.shift, "shift")
        n = self.base.dim
        if A.shape != (n, n) or b.shape != (n,):
            raise GeometryError("affine map dimensions do not match the base body")
        if not np.all(np.isfinite(A)) or abs(np.linalg.det(A)) <= 1e-14 * max(1.0, np.abs(A).max()) ** n:
            raise GeometryError("affine map is singular")
        object.__setattr__(self, "matrix", A)
        object.__setattr__(self, "shift", b)

    @property
    def dim(self) -> int:
        return self.base.dim

    @cached_property
    def inverse(self) -> np.ndarray:
        return np.linalg.inv(self.matrix)

    @cached_property
    def abs_det(self) -> float:
        return abs(float(np.linalg.det(self.matrix)))

    def support(self, z):
        z = np.asarray(z, dtype=float)
        return self.base.support(z @ self.matrix) + z @ self.shift

    def contains(self, x, tol=CONTAIN_TOL):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return self.base.contains((x - self.shift) @ self.inverse.T, tol)


Body = Union[Box, Ball, Polytope, AffineImage]


# ---------------------------------------------------------------------------
# basic operations


def support(body: ConvexBody, z) -> np.ndarray | float:
    """Support function h(z) = sup_{y in body} y . z (vectorised over leading axes)."""
    out = body.support(z)
    return float(out) if np.ndim(out) == 0 else out


def volume(body: ConvexBody) -> float:
    if isinstance(body, Box):
        return float(np.prod(2.0 * body.half_sides))
    if isinstance(body, Ball):
        return ball_volume(body.dim, body.radius)
    if isinstance(body, Polytope):
        return float(body._fan_volumes.sum())
    if isinstance(body, AffineImage):
        return body.abs_det * volume(body.base)
    raise GeometryError(f"unsupported body {type(body).__name__}")


def centroid(body: ConvexBody) -> np.ndarray:
    if isinstance(body, (Box, Ball)):
        return body.center.copy()
    if isinstance(body, Polytope):
        w = body._fan_volumes
        return (w[:, None] * body.fan().mean(axis=1)).sum(axis=0) / w.sum()
    if isinstance(body, AffineImage):
        return body.matrix @ centroid(body.base) + body.shift
    raise GeometryError(f"unsupported body {type(body).__name__}")


def affine_map(body: ConvexBody, A, b=None) -> ConvexBody:
    """Image of ``body`` under ``x -> A x + b``, kept in the simplest exact variant."""
    n = body.dim
    A = np.asarray(A, dtype=float)
    b = np.zeros(n) if b is None else _vec(b, "shift")
    if A.shape != (n, n):
        raise GeometryError("matrix dimension does not match the body")
    if abs(np.linalg.det(A)) <= 1e-14 * max(1.0, np.abs(A).max()) ** n:
        raise GeometryError("affine map is singular")
    if np.array_equal(A, np.eye(n)) and not np.any(b):
        return body
    diagonal = np.array_equal(A, np.diag(np.diag(A)))
    if isinstance(body, Box) and diagonal:
        d = np.diag(A)
        return Box(body.half_sides * np.abs(d), d * body.center + b)
    if isinstance(body, Ball) and diagonal and np.all(np.abs(np.diag(A)) == abs(A[0, 0])):
        return Ball(body.radius * abs(A[0, 0]), A @ body.center + b)
    if isinstance(body, Polytope):
        return Polytope(body.vertices @ A.T + b)
    if isinstance(body, Box) and n <= 3:
        return Polytope(body.vertices() @ A.T + b)
    if isinstance(body, AffineImage):
        return AffineImage(A @ body.matrix, A @ body.shift + b, body.base)
    return AffineImage(A, b, body)


def translate(body: ConvexBody, v) -> ConvexBody:
    return affine_map(body, np.eye(body.dim), v)


def dilate(body: ConvexBody, t: float) -> ConvexBody:
    """Image under x -> t x (about the origin)."""
    if t <= 0:
        raise GeometryError("dilation factor must be positive")
    return affine_map(body, t * np.eye(body.dim))


def normalize(body: ConvexBody) -> ConvexBody:
    """The homothetic copy of volume one, ``body / |body|^(1/n)``."""
    return dilate(body, volume(body) ** (-1.0 / body.dim))


def as_polytope(body: ConvexBody) -> Polytope | None:
    """Exact vertex representation when the body is polyhedral and n <= 3."""
    if body.dim > 3:
        return None
    if isinstance(body, Polytope):
        return body
    if isinstance(body, Box):
        return Polytope(body.vertices())
    if isinstance(body, AffineImage):
        base = as_polytope(body.base)
        if base is not None:
            return Polytope(base.extreme_points @ body.matrix.T + body.shift)
    return None


def facets(body: ConvexBody) -> list[Facet]:
    """Facet decomposition of a polyhedral body (Box, Polytope, affine images)."""
    if isinstance(body, Box):
        out = []
        full = 2.0 * body.half_sides
        for i in range(body.dim):
            area = float(np.prod(np.delete(full, i)))
            for s in (-1.0, 1.0):
                e = np.zeros(body.dim)
                e[i] = s
                out.append(Facet(area, e, body.center + s * body.half_sides[i] * e))
        return out
    if isinstance(body, Polytope):
        return _polytope_facets(body)
    if isinstance(body, AffineImage):
        try:
            base = facets(body.base)
        except GeometryError:
            raise GeometryError(
                "affine image of a ball has no facets; use the quadrature perimeter path"
            ) from None
        out = []
        for f in base:
            w = body.inverse.T @ f.outer_normal
            norm = np.linalg.norm(w)
            out.append(Facet(f.area * body.abs_det * norm, w / norm,
                             body.matrix @ f.representative_point + body.shift))
        return out
    raise GeometryError(
        f"{type(body).__name__} has no facets; the perimeter uses spherical quadrature"
    )


def _polytope_facets(body: Polytope) -> list[Facet]:
    hull = body.hull
    groups: dict[tuple, list[int]] = {}
    for k, eq in enumerate(hull.equations):
        key = tuple(np.round(eq[:-1], 9))
        groups.setdefault(key, []).append(k)
    out = []
    for ks in groups.values():
        area = 0.0
        pts = []
        for k in ks:
            simplex = body.vertices[hull.simplices[k]]
            area += _simplex_area(simplex)
            pts.append(simplex)
        normal = hull.equations[ks[0], :-1]
        normal = normal / np.linalg.norm(normal)
        out.append(Facet(area, normal, np.concatenate(pts).mean(axis=0)))
    return out


def _simplex_area(simplex: np.ndarray) -> float:
    """(n-1)-volume of an (n-1)-simplex with n vertices in R^n."""
    edges = simplex[1:] - simplex[0]
    gram = edges @ edges.T
    return math.sqrt(max(np.linalg.det(gram), 0.0)) / math.factorial(edges.shape[0])


# ---------------------------------------------------------------------------
# anisotropic perimeter


def anisotropic_perimeter(E: ConvexBody, K: ConvexBody, reflect: bool = False) -> float:
    """p_K(E) = int_{boundary E} h_K(nu) dH^{n-1}.

    The outer normal enters with a plus sign, which is the convention that
    matches the Minkowski content ``lim (|E + eps K| - |E|) / eps``.
    ``reflect=True`` evaluates h_K(-nu) instead (equivalently, uses -K).
    """
    if E.dim != K.dim:
        raise GeometryError("E and K live in different dimensions")
    if reflect:
        K = affine_map(K, -np.eye(K.dim))
    if isinstance(E, Ball):
        return E.radius ** (E.dim - 1) * sphere_support_integral(K)
    if isinstance(E, AffineImage) and _is_ellipsoid(E):
        # p_K(A B + b) = |det A| p_{A^{-1} K}(B)
        return E.abs_det * anisotropic_perimeter(E.base, affine_map(K, E.inverse))
    fs = facets(E)
    normals = np.stack([f.outer_normal for f in fs])
    areas = np.array([f.area for f in fs])
    return float(areas @ K.support(normals))


def _is_ellipsoid(body: ConvexBody) -> bool:
    while isinstance(body, AffineImage):
        body = body.base
    return isinstance(body, Ball)


def sphere_support_integral(K: ConvexBody, order: int = 256) -> float:
    """int_{S^{n-1}} h_K(u) d sigma(u).

    Exact for balls (any n) and for polyhedral K in n = 2 (perimeter of K)
    and n = 3 (half the sum over edges of length times exterior dihedral
    angle). Otherwise a product rule (n <= 3) is used.
    """
    n = K.dim
    if isinstance(K, Ball):
        return sphere_area(n) * K.radius
    poly = as_polytope(K)
    if poly is not None and n == 2:
        return float(sum(f.area for f in facets(poly)))
    if poly is not None and n == 3:
        hull = poly.hull
        normals = hull.equations[:, :-1]
        total = 0.0
        for i, simplex in enumerate(hull.simplices):
            for j, nb in enumerate(hull.neighbors[i]):
                edge = np.delete(simplex, j)
                length = np.linalg.norm(np.subtract(*poly.vertices[edge]))
                cosang = np.clip(normals[i] @ normals[nb], -1.0, 1.0)
                total += length * math.acos(cosang)
        return 0.25 * total
    if n <= 3:
        pts, w = sphere_rule(n, order)
        return float(w @ K.support(pts))
    raise GeometryError("sphere integral of a non-ball support function needs n <= 3")


# ---------------------------------------------------------------------------
# Minkowski content


def _vertex_cloud(body: ConvexBody, sphere_points: int) -> np.ndarray:
    poly = as_polytope(body)
    if poly is not None:
        return poly.extreme_points
    if body.dim > 3:
        raise GeometryError("Minkowski content is limited to n <= 3")
    if body.dim == 2:
        t = 2.0 * np.pi * np.arange(sphere_points) / sphere_points
        u = np.stack([np.cos(t), np.sin(t)], axis=1)
    else:
        k = np.arange(sphere_points) + 0.5
        z = 1.0 - 2.0 * k / sphere_points
        phi = math.pi * (3.0 - math.sqrt(5.0)) * k
        r = np.sqrt(1.0 - z**2)
        u = np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
    # inscribed polytope: volume error is second order in the point spacing
    if isinstance(body, Ball):
        return body.center + body.radius * u
    if isinstance(body, AffineImage) and _is_ellipsoid(body):
        return _vertex_cloud(body.base, sphere_points) @ body.matrix.T + body.shift
    raise GeometryError(f"no vertex approximation for {type(body).__name__}")


def minkowski_quotients(E: ConvexBody, K: ConvexBody, eps_schedule: Sequence[float],
                        sphere_points: int | None = None) -> np.ndarray:
    """(|E + eps K| - |E|) / eps for each eps, via hulls of vertex sums."""
    if sphere_points is None:
        sphere_points = 1024 if E.dim == 2 else 900
    ve = _vertex_cloud(E, sphere_points)
    vk = _vertex_cloud(K, sphere_points)
    base = ConvexHull(ve).volume
    out = []
    for eps in eps_schedule:
        summed = (ve[:, None, :] + eps * vk[None, :, :]).reshape(-1, E.dim)
        out.append((ConvexHull(summed).volume - base) / eps)
    return np.array(out)


DEFAULT_EPS = tuple(2.0 ** -k for k in range(2, 8))


def minkowski_content(E: ConvexBody, K: ConvexBody,
                      eps_schedule: Sequence[float] = DEFAULT_EPS,
                      sphere_points: int | None = None) -> float:
    """Extrapolated limit of the Minkowski quotients as eps -> 0.

    The quotient is a polynomial of degree n-1 in eps for convex bodies, so
    Neville extrapolation through the n smallest eps values recovers the
    limit up to the polytopal approximation of curved bodies.
    """
    eps = np.asarray(eps_schedule, dtype=float)
    if eps.size == 0 or np.any(eps <= 0) or np.any(np.diff(eps) >= 0):
        raise GeometryError("eps schedule must be nonempty, positive and decreasing")
    q = minkowski_quotients(E, K, eps, sphere_points)
    k = min(E.dim, eps.size)
    return float(_neville_at_zero(eps[-k:], q[-k:]))


def _neville_at_zero(x: np.ndarray, y: np.ndarray) -> float:
    p = list(y)
    m = len(x)
    for level in range(1, m):
        for i in range(m - level):
            j = i + level
            p[i] = (x[j] * p[i] - x[i] * p[i + 1]) / (x[j] - x[i])
    return p[0]


# ---------------------------------------------------------------------------
# integration over bodies


def integrate(body: ConvexBody, g: Callable[[np.ndarray], np.ndarray], order: int = 12) -> np.ndarray:
    """Integral of a vectorised ``g`` over the body.

    Polyhedral bodies are fanned into simplices from the origin when the
    origin is inside (so ``|x|``-type kinks sit at a collapse vertex) and
    integrated with collapsed Gauss rules. Balls use polar product rules and
    affine images change variables to their base.
    """
    n = body.dim
    if isinstance(body, AffineImage):
        A, b = body.matrix, body.shift
        return body.abs_det * integrate(body.base, lambda y: g(y @ A.T + b), order)
    poly = as_polytope(body)
    if poly is not None:
        origin = np.zeros(n)
        apex = origin if poly.contains(origin, tol=-1e-12)[0] else poly.interior_point
        pts, wts = [], []
        for simplex in poly.fan(apex):
            p, w = simplex_rule(simplex, order)
            pts.append(p)
            wts.append(w)
        pts, wts = np.concatenate(pts), np.concatenate(wts)
        return np.tensordot(wts, g(pts), axes=(0, 0))
    if isinstance(body, Ball):
        r, wr = gauss_legendre(order, 0.0, body.radius)
        u, wu = sphere_rule(n, max(order, 16))
        pts = body.center + (r[:, None, None] * u[None, :, :]).reshape(-1, n)
        wts = (wr[:, None] * r[:, None] ** (n - 1) * wu[None, :]).ravel()
        return np.tensordot(wts, g(pts), axes=(0, 0))
    if isinstance(body, Box):
        lo, hi = body.center - body.half_sides, body.center + body.half_sides
        axes = []
        for a, c in zip(lo, hi):
            axes.append([(a, 0.0), (0.0, c)] if a < 0.0 < c else [(a, c)])
        total = 0.0
        for cell in itertools.product(*axes):
            p, w = tensor_rule(cell, min(order, 8))
            total = total + np.tensordot(w, g(p), axes=(0, 0))
        return total
    raise GeometryError(f"cannot integrate over {type(body).__name__}")


def second_moment_matrix(body: ConvexBody) -> np.ndarray:
    """int_body x x^T dx."""
    return integrate(body, lambda x: x[:, :, None] * x[:, None, :], order=6)


# ---------------------------------------------------------------------------
# JSON


def body_from_dict(data: dict) -> ConvexBody:
    kind = data.get("type")
    try:
        if kind == "box":
            return Box(data["half_sides"], data.get("center"))
        if kind == "ball":
            dim = int(data.get("dim", len(data["center"]) if "center" in data else 2))
            return Ball(float(data["radius"]), data.get("center"), dim)
        if kind == "polytope":
            return Polytope(data["vertices"])
        if kind == "affine":
            return AffineImage(data["matrix"], data["shift"], body_from_dict(data["base"]))
    except KeyError as exc:
        raise GeometryError(f"body JSON missing key {exc}") from None
    raise GeometryError(f"unknown body type {kind!r}")


def body_to_dict(body: ConvexBody) -> dict:
    if isinstance(body, Box):
        out = {"type": "box", "half_sides": body.half_sides.tolist()}
        if np.any(body.center):
            out["center"] = body.center.tolist()
        return out
    if isinstance(body, Ball):
        return {"type": "ball", "radius": body.radius, "center": body.center.tolist()}
    if isinstance(body, Polytope):
        return {"type": "polytope", "vertices": body.vertices.tolist()}
    if isinstance(body, AffineImage):
        return {"type": "affine", "matrix": body.matrix.tolist(),
                "shift": body.shift.tolist(), "base": body_to_dict(body.base)}
    raise GeometryError(f"unsupported body {type(body).__name__}")
