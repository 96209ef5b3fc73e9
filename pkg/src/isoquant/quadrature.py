"""Quadrature rules shared by the geometric and functional integrals.

Everything here returns plain ``(points, weights)`` arrays or an
:class:`Estimate`; no rule knows anything about bodies or potentials.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy import integrate
from scipy.special import gamma


class DivergentIntegralError(ArithmeticError):
    """Raised when an integral over an unbounded domain does not converge."""


class Estimate(NamedTuple):
    value: float
    error: float


@dataclass(frozen=True)
class QuadratureSpec:
    """Box, tolerance and effort budget for adaptive cubature.

    ``box`` may be ``None``; callers then fall back to an integrand-specific
    box (the support box of ``f`` for instance).
    """

    box: tuple[tuple[float, float], ...] | None = None
    rel_tol: float = 1e-6
    abs_tol: float = 1e-13
    max_cells: int = 20000

    def __post_init__(self):
        if self.rel_tol <= 0 or self.abs_tol < 0 or self.max_cells <= 0:
            raise ValueError("quadrature tolerances must be positive")
        if self.box is not None:
            box = tuple((float(lo), float(hi)) for lo, hi in self.box)
            if any(hi <= lo for lo, hi in box):
                raise ValueError("quadrature box must have lo < hi on every axis")
            object.__setattr__(self, "box", box)

    @classmethod
    def from_dict(cls, data: dict) -> "QuadratureSpec":
        unknown = set(data) - {"box", "rel_tol", "abs_tol", "max_cells"}
        if unknown:
            raise ValueError(f"unknown quadrature keys: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return {
            "box": None if self.box is None else [list(b) for b in self.box],
            "rel_tol": self.rel_tol,
            "abs_tol": self.abs_tol,
            "max_cells": self.max_cells,
        }


def sphere_area(n: int) -> float:
    """Surface area of the unit sphere in R^n."""
    return 2.0 * math.pi ** (n / 2) / gamma(n / 2)


def ball_volume(n: int, radius: float = 1.0) -> float:
    return math.pi ** (n / 2) / gamma(n / 2 + 1) * radius**n


@lru_cache(maxsize=64)
def _gl_unit(order: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


def gauss_legendre(order: int, a: float = 0.0, b: float = 1.0):
    """Gauss-Legendre nodes and weights on ``[a, b]``."""
    x, w = _gl_unit(order)
    return a + (b - a) * x, (b - a) * w


def tensor_rule(box: Sequence[tuple[float, float]], order: int, pieces: int = 1):
    """Composite tensor Gauss-Legendre rule on an axis-aligned box."""
    axes_x, axes_w = [], []
    for lo, hi in box:
        edges = np.linspace(lo, hi, pieces + 1)
        xs, ws = zip(*(gauss_legendre(order, a, b) for a, b in zip(edges[:-1], edges[1:])))
        axes_x.append(np.concatenate(xs))
        axes_w.append(np.concatenate(ws))
    grids = np.meshgrid(*axes_x, indexing="ij")
    wgrids = np.meshgrid(*axes_w, indexing="ij")
    points = np.stack([g.ravel() for g in grids], axis=1)
    weights = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
    return points, weights


@lru_cache(maxsize=32)
def _collapsed_unit_rule(d: int, order: int):
    """Collapsed-coordinate (Duffy) rule on the unit cube for a d-simplex.

    Returns the cube nodes ``u`` and weights including the Jacobian factor
    prod_k u_k^(d-k) (k = 1..d).
    """
    x, w = _gl_unit(order)
    grids = np.meshgrid(*([x] * d), indexing="ij")
    wgrids = np.meshgrid(*([w] * d), indexing="ij")
    u = np.stack([g.ravel() for g in grids], axis=1)
    wt = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
    for k in range(d):
        wt = wt * u[:, k] ** (d - 1 - k)
    return u, wt


def simplex_rule(vertices: np.ndarray, order: int = 8):
    """Quadrature nodes/weights on a d-simplex given by d+1 vertices in R^d.

    The first vertex is the collapse point, so integrands that are smooth in
    polar coordinates around it (``|x - v0|`` for example) are integrated
    with full Gauss accuracy.
    """
    v = np.asarray(vertices, dtype=float)
    d = v.shape[1]
    if v.shape[0] != d + 1:
        raise ValueError("a d-simplex needs d+1 vertices")
    steps = np.diff(v, axis=0)  # v1-v0, v2-v1, ...
    jac = abs(np.linalg.det(steps))
    u, wt = _collapsed_unit_rule(d, order)
    # x = v0 + u1 (s1 + u2 (s2 + u3 (s3 + ...)))
    offset = np.zeros((u.shape[0], d))
    for k in range(d - 1, -1, -1):
        offset = u[:, [k]] * (steps[k] + offset)
    return v[0] + offset, wt * jac


def sphere_rule(n: int, order: int = 32):
    """Product rule on the unit sphere S^{n-1} for n = 2, 3."""
    if n == 2:
        m = 4 * order
        theta = 2.0 * np.pi * np.arange(m) / m
        pts = np.stack([np.cos(theta), np.sin(theta)], axis=1)
        return pts, np.full(m, 2.0 * np.pi / m)
    if n == 3:
        ct, wct = gauss_legendre(order, -1.0, 1.0)
        m = 2 * order
        phi = 2.0 * np.pi * np.arange(m) / m
        st = np.sqrt(1.0 - ct**2)
        pts = np.stack(
            [np.outer(st, np.cos(phi)).ravel(), np.outer(st, np.sin(phi)).ravel(),
             np.repeat(ct, m)],
            axis=1,
        )
        return pts, np.repeat(wct, m) * (2.0 * np.pi / m)
    raise NotImplementedError("product sphere rules are provided for n = 2, 3 only")


def radial_integral(
    g: Callable[[np.ndarray], np.ndarray],
    n: int,
    rel_tol: float = 1e-10,
    r_max: float = math.inf,
) -> Estimate:
    """Integrate a radial function: |S^{n-1}| * int_0^r_max g(r) r^{n-1} dr."""
    area = sphere_area(n)

    def integrand(r):
        return float(g(np.asarray(r, dtype=float))) * r ** (n - 1)

    total, err = 0.0, 0.0
    breaks = [0.0, 1.0, 10.0, r_max] if r_max > 10.0 else [0.0, r_max]
    for a, b in zip(breaks[:-1], breaks[1:]):
        with warnings.catch_warnings():
            warnings.simplefilter("error", integrate.IntegrationWarning)
            try:
                val, e = integrate.quad(integrand, a, b, epsrel=rel_tol, epsabs=0.0, limit=500)
            except integrate.IntegrationWarning as exc:
                if math.isinf(b):
                    raise DivergentIntegralError(
                        f"radial integral failed to converge on [{a:g}, inf): {exc}"
                    ) from None
                val, e = integrate.quad(integrand, a, b, epsrel=rel_tol, epsabs=0.0, limit=2000)
        total += val
        err += e
    return Estimate(area * total, area * err)


def box_integral(
    func: Callable[[np.ndarray], np.ndarray],
    box: Sequence[tuple[float, float]],
    rel_tol: float = 1e-6,
    abs_tol: float = 1e-13,
    max_cells: int = 20000,
) -> Estimate:
    """Adaptive cubature of a vectorised integrand over a box.

    ``func`` maps an ``(m, n)`` array of points to ``(m,)`` or ``(m, k)``
    values. The estimate must converge within ``max_cells`` subdivisions or a
    :class:`RuntimeError` is raised.
    """
    lo = np.array([b[0] for b in box], dtype=float)
    hi = np.array([b[1] for b in box], dtype=float)
    res = integrate.cubature(
        func, lo, hi, rule="gk15", rtol=rel_tol, atol=abs_tol,
        max_subdivisions=max_cells,
    )
    if res.status != "converged":
        raise RuntimeError(
            f"cubature did not converge: estimate={res.estimate}, error={res.error}"
        )
    return Estimate(res.estimate, res.error)
