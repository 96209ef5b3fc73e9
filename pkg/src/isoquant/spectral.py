"""Poincare (square-root spectral gap) and Cheeger estimates for uniform measures.

Two interval constants circulate for the Neumann problem on [-a, a]: the
eigensolver value pi/(2a), which is the true square-root gap of a length-2a
interval, and the value pi/a. Both are carried on every interval estimate;
consumers take the eigensolver value unless they opt into ``use_paper``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy import sparse
from scipy.linalg import eigh_tridiagonal
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import eigsh

from . import geometry as geo


class SpectralError(RuntimeError):
    pass


@dataclass(frozen=True)
class SpectralEstimate:
    value: float
    kind: str
    method: str
    bracket: tuple[float, float] | None = None
    resolution: int | None = None
    oracle_value: float | None = None
    paper_value: float | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.value > 0:
            raise SpectralError(f"non-positive {self.kind} estimate {self.value}")
        if self.kind not in ("poincare_h22", "cheeger"):
            raise ValueError(f"unknown estimate kind {self.kind!r}")
        if self.bracket is not None:
            lo, hi = self.bracket
            if not lo <= self.value <= hi:
                raise SpectralError(f"value {self.value} outside bracket {self.bracket}")

    def scaled(self, t: float) -> "SpectralEstimate":
        """Estimate for the dilate tE (every quantity scales like 1/t)."""
        def s(v):
            return None if v is None else v / t
        br = None if self.bracket is None else (self.bracket[0] / t, self.bracket[1] / t)
        return replace(self, value=self.value / t, bracket=br,
                       oracle_value=s(self.oracle_value), paper_value=s(self.paper_value))

    def to_dict(self) -> dict:
        return {
            "kind": self.kind, "value": self.value, "method": self.method,
            "bracket": None if self.bracket is None else list(self.bracket),
            "resolution": self.resolution, "oracle_value": self.oracle_value,
            "paper_value": self.paper_value, **({"metadata": self.metadata} if self.metadata else {}),
        }


def neumann_fd_gap(length: float, cells: int) -> float:
    """Second Neumann eigenvalue of the cell-centred 3-point Laplacian on an interval."""
    h = length / cells
    diag = np.full(cells, 2.0)
    diag[0] = diag[-1] = 1.0
    off = np.full(cells - 1, -1.0)
    ev = eigh_tridiagonal(diag, off, eigvals_only=True, select="i", select_range=(1, 1))
    return float(ev[0]) / h**2


@lru_cache(maxsize=None)
def _unit_interval_oracle(cells: int = 10_000) -> float:
    """sqrt gap of [-1, 1]: Richardson extrapolation of two FD meshes (error O(h^2))."""
    coarse = neumann_fd_gap(2.0, cells)
    fine = neumann_fd_gap(2.0, 2 * cells)
    return math.sqrt((4.0 * fine - coarse) / 3.0)


def poincare_interval(a: float, use_paper: bool = False) -> SpectralEstimate:
    """h_{2,2} of the uniform measure on [-a, a].

    ``oracle_value`` comes from the extrapolated finite-difference solver
    (about pi/(2a)); ``paper_value`` is pi/a. ``value`` is the oracle unless
    ``use_paper`` is set.
    """
    if not a > 0:
        raise ValueError("interval half-length must be positive")
    oracle = _unit_interval_oracle() / a
    paper = math.pi / a
    return SpectralEstimate(paper if use_paper else oracle, "poincare_h22", "closed_form",
                            oracle_value=oracle, paper_value=paper,
                            metadata={"half_length": float(a), "use_paper": use_paper})


def poincare_box(half_sides, use_paper: bool = False) -> SpectralEstimate:
    """Tensorised value min_i h_{2,2}([-h_i, h_i]); exact for products of intervals."""
    hs = np.asarray(half_sides, dtype=float).ravel()
    if hs.size == 0 or np.any(hs <= 0):
        raise ValueError("box half-sides must be positive")
    axis = int(np.argmax(hs))  # the longest side has the smallest gap
    est = poincare_interval(float(hs[axis]), use_paper)
    return SpectralEstimate(est.value, "poincare_h22", "tensorized",
                            bracket=(est.value, est.value),
                            oracle_value=est.oracle_value, paper_value=est.paper_value,
                            metadata={"half_sides": hs.tolist(), "axis": axis,
                                      "use_paper": use_paper})


def grid_laplacian(body: geo.ConvexBody, resolution: int):
    """Neumann graph Laplacian on the grid cells whose centres lie in ``body``.

    Returns the sparse Laplacian (scaled by 1/h_k^2 per axis) and the cell
    centres. Neighbours outside the body are dropped, which is the
    Neumann condition on the cell graph.
    """
    n = body.dim
    bbox = body.bounding_box()
    step = (bbox[:, 1] - bbox[:, 0]) / resolution
    axes = [lo + (np.arange(resolution) + 0.5) * h for (lo, _), h in zip(bbox, step)]
    grid = np.meshgrid(*axes, indexing="ij")
    centres = np.stack([g.ravel() for g in grid], axis=1)
    inside = body.contains(centres).reshape((resolution,) * n)
    index = -np.ones(inside.shape, dtype=np.int64)
    index[inside] = np.arange(int(inside.sum()))
    m = int(inside.sum())
    rows, cols, vals = [], [], []
    for k in range(n):
        lo = [slice(None)] * n
        hi = [slice(None)] * n
        lo[k], hi[k] = slice(0, -1), slice(1, None)
        a, b = index[tuple(lo)], index[tuple(hi)]
        both = (a >= 0) & (b >= 0)
        i, j = a[both], b[both]
        w = 1.0 / step[k] ** 2
        rows += [i, j]
        cols += [j, i]
        vals += [np.full(i.size, -w)] * 2
    rows = np.concatenate(rows) if rows else np.zeros(0, int)
    cols = np.concatenate(cols) if cols else np.zeros(0, int)
    vals = np.concatenate(vals) if vals else np.zeros(0)
    W = sparse.csr_matrix((vals, (rows, cols)), shape=(m, m))
    L = sparse.diags(-np.asarray(W.sum(axis=1)).ravel()) + W
    return L.tocsc(), centres[inside.ravel()]


def poincare_grid(body: geo.ConvexBody, resolution: int = 64) -> SpectralEstimate:
    """sqrt of the spectral gap of the grid Neumann Laplacian on ``body``."""
    if resolution < 8:
        raise ValueError("grid estimates need resolution >= 8")
    L, centres = grid_laplacian(body, resolution)
    m = L.shape[0]
    if m < 3:
        raise SpectralError("fewer than three interior cells; raise the resolution")
    ncomp, _ = connected_components(L, directed=False)
    if ncomp != 1:
        raise SpectralError(f"cell graph has {ncomp} components; raise the resolution")
    # shifted inverse iteration about a small negative shift, deterministic start
    scale = float(L.diagonal().max())
    v0 = np.cos(np.linspace(0.0, 1.0, m))
    vals = eigsh(L, k=2, sigma=-1e-6 * scale, which="LM", v0=v0, return_eigenvectors=False)
    gap = float(np.sort(vals)[1])
    if not gap > 0:
        raise SpectralError("non-positive spectral gap; graph may be disconnected")
    return SpectralEstimate(math.sqrt(gap), "poincare_h22", "grid_eigen", resolution=resolution,
                            metadata={"cells": m})


def cheeger_estimate(body: geo.ConvexBody, method: str = "auto", factors=(1.0, 2.0),
                     resolution: int = 64, use_paper: bool = False) -> SpectralEstimate:
    """Bracket for D_Che of the uniform measure on ``body`` from an h_{2,2} estimate.

    D_Che is bracketed as ``[factors[0] * h, factors[1] * h]``; the factors
    stand in for the unspecified numerical constants relating the Cheeger
    constant to h_{2,2} on convex bodies. The reported value is the lower end.
    """
    lo_f, hi_f = (float(f) for f in factors)
    if not 0 < lo_f <= hi_f:
        raise ValueError("bracket factors must satisfy 0 < lower <= upper")
    if method == "auto":
        method = "box" if isinstance(body, geo.Box) else "grid"
    if method == "box":
        if not isinstance(body, geo.Box):
            raise ValueError("method 'box' needs a Box body")
        h = poincare_box(body.half_sides, use_paper)
    elif method == "grid":
        h = poincare_grid(body, resolution)
    else:
        raise ValueError(f"unsupported Cheeger method {method!r}")
    lower, upper = lo_f * h.value, hi_f * h.value
    return SpectralEstimate(lower, "cheeger", h.method, bracket=(lower, upper),
                            resolution=h.resolution, oracle_value=h.oracle_value,
                            paper_value=h.paper_value,
                            metadata={"h22": h.value, "factors": [lo_f, hi_f]})
