"""Inequality harness: isoperimetric deficits, transport remainders and side checks.

Every report carries its inputs and tolerances so that a JSON dump is enough
to reproduce it. Statements with unnamed universal constants are reported as
observed ratios and never asserted.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import convexfn as cf
from . import geometry as geo
from . import spectral as sp
from . import transport as tr
from .quadrature import DivergentIntegralError, QuadratureSpec


def _json_float(x):
    if x is None:
        return None
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _json_float(obj)
    return obj


@dataclass
class DeficitReport:
    lhs: float
    rhs: float
    deficit: float
    remainder: float | None = None
    comparison: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    inputs: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))


@dataclass
class IsotropicStats:
    L_K: float
    M_K: float
    covariance_isotropy_defect: float
    covariance: np.ndarray | None = None

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))


# ---------------------------------------------------------------------------
# the anisotropic isoperimetric deficit


def deficit_R(E: geo.ConvexBody, K: geo.ConvexBody, tol: float = 1e-9) -> DeficitReport:
    """R(E, K) = p_K(E) / (n |K|^{1/n} |E|^{(n-1)/n}) - 1 on the exact facet path."""
    n = E.dim
    p = geo.anisotropic_perimeter(E, K)
    rhs = n * geo.volume(K) ** (1.0 / n) * geo.volume(E) ** ((n - 1.0) / n)
    R = p / rhs - 1.0
    return DeficitReport(p, rhs, R, tolerances={"nonnegativity": tol},
                         inputs={"E": geo.body_to_dict(E), "K": geo.body_to_dict(K)},
                         flags={"violated": bool(R < -tol)})


def check_scaling_invariance(E: geo.ConvexBody, K: geo.ConvexBody,
                             scales: Sequence[tuple[float, float]], tol: float = 1e-9) -> dict:
    """R(sE, tK) against R(E, K) for each (s, t)."""
    base = deficit_R(E, K).deficit
    rows = []
    for s, t in scales:
        if s <= 0 or t <= 0:
            raise ValueError("scales must be positive")
        r = deficit_R(geo.dilate(E, s), geo.dilate(K, t)).deficit
        rows.append({"s": float(s), "t": float(t), "R": r, "discrepancy": abs(r - base)})
    worst = max((row["discrepancy"] for row in rows), default=0.0)
    return {"base": base, "values": rows, "max_discrepancy": worst,
            "tolerance": tol, "holds": worst <= tol}


# ---------------------------------------------------------------------------
# the functional inequality


def thm1_report(V: cf.ConvexFunction, f: cf.ScalarField, n: int | None = None,
                quad: QuadratureSpec | None = None, tol: float = 1e-6) -> DeficitReport:
    """p_V(f) against n Z_V^{1/n} int (1 + V/(n-1)) d mu_V * ||f||_{n'}.

    When int V d mu_V diverges both sides are +inf: the inequality holds in
    the extended reals but no numerical deficit exists, so ``deficit`` is nan
    and the ``both_infinite`` flag is raised.
    """
    quad = quad or QuadratureSpec()
    n = cf._check_dim(V, n)
    terms = cf.p_V_terms(V, f, n, quad)
    lhs = terms.total
    try:
        rhs = cf.thm1_rhs(V, n, f, quad)
    except DivergentIntegralError:
        rhs = math.inf
    both_inf = math.isinf(lhs) and math.isinf(rhs)
    deficit = math.nan if both_inf else lhs - rhs
    holds = True if both_inf else deficit >= -tol
    rel = math.nan if both_inf or rhs == 0 else abs(deficit) / rhs
    return DeficitReport(
        lhs, rhs, deficit,
        comparison={"conjugate_term": terms.conjugate_term, "potential_mean": terms.potential_mean,
                    "f_power_integral": terms.f_power_integral, "relative_deficit": rel,
                    "quadrature_error": terms.error, "method": terms.method},
        tolerances={"deficit": tol, **quad.to_dict()},
        inputs={"V": cf.potential_to_dict(V), "f": {"label": f.label, **f.params}, "n": n},
        flags={"equality_case": f.label == "extremal", "both_infinite": both_inf,
               "holds": bool(holds), "vanishing_set_hits": terms.vanishing_hits},
    )


# ---------------------------------------------------------------------------
# stability remainders and the rectangle example


def _unit_centered(body: geo.ConvexBody) -> tuple[geo.ConvexBody, np.ndarray]:
    """Dilate to unit volume and translate the centroid to 0; returns the shift used."""
    unit = geo.normalize(body)
    shift = -geo.centroid(unit)
    if np.allclose(shift, 0.0, atol=1e-14):
        return unit, np.zeros(body.dim)
    return geo.translate(unit, shift), shift


def _budget(mu, nu, budget):
    return max(tr.DEFAULT_EXACT_BUDGET, len(mu) * len(nu)) if budget is None else budget


def _solve(mu, nu, cost, solver, epsilon, budget):
    if solver == "exact":
        return tr.solve_exact(mu, nu, cost, _budget(mu, nu, budget))
    if solver == "entropic":
        if epsilon is None:
            C = cost.matrix(mu.points, nu.points)
            epsilon = 0.01 * float(np.median(C[C > 0]))
        return tr.solve_entropic(mu, nu, cost, epsilon)
    raise ValueError(f"unknown solver {solver!r}")


def thm2_report(E: geo.ConvexBody, K: geo.ConvexBody, resolution: int = 32,
                solver: str = "exact", epsilon: float | None = None, c: float = 1.0,
                factors=(1.0, 2.0), use_paper: bool = False, budget: int | None = None,
                tol: float = 1e-9) -> DeficitReport:
    """R(E, K) next to the transport remainders of the stability statement.

    Both bodies are brought to unit volume with centroid at the origin (the
    translations are recorded). The Cheeger constant D of the normalised E
    is bracketed; its lower end feeds the cost F(D |x - y|). Only R >= -tol
    and remainder >= 0 are checked; ``n R / remainder`` is reported as the
    observed constant.
    """
    n = E.dim
    R = deficit_R(E, K, tol)
    Et, shift_e = _unit_centered(E)
    Kt, shift_k = _unit_centered(K)
    che = sp.cheeger_estimate(Et, factors=factors, resolution=max(resolution, 32),
                              use_paper=use_paper)
    D = che.value
    mu = tr.discretize_body(Et, resolution)
    nu = tr.discretize_body(Kt, resolution)
    w1 = _solve(mu, nu, tr.EuclideanPower(1.0), solver, epsilon, budget).primal_cost
    wcd = _solve(mu, nu, tr.CheegerF(D), solver, epsilon, budget).primal_cost
    eq8 = tr.F_func(D * w1)

    def ratio(rem):
        if rem > 0:
            return n * R.deficit / rem
        return 0.0 if abs(R.deficit) <= tol else math.inf

    return DeficitReport(
        R.lhs, R.rhs, R.deficit, remainder=wcd,
        comparison={"W1": w1, "W_cD": wcd, "F_D_W1": eq8, "ratio_W_cD": ratio(wcd),
                    "ratio_F_D_W1": ratio(eq8), "D_che": che.to_dict(), "c": c,
                    "c_times_remainder_over_n": c * wcd / n},
        tolerances={"R": tol, "cell_diameter_E": mu.source_tag["cell_diameter"],
                    "cell_diameter_K": nu.source_tag["cell_diameter"]},
        inputs={"E": geo.body_to_dict(E), "K": geo.body_to_dict(K), "resolution": resolution,
                "solver": solver, "epsilon": epsilon, "translation_E": shift_e.tolist(),
                "translation_K": shift_k.tolist(), "use_paper": use_paper},
        flags={"R_nonnegative": bool(R.deficit >= -tol), "remainder_nonnegative": bool(wcd >= 0)},
    )


def example_bodies(alpha: float) -> tuple[geo.Box, geo.Box]:
    """E_alpha = [-a/2, a/2] x [-1/(2a), 1/(2a)] and K_alpha (alpha^2 in place of alpha)."""
    if not alpha > 1:
        raise ValueError("alpha must exceed 1")
    return (geo.Box([alpha / 2, 1 / (2 * alpha)]),
            geo.Box([alpha**2 / 2, 1 / (2 * alpha**2)]))


def example_2d(alpha: float, resolution: int = 32, solver: str = "exact",
               epsilon: float | None = None, C_fmp: float = 1.0, use_paper: bool = False,
               fmp_resolution: int = 64, budget: int | None = None) -> dict:
    """The elongated-rectangle example: W1 against its mass-separation lower bound.

    The bound (1/4)(a^2/4 - a/2) is mass times distance for the strip
    [a^2/4, a^2/2] x [-1/(2a^2), 1/(2a^2)] of K_a: it has area 1/4 and lies
    at distance a^2/4 - a/2 from E_a. The remainder (1/4) F(h (a^2/4 - a/2))
    is reported with the selected interval constant h and, for comparison,
    with the eigensolver constant, the pi/a constant and pi/(2a).
    """
    E, K = example_bodies(alpha)
    n = 2
    R = deficit_R(E, K)
    mu = tr.discretize_body(E, resolution)
    nu = tr.discretize_body(K, resolution)
    w1 = _solve(mu, nu, tr.EuclideanPower(1.0), solver, epsilon, budget).primal_cost
    sep = alpha**2 / 4 - alpha / 2
    bound = 0.25 * sep
    disc_tol = 2.0 * max(mu.source_tag["cell_diameter"], nu.source_tag["cell_diameter"])
    h = sp.poincare_box(E.half_sides, use_paper)
    remainder = 0.25 * tr.F_func(h.value * sep)
    A = asymmetry_index(E, K, resolution=fmp_resolution)
    fmp = C_fmp / n**7 * A["A"] ** 2
    return _jsonable({
        "alpha": alpha,
        "R": R.deficit,
        "R_oracle": (alpha + 1 / alpha) / 2 - 1,
        "W1": w1,
        "W1_lower_bound": bound,
        "discretization_tol": disc_tol,
        "W1_bound_holds": w1 >= bound - disc_tol,
        "poincare": h.to_dict(),
        "remainder": remainder,
        "remainder_paper_constant": 0.25 * tr.F_func(h.paper_value * sep),
        "remainder_oracle_constant": 0.25 * tr.F_func(h.oracle_value * sep),
        "remainder_display_constant": 0.25 * tr.F_func(math.pi / (2 * alpha) * sep),
        "fmp_asymmetry": A["A"],
        "fmp_translation": A["x0"],
        "fmp_remainder": fmp,
        "fmp_cap": C_fmp / n**7 * 4.0,
        "config": {"resolution": resolution, "solver": solver, "epsilon": epsilon,
                   "C_fmp": C_fmp, "use_paper": use_paper, "fmp_resolution": fmp_resolution},
    })


# ---------------------------------------------------------------------------
# spectra


def _expm1_minus_x(x: np.ndarray) -> np.ndarray:
    """e^x - 1 - x without the cancellation of expm1(x) - x at small |x|."""
    out = np.expm1(x) - x
    small = np.abs(x) < 0.5
    xs = x[small]
    # Taylor sum x^2/2! + ... + x^18/18! by Horner; the tail is below double precision
    acc = np.zeros_like(xs)
    for k in range(18, 1, -1):
        acc = (acc + 1.0 / math.factorial(k)) * xs
    out[small] = acc * xs
    return out


def alzer_gap(eigs) -> float:
    """2 n l_max (l_A - l_G) - sum (l_i - l_G)^2 for a positive spectrum.

    Evaluated with l_i = l_G e^{x_i}, sum x_i = 0, so that
    l_A - l_G = l_G mean(e^{x_i} - 1 - x_i) carries no cancellation when the
    spectrum is nearly constant.
    """
    lam = np.asarray(eigs, dtype=float).ravel()
    if lam.size == 0 or np.any(lam <= 0) or not np.all(np.isfinite(lam)):
        raise ValueError("spectrum must be finite and positive")
    n = lam.size
    logs = np.log(lam)
    log_g = float(logs.mean())
    x = logs - log_g
    e = np.expm1(x)
    excess = float(np.mean(_expm1_minus_x(x)))
    return float(math.exp(2 * log_g) * (2 * n * math.exp(x.max()) * excess - np.sum(e**2)))


def lemma6_chain(eigs, c: float = 1.0, det_tol: float = 1e-9, tol: float = 1e-12) -> dict:
    """The chain l_A - l_G >= s2 >= s3 >= s4 for a spectrum with product one.

    s2 = |L - I|^2 / (2n l_max), s3 = |L - I|^2 / (2n (1 + |L - I|)) with the
    Hilbert-Schmidt norm, and s4 = (c/n) tr F(L - I). ``s4_scalar`` is the
    variant (c/n) F(|L - I|) for comparison.
    """
    lam = np.asarray(eigs, dtype=float).ravel()
    if np.any(lam <= 0):
        raise ValueError("spectrum must be positive")
    if abs(np.prod(lam) - 1.0) > det_tol:
        raise ValueError(f"determinant {np.prod(lam):.12g} is not 1")
    n = lam.size
    hs = float(np.sum((lam - 1.0) ** 2))
    x = math.sqrt(hs)
    s1 = float(lam.mean() - math.exp(np.log(lam).mean()))
    s2 = hs / (2 * n * lam.max())
    s3 = hs / (2 * n * (1 + x))
    s4 = c / n * float(np.sum(tr.F_func(lam - 1.0, allow_negative=True)))
    s4_scalar = c / n * tr.F_func(x)
    return {"steps": [s1, float(s2), s3, s4], "s4_scalar": s4_scalar, "c": c,
            "step1": bool(s1 >= s2 - tol), "step2": bool(s2 >= s3 - tol),
            "step3": bool(s3 >= s4 - tol), "step3_scalar": bool(s3 >= s4_scalar - tol)}


def F_bounds(t, lower_factor: float = 1.0, upper_factor: float = 2.0) -> dict:
    """Check lower_factor min(t^2, t) <= F(t) <= upper_factor min(t^2, t) on a grid."""
    t = np.asarray(t, dtype=float)
    F = tr.F_func(t)
    m = np.minimum(t**2, t)
    lower = F >= lower_factor * m
    upper = F <= upper_factor * m
    worst = float(np.min(np.where(m > 0, F / np.where(m > 0, m, 1.0), np.inf)))
    return {"lower_holds": bool(lower.all()), "upper_holds": bool(upper.all()),
            "lower_failures": int((~lower).sum()), "upper_failures": int((~upper).sum()),
            "min_ratio": worst}


def jensen_gap(mu: tr.DiscreteMeasure, nu: tr.DiscreteMeasure, D: float,
               budget: int | None = None) -> float:
    """W_{F(D|x-y|)} - F(D W1); nonnegative by convexity of F."""
    w1 = tr.solve_exact(mu, nu, tr.EuclideanPower(1.0), _budget(mu, nu, budget)).primal_cost
    wc = tr.solve_exact(mu, nu, tr.CheegerF(D), _budget(mu, nu, budget)).primal_cost
    return wc - tr.F_func(D * w1)


# ---------------------------------------------------------------------------
# asymmetry


def _overlap_fraction(grid_pts, E_count, K_body, r, shifts):
    """|E cap (x0 + rK)| / |E| by counting E-grid points, for each shift."""
    out = np.empty(len(shifts))
    for k, x0 in enumerate(shifts):
        inside = K_body.contains((grid_pts - x0) / r)
        out[k] = inside.sum() / E_count
    return out


def asymmetry_index(E: geo.ConvexBody, K: geo.ConvexBody, grid_points: int = 21,
                    resolution: int | None = None) -> dict:
    """A_K(E) = inf_x0 |E delta (x0 + rK)| / |E| with r^n |K| = |E|.

    Since |rK| = |E| the ratio equals 2 (1 - |E cap (x0 + rK)| / |E|); the
    overlap is counted on a cell-centre grid over E. Translations run over
    a ``grid_points^n`` lattice spanning the bounding-box difference, then
    one refinement pass around the best one.
    """
    n = E.dim
    resolution = resolution or (64 if n == 2 else 20)
    r = (geo.volume(E) / geo.volume(K)) ** (1.0 / n)
    bbE = E.bounding_box()
    bbK = K.bounding_box() * r
    axes = [lo + (np.arange(resolution) + 0.5) * (hi - lo) / resolution for lo, hi in bbE]
    pts = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
    pts = pts[E.contains(pts)]
    if pts.shape[0] == 0:
        raise ValueError("no grid point inside E; raise the resolution")
    lo = bbE[:, 0] - bbK[:, 1]
    hi = bbE[:, 1] - bbK[:, 0]
    ticks = [np.linspace(a, b, grid_points) for a, b in zip(lo, hi)]
    shifts = np.stack([g.ravel() for g in np.meshgrid(*ticks, indexing="ij")], axis=1)
    frac = _overlap_fraction(pts, pts.shape[0], K, r, shifts)
    best = shifts[int(np.argmax(frac))]
    step = (hi - lo) / (grid_points - 1)
    ticks = [np.linspace(c - s, c + s, grid_points) for c, s in zip(best, step)]
    fine = np.stack([g.ravel() for g in np.meshgrid(*ticks, indexing="ij")], axis=1)
    frac2 = _overlap_fraction(pts, pts.shape[0], K, r, fine)
    if frac2.max() >= frac.max():
        best, top = fine[int(np.argmax(frac2))], float(frac2.max())
    else:
        top = float(frac.max())
    A = 2.0 * (1.0 - top)
    return {"A": A, "x0": best.tolist(), "r": r, "resolution": resolution,
            "grid_points": grid_points}


def fmp_remainder(E: geo.ConvexBody, K: geo.ConvexBody, C: float = 1.0, grid_points: int = 21,
                  resolution: int | None = None) -> float:
    """(C / n^7) A_K(E)^2."""
    A = asymmetry_index(E, K, grid_points, resolution)["A"]
    return C / E.dim**7 * A**2


# ---------------------------------------------------------------------------
# isotropic bodies


def isotropic_stats(body: geo.ConvexBody, order: int = 12, vol_tol: float = 1e-9,
                    center_tol: float = 1e-9) -> IsotropicStats:
    """L_K and M(K) of a unit-volume centred body."""
    vol = geo.volume(body)
    if abs(vol - 1.0) > vol_tol:
        raise ValueError(f"body has volume {vol:.12g}; normalize it first")
    if np.linalg.norm(geo.centroid(body)) > center_tol:
        raise ValueError("body is not centred at the origin")
    n = body.dim
    cov = geo.second_moment_matrix(body)
    tr_cov = float(np.trace(cov))
    L = math.sqrt(tr_cov / n)
    M = float(geo.integrate(body, lambda x: np.linalg.norm(x, axis=1), order)) / math.sqrt(n)
    defect = float(np.linalg.norm(cov - tr_cov / n * np.eye(n)) / (tr_cov / n))
    return IsotropicStats(L, M, defect, cov)


def isotropic_w1_bounds(K: geo.ConvexBody, L: geo.ConvexBody, resolution: int = 32,
                        c: float = 1.0, tol: float = 0.02, isotropy_tol: float = 1e-6,
                        solver: str = "exact", epsilon: float | None = None,
                        budget: int | None = None) -> dict:
    """sqrt(n)|M(K) - M(L)| <= W1 <= c (L_K + L_L) sqrt(n) + 8; only the left side is checked."""
    n = K.dim
    sK, sL = isotropic_stats(K), isotropic_stats(L)
    for name, s in (("K", sK), ("L", sL)):
        if s.covariance_isotropy_defect > isotropy_tol:
            raise ValueError(f"{name} is not isotropic (defect {s.covariance_isotropy_defect:.3g})")
    mu = tr.discretize_body(K, resolution)
    nu = tr.discretize_body(L, resolution)
    w1 = _solve(mu, nu, tr.EuclideanPower(1.0), solver, epsilon, budget).primal_cost
    dual = tr.dual_lower_bound(mu, nu, lambda x: np.linalg.norm(x, axis=1))
    lower = math.sqrt(n) * abs(sK.M_K - sL.M_K)
    upper = c * (sK.L_K + sL.L_K) * math.sqrt(n) + 8.0
    return _jsonable({
        "n": n, "lower": lower, "W1": w1, "dual_phi_norm": dual, "upper_expression": upper,
        "lower_holds": lower <= w1 + tol, "dual_holds": abs(dual) <= w1 + 1e-9,
        "stats_K": sK.to_dict(), "stats_L": sL.to_dict(),
        "config": {"resolution": resolution, "c": c, "tol": tol, "solver": solver},
    })


def paouris_tail(body: geo.ConvexBody, t: float, c: float = 1.0,
                 resolution: int = 64) -> tuple[float, float]:
    """Measured |{x in K : |x| >= c sqrt(n) L_K t}| next to exp(-sqrt(n) t)."""
    if t < 1:
        raise ValueError("t must be at least 1")
    n = body.dim
    L = isotropic_stats(body).L_K
    mu = tr.discretize_body(body, resolution)
    thresh = c * math.sqrt(n) * L * t
    measured = float(mu.weights[np.linalg.norm(mu.points, axis=1) >= thresh].sum())
    return measured, math.exp(-math.sqrt(n) * t)
