"""Acceptance criteria, each at its stated tolerance.

Every test carries ``@pytest.mark.criterion(k, title)``; the terminal summary
prints one PASS/FAIL line per criterion. Criteria known to be unattainable as
stated are left to fail; the analysis lives in the decisions ledger.
"""

import math
import time

import numpy as np
import pytest

from isoquant import convexfn as cf
from isoquant import geometry as geo
from isoquant import spectral as sp
from isoquant import transport as tr
from isoquant import verify as vf
from isoquant.quadrature import DivergentIntegralError, QuadratureSpec

from conftest import random_polytope

C1 = "classical isoperimetry on 200 random polytope pairs"
C2 = "functional inequality equality case, |x|^2 in the plane"
C3 = "functional inequality over 50 randomized (V, f)"
C4 = "rectangle example: W1 bound, R, remainder growth"
C5 = "isotropic W1 lower side and Kantorovich dual"
C6 = "Alzer gap on 10^4 random spectra"
C7 = "F properties and Jensen relation"
C8 = "transport solver correctness"
C9 = "spectral estimates and interval constants"
C10 = "scaling invariance of R"


# --- 1 ----------------------------------------------------------------------------

@pytest.mark.criterion(1, C1)
def test_criterion_1_classical_isoperimetry():
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    worst, worst_eq = math.inf, 0.0
    for k in range(200):
        n = 2 if k < 100 else 3
        E, K = random_polytope(rng, n), random_polytope(rng, n)
        worst = min(worst, vf.deficit_R(E, K).deficit)
        lam, a = rng.uniform(0.2, 5.0), rng.normal(size=n)
        worst_eq = max(worst_eq, abs(vf.deficit_R(geo.translate(geo.dilate(K, lam), a), K).deficit))
    elapsed = time.perf_counter() - start
    print(f"min deficit {worst:.3e}, max equality-case |R| {worst_eq:.3e}, {elapsed:.2f} s")
    assert worst >= -1e-9
    assert worst_eq <= 1e-9
    assert elapsed < 30


# --- 2 ----------------------------------------------------------------------------

@pytest.mark.criterion(2, C2)
def test_criterion_2_partition_function():
    V = cf.Quadratic(1.0, 2)
    Z = cf.partition_Z(V, 2, QuadratureSpec(rel_tol=1e-6)).value
    assert abs(Z - math.pi) / math.pi <= 1e-3


@pytest.mark.criterion(2, C2)
def test_criterion_2_equality_case():
    start = time.perf_counter()
    V = cf.Quadratic(1.0, 2)
    f = cf.extremal_profile(V, 2)
    np.testing.assert_allclose(f.value(np.array([[1.0, 2.0]])), 1 / 6)
    quad = QuadratureSpec(rel_tol=1e-6)
    lhs = cf.p_V_functional(V, f, 2, quad)
    try:
        rhs = cf.thm1_rhs(V, 2, f, quad)
    except DivergentIntegralError:
        rhs = math.inf
    print(f"p_V(f) = {lhs}, RHS = {rhs}, {time.perf_counter() - start:.2f} s")
    assert math.isfinite(lhs) and math.isfinite(rhs), (
        "int |x|^2 d mu_V diverges logarithmically for n = 2, so both sides are +inf "
        "and no relative deficit exists"
    )
    assert abs(lhs - rhs) / rhs <= 0.01
    assert time.perf_counter() - start < 60


# --- 3 ----------------------------------------------------------------------------

def _random_instance(rng, k):
    n = 2 if k % 2 == 0 else 3
    family = ("quadratic", "power3", "indicatrix")[(k // 2) % 3]
    if family == "quadratic":
        V = cf.Quadratic(float(rng.uniform(0.3, 2.0)), n)
    elif family == "power3":
        V = cf.PowerNorm(3.0, float(rng.uniform(0.3, 2.0)), n)
    else:
        V = cf.Indicatrix(geo.Box(rng.uniform(0.2, 1.0, size=n)))
    c = rng.normal(size=n) * 0.5
    A = rng.normal(size=(n, n))
    P = A @ A.T + 0.5 * np.eye(n)
    if rng.random() < 0.5:
        f = cf.gaussian_bump(c, P, float(rng.uniform(0.5, 2.0)))
    else:
        f = cf.compact_bump(c, np.linalg.cholesky(P).T, 8.0, float(rng.uniform(0.5, 2.0)))
    return V, f, n


@pytest.mark.criterion(3, C3)
def test_criterion_3_functional_inequality():
    rng = np.random.default_rng(303)
    worst, both_inf = math.inf, 0
    for k in range(50):
        V, f, n = _random_instance(rng, k)
        # cubature at 1e-4 in 3D keeps the run short; deficits are O(0.1) and up
        quad = QuadratureSpec(rel_tol=1e-6 if n == 2 else 1e-4, max_cells=100_000)
        rep = vf.thm1_report(V, f, n, quad)
        if rep.flags["both_infinite"]:
            # |x|^2 in the plane: +inf >= +inf holds in the extended reals
            both_inf += 1
            continue
        worst = min(worst, rep.deficit)
        assert rep.deficit >= -1e-6, (k, rep.inputs, rep.deficit)
    print(f"min finite deficit {worst:.3e}; {both_inf} instances infinite on both sides")


# --- 4 ----------------------------------------------------------------------------

@pytest.mark.criterion(4, C4)
def test_criterion_4_rectangle_example():
    start = time.perf_counter()
    rep = vf.example_2d(4.0, resolution=32, solver="exact")
    # discretization_tol is twice the larger of the two grid cell diameters
    print(f"alpha=4: W1 {rep['W1']:.6f}, R {rep['R']:.12f}, tol {rep['discretization_tol']:.4f}")
    assert rep["W1"] >= 0.5 - rep["discretization_tol"]
    assert abs(rep["R"] - 1.125) <= 1e-9
    sweep = [rep] + [vf.example_2d(a, resolution=32, solver="exact") for a in (8.0, 16.0)]
    rems = [r["remainder"] for r in sweep]
    fmps = [r["fmp_remainder"] for r in sweep]
    print(f"remainders {rems}, FMP remainders {fmps}")
    assert rems[0] < rems[1] < rems[2]
    assert all(v <= 4.0 / 2**7 for v in fmps)
    assert time.perf_counter() - start < 300


# --- 5 ----------------------------------------------------------------------------

@pytest.mark.criterion(5, C5)
@pytest.mark.parametrize("n,resolution", [(2, 32), (3, 16)])
def test_criterion_5_isotropic_lower_side(n, resolution):
    start = time.perf_counter()
    K = geo.Box(np.full(n, 0.5))
    L = geo.normalize(geo.Ball(1.0, dimension=n))
    rep = vf.isotropic_w1_bounds(K, L, resolution=resolution, solver="exact")
    print(f"n={n}: lower {rep['lower']:.5f}, W1 {rep['W1']:.5f}, dual {rep['dual_phi_norm']:.5f}")
    assert rep["lower"] <= rep["W1"] + 0.02
    assert rep["dual_phi_norm"] <= rep["W1"] + 1e-9
    assert time.perf_counter() - start < 600


# --- 6 ----------------------------------------------------------------------------

@pytest.mark.criterion(6, C6)
def test_criterion_6_alzer():
    rng = np.random.default_rng(606)
    start = time.perf_counter()
    worst = math.inf
    for _ in range(10_000):
        n = int(rng.integers(1, 11))
        lam = np.exp(rng.uniform(-math.log(1e3), math.log(1e3), size=n))
        worst = min(worst, vf.alzer_gap(lam))
    elapsed = time.perf_counter() - start
    print(f"min gap {worst:.3e}, {elapsed:.2f} s")
    assert worst >= -1e-12
    assert elapsed < 5


# --- 7 ----------------------------------------------------------------------------

@pytest.mark.criterion(7, C7)
def test_criterion_7_F_at_zero():
    assert tr.F_func(0.0) == 0.0


@pytest.mark.criterion(7, C7)
def test_criterion_7_F_two_sided_bound():
    t = np.linspace(0.0, 100.0, 10_001)[1:]
    rep = vf.F_bounds(t)
    print(rep)
    assert rep["upper_holds"]
    assert rep["lower_holds"], (
        f"min F(t)/min(t^2, t) = {rep['min_ratio']:.6f} < 1 at {rep['lower_failures']} grid points"
    )


@pytest.mark.criterion(7, C7)
def test_criterion_7_jensen():
    rng = np.random.default_rng(707)
    worst = math.inf
    for _ in range(20):
        n = int(rng.integers(1, 4))
        mu = tr.DiscreteMeasure.uniform(rng.normal(size=(int(rng.integers(3, 30)), n)))
        nu = tr.DiscreteMeasure.uniform(rng.normal(size=(int(rng.integers(3, 30)), n)) + rng.normal(size=n))
        worst = min(worst, vf.jensen_gap(mu, nu, float(rng.uniform(0.1, 10.0))))
    print(f"min Jensen gap {worst:.3e}")
    assert worst >= -1e-12


# --- 8 ----------------------------------------------------------------------------

def _quantile_cost(mu, nu):
    """W1 on the line as the integral of |F_mu - F_nu|."""
    x = np.union1d(mu.points[:, 0], nu.points[:, 0])
    Fm = np.array([mu.weights[mu.points[:, 0] <= v].sum() for v in x[:-1]])
    Fn = np.array([nu.weights[nu.points[:, 0] <= v].sum() for v in x[:-1]])
    return float(np.sum(np.abs(Fm - Fn) * np.diff(x)))


@pytest.mark.criterion(8, C8)
def test_criterion_8_exact_vs_1d_oracle():
    rng = np.random.default_rng(808)
    worst_err, worst_defect = 0.0, 0.0
    for _ in range(50):
        m, k = int(rng.integers(2, 60)), int(rng.integers(2, 60))
        wa, wb = rng.random(m) + 0.01, rng.random(k) + 0.01
        mu = tr.DiscreteMeasure(rng.normal(size=(m, 1)), wa / wa.sum())
        nu = tr.DiscreteMeasure(rng.normal(size=(k, 1)) * 2 + 0.5, wb / wb.sum())
        plan = tr.solve_exact(mu, nu, tr.EuclideanPower(1.0))
        worst_err = max(worst_err, abs(plan.primal_cost - _quantile_cost(mu, nu)))
        worst_defect = max(worst_defect, plan.marginal_defect)
    print(f"max |exact - oracle| {worst_err:.3e}, max defect {worst_defect:.3e}")
    assert worst_err <= 1e-10
    assert worst_defect <= 1e-10


@pytest.mark.criterion(8, C8)
def test_criterion_8_entropic_vs_exact():
    rng = np.random.default_rng(818)
    tol = 1e-9
    worst_rel, worst_defect = 0.0, 0.0
    for _ in range(20):
        m, k = int(rng.integers(10, 401)), int(rng.integers(10, 401))
        n = int(rng.integers(1, 4))
        mu = tr.DiscreteMeasure.uniform(rng.normal(size=(m, n)))
        nu = tr.DiscreteMeasure.uniform(rng.normal(size=(k, n)) * 1.5 + 1.0)
        cost = tr.EuclideanPower(1.0)
        exact = tr.solve_exact(mu, nu, cost)
        eps = 0.01 * float(np.median(cost.matrix(mu.points, nu.points)))
        ent = tr.solve_entropic(mu, nu, cost, eps, tol=tol)
        worst_rel = max(worst_rel, abs(ent.primal_cost - exact.primal_cost) / exact.primal_cost)
        worst_defect = max(worst_defect, ent.marginal_defect, ent.info["sinkhorn_defect"])
        assert exact.marginal_defect <= 1e-10
    print(f"max relative entropic error {worst_rel:.3e}, max defect {worst_defect:.3e}")
    assert worst_rel <= 0.05
    assert worst_defect <= tol


# --- 9 ----------------------------------------------------------------------------

@pytest.mark.criterion(9, C9)
def test_criterion_9_grid_vs_tensorized():
    grid = sp.poincare_grid(geo.Box([0.5, 0.5]), 64).value
    oracle = sp.poincare_box([0.5, 0.5]).value
    print(f"grid {grid:.6f}, tensorized {oracle:.6f}")
    assert abs(grid - oracle) / oracle <= 0.05


@pytest.mark.criterion(9, C9)
def test_criterion_9_dilation_law_closed_form():
    for a in (0.3, 1.0, 2.5):
        for t in (0.5, 2.0, 7.0):
            for paper in (False, True):
                assert sp.poincare_interval(t * a, paper).value == pytest.approx(
                    sp.poincare_interval(a, paper).value / t, rel=1e-15)
        box = geo.Box([a, a / 3])
        est = sp.cheeger_estimate(box)
        big = sp.cheeger_estimate(geo.dilate(box, 4.0))
        assert big.bracket == pytest.approx((est.bracket[0] / 4, est.bracket[1] / 4), rel=1e-15)


@pytest.mark.criterion(9, C9)
def test_criterion_9_interval_constants_surfaced():
    d = sp.poincare_interval(1.0).to_dict()
    assert d["paper_value"] == pytest.approx(math.pi, rel=1e-15)
    assert d["oracle_value"] == pytest.approx(math.pi / 2, rel=1e-7)
    rep = vf.example_2d(4.0, resolution=16)
    assert rep["poincare"]["paper_value"] is not None and rep["poincare"]["oracle_value"] is not None
    assert rep["remainder_paper_constant"] != rep["remainder_oracle_constant"]


# --- 10 ---------------------------------------------------------------------------

@pytest.mark.criterion(10, C10)
def test_criterion_10_scaling_invariance():
    rng = np.random.default_rng(1010)
    scales = [(1.0, 1.0), (2.0, 3.0), (0.1, 7.0), (5.0, 0.2), (1.7, 1.7)]
    worst = 0.0
    for k in range(20):
        n = 2 if k % 2 == 0 else 3
        rep = vf.check_scaling_invariance(random_polytope(rng, n), random_polytope(rng, n), scales)
        worst = max(worst, rep["max_discrepancy"])
    print(f"max discrepancy {worst:.3e}")
    assert worst <= 1e-9
