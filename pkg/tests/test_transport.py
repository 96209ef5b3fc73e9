import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from isoquant import geometry as geo
from isoquant import transport as tr
from isoquant.transport import CheegerF, DiscreteMeasure, EuclideanPower

W1 = EuclideanPower(1.0)
W2 = EuclideanPower(2.0)


def random_measure(rng, m, n, spread=1.0):
    pts = rng.normal(size=(m, n)) * spread
    w = rng.random(m) + 0.05
    return DiscreteMeasure(pts, w / w.sum())


def quantile_oracle(mu, nu, p=1.0):
    """1D optimal cost from the monotone rearrangement (quantile coupling)."""
    ia, ib = np.argsort(mu.points[:, 0]), np.argsort(nu.points[:, 0])
    xa, wa = mu.points[ia, 0], mu.weights[ia]
    xb, wb = nu.points[ib, 0], nu.weights[ib]
    ca, cb = np.cumsum(wa), np.cumsum(wb)
    ca[-1] = cb[-1] = 1.0
    levels = np.union1d(ca, cb)
    lo = np.concatenate([[0.0], levels[:-1]])
    mids = 0.5 * (lo + levels)
    qa = xa[np.searchsorted(ca, mids)]
    qb = xb[np.searchsorted(cb, mids)]
    return float(((levels - lo) * np.abs(qa - qb) ** p).sum())


# --- F -----------------------------------------------------------------------

def test_F_examples():
    assert tr.F_func(0.0) == 0.0
    assert tr.F_func(1.0) == pytest.approx(1 - math.log(2), rel=1e-15)
    assert tr.F_func(1e-8) == pytest.approx(0.5e-16, rel=1e-6)
    with pytest.raises(ValueError):
        tr.F_func(-0.1)
    assert tr.F_func(-0.5, allow_negative=True) == pytest.approx(-0.5 + math.log(2))
    with pytest.raises(ValueError):
        tr.F_func(-1.0, allow_negative=True)


@given(st.floats(0, 1e6), st.floats(0, 1e6))
def test_F_convex_increasing(a, b):
    lo, hi = min(a, b), max(a, b)
    assert tr.F_func(lo) <= tr.F_func(hi)
    mid = tr.F_func(0.5 * (lo + hi))
    assert mid <= 0.5 * (tr.F_func(lo) + tr.F_func(hi)) + 1e-12 * (1 + hi)


def test_cost_json_roundtrip():
    for c in (EuclideanPower(1.5), CheegerF(2.0)):
        assert tr.cost_from_dict(c.to_dict()) == c
    with pytest.raises(ValueError):
        tr.cost_from_dict({"type": "manhattan"})
    with pytest.raises(ValueError):
        EuclideanPower(0.0)


# --- measures ------------------------------------------------------------------

def test_measure_validation():
    with pytest.raises(ValueError):
        DiscreteMeasure([[0.0], [1.0]], [0.5, 0.6])
    with pytest.raises(ValueError):
        DiscreteMeasure([[0.0], [0.0]], [0.5, 0.5])
    with pytest.raises(ValueError):
        DiscreteMeasure([[0.0], [1.0]], [1.5, -0.5])


def test_discretize_box_resolution_two():
    mu = tr.discretize_body(geo.Box([0.5, 0.5]), 2)
    assert len(mu) == 4
    np.testing.assert_allclose(mu.weights, 0.25)
    np.testing.assert_allclose(np.sort(np.abs(mu.points), axis=0), 0.25)


@pytest.mark.parametrize("body", [geo.Ball(1.0), geo.Polytope([[0, 0], [2, 0], [0.3, 1.1]]),
                                  geo.Ball(0.5, dimension=3)])
def test_discretize_mass_and_centroid(body):
    mu = tr.discretize_body(body, 24)
    assert mu.weights.sum() == pytest.approx(1.0, abs=1e-14)
    assert mu.source_tag["volume_estimate"] == pytest.approx(geo.volume(body), rel=0.01)
    np.testing.assert_allclose(mu.mean(), geo.centroid(body), atol=0.01 * mu.source_tag["cell_diameter"] * 24)


def test_discretize_ball_against_fine_inclusion_oracle():
    # fine-grid inclusion count for the unit disk at 8x the resolution
    mu = tr.discretize_body(geo.Ball(1.0), 64)
    ax = (np.arange(512) + 0.5) / 512 * 2 - 1
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    fine = (X**2 + Y**2 <= 1).sum() * (2 / 512) ** 2
    assert mu.source_tag["volume_estimate"] == pytest.approx(fine, rel=0.02)
    assert fine == pytest.approx(math.pi, rel=1e-3)


def test_discretize_rejects_bad_resolution():
    with pytest.raises(ValueError):
        tr.discretize_body(geo.Box([1, 1]), 0)


# --- exact solver -----------------------------------------------------------

def test_exact_identical_measures():
    rng = np.random.default_rng(0)
    mu = random_measure(rng, 12, 2)
    plan = tr.solve_exact(mu, mu, W1)
    assert plan.primal_cost == pytest.approx(0.0, abs=1e-15)
    np.testing.assert_allclose(plan.dense(), np.diag(mu.weights), atol=1e-15)


def test_exact_two_diracs_line():
    mu = DiscreteMeasure([[0.0], [1.0]], [0.5, 0.5])
    nu = DiscreteMeasure([[0.5], [1.5]], [0.5, 0.5])
    # the two pairings cost 0.5 and 1.0
    assert tr.transport_cost(mu, nu, W1) == pytest.approx(0.5, abs=1e-15)


@pytest.mark.parametrize("cost", [W1, W2, EuclideanPower(1.5), CheegerF(3.0)])
def test_exact_single_diracs(cost):
    a, b = np.array([[0.2, -1.0]]), np.array([[1.0, 2.0]])
    mu, nu = DiscreteMeasure(a, [1.0]), DiscreteMeasure(b, [1.0])
    assert tr.transport_cost(mu, nu, cost) == pytest.approx(float(cost.matrix(a, b)[0, 0]), rel=1e-15)


def test_exact_budget_exceeded():
    rng = np.random.default_rng(1)
    mu, nu = random_measure(rng, 30, 2), random_measure(rng, 30, 2)
    with pytest.raises(tr.TransportError, match="entropic"):
        tr.solve_exact(mu, nu, W1, budget=100)


@settings(max_examples=25)
@given(seed=st.integers(0, 2**31), p=st.sampled_from([1.0, 2.0]))
def test_exact_matches_1d_monotone_oracle(seed, p):
    rng = np.random.default_rng(seed)
    mu, nu = random_measure(rng, int(rng.integers(2, 30)), 1), random_measure(rng, int(rng.integers(2, 30)), 1)
    plan = tr.solve_exact(mu, nu, EuclideanPower(p))
    assert plan.primal_cost == pytest.approx(quantile_oracle(mu, nu, p), abs=1e-10)
    assert plan.marginal_defect <= 1e-10


@settings(max_examples=20)
@given(seed=st.integers(0, 2**31))
def test_exact_beats_random_feasible_plans(seed):
    rng = np.random.default_rng(seed)
    mu, nu = random_measure(rng, int(rng.integers(2, 21)), 2), random_measure(rng, int(rng.integers(2, 21)), 2)
    plan = tr.solve_exact(mu, nu, W2)
    C = W2.matrix(mu.points, nu.points)
    for _ in range(100):
        G = tr.random_feasible_plan(mu.weights, nu.weights, rng)
        np.testing.assert_allclose(G.sum(axis=1), mu.weights, atol=1e-14)
        np.testing.assert_allclose(G.sum(axis=0), nu.weights, atol=1e-14)
        assert plan.primal_cost <= float((G * C).sum()) + 1e-12


@settings(max_examples=20)
@given(seed=st.integers(0, 2**31))
def test_W1_metric_axioms(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (random_measure(rng, int(rng.integers(2, 15)), 2) for _ in range(3))
    ab, ba = tr.transport_cost(a, b, W1), tr.transport_cost(b, a, W1)
    assert ab == pytest.approx(ba, abs=1e-10)
    assert tr.transport_cost(a, c, W1) <= ab + tr.transport_cost(b, c, W1) + 1e-9


@settings(max_examples=20)
@given(seed=st.integers(0, 2**31))
def test_cost_invariant_under_isometry(seed):
    rng = np.random.default_rng(seed)
    mu, nu = random_measure(rng, 10, 3), random_measure(rng, 12, 3)
    Q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    b = rng.normal(size=3)
    for cost in (W1, W2):
        before = tr.transport_cost(mu, nu, cost)
        after = tr.transport_cost(mu.push_forward(Q, b), nu.push_forward(Q, b), cost)
        assert after == pytest.approx(before, abs=1e-10)


def test_plan_marginals_and_recomputed_cost():
    rng = np.random.default_rng(3)
    mu, nu = random_measure(rng, 15, 2), random_measure(rng, 9, 2)
    plan = tr.solve_exact(mu, nu, W1)
    G = plan.dense()
    np.testing.assert_allclose(G.sum(axis=1), mu.weights, atol=1e-10)
    np.testing.assert_allclose(G.sum(axis=0), nu.weights, atol=1e-10)
    assert plan.recompute_cost() == pytest.approx(plan.primal_cost, rel=1e-12)


def test_translated_unit_boxes():
    # uniform on a box vs its translate: the translation plan is optimal for W1
    v = np.array([0.3, -0.4])
    E = geo.Box([0.5, 0.5])
    mu = tr.discretize_body(E, 8)
    nu = tr.discretize_body(geo.translate(E, v), 8)
    assert tr.transport_cost(mu, nu, W1) == pytest.approx(0.5, abs=1e-10)
    assert tr.transport_cost(mu, mu, W1) == pytest.approx(0.0, abs=1e-15)


# --- entropic solver --------------------------------------------------------

def test_entropic_identity_small_epsilon():
    rng = np.random.default_rng(4)
    mu = random_measure(rng, 20, 2)
    eps = 1e-3
    plan = tr.solve_entropic(mu, mu, W1, eps)
    assert plan.primal_cost <= eps * math.log(len(mu)) + plan.marginal_defect
    assert np.trace(plan.dense()) >= 0.99


@pytest.mark.parametrize("seed", range(5))
def test_entropic_within_five_percent(seed):
    rng = np.random.default_rng(seed)
    mu, nu = random_measure(rng, 10, 2), random_measure(rng, 10, 2, spread=1.5)
    exact = tr.transport_cost(mu, nu, W1)
    C = W1.matrix(mu.points, nu.points)
    plan = tr.solve_entropic(mu, nu, W1, 0.01 * float(np.median(C)), tol=1e-9)
    assert plan.marginal_defect <= 1e-9
    assert plan.primal_cost >= exact - 1e-9
    assert abs(plan.primal_cost - exact) <= 0.05 * exact


def test_entropic_converges_as_epsilon_shrinks():
    rng = np.random.default_rng(11)
    mu, nu = random_measure(rng, 25, 2), random_measure(rng, 25, 2)
    exact = tr.transport_cost(mu, nu, W2)
    gaps = [tr.solve_entropic(mu, nu, W2, eps).primal_cost - exact for eps in (0.5, 0.1, 0.02, 0.004)]
    assert all(g >= -1e-9 for g in gaps)
    assert gaps[-1] < gaps[0]
    assert gaps[-1] <= 0.01 * exact


def test_entropic_nonconvergence_reports_defect():
    rng = np.random.default_rng(5)
    mu, nu = random_measure(rng, 30, 2), random_measure(rng, 30, 2)
    with pytest.raises(tr.TransportError, match="defect"):
        tr.solve_entropic(mu, nu, W1, 1e-4, max_iter=3, anneal=False)


# --- duality and Jensen -------------------------------------------------------

def test_dual_examples():
    rng = np.random.default_rng(6)
    mu, nu = random_measure(rng, 10, 2), random_measure(rng, 14, 2)
    assert tr.dual_lower_bound(mu, nu, lambda x: np.full(x.shape[0], 3.0)) == pytest.approx(0.0, abs=1e-15)
    assert tr.dual_lower_bound(mu, mu, lambda x: np.linalg.norm(x, axis=1)) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(tr.LipschitzError):
        tr.dual_lower_bound(mu, nu, lambda x: 2 * x[:, 0])


@settings(max_examples=20)
@given(seed=st.integers(0, 2**31))
def test_duality_lower_bound(seed):
    rng = np.random.default_rng(seed)
    mu, nu = random_measure(rng, 12, 2), random_measure(rng, 12, 2, spread=2.0)
    w = tr.transport_cost(mu, nu, W1)
    u = rng.normal(size=2)
    u /= np.linalg.norm(u)
    for phi in (lambda x: np.linalg.norm(x, axis=1), lambda x: x @ u,
                lambda x: np.minimum(np.linalg.norm(x - u, axis=1), 1.0)):
        assert tr.dual_lower_bound(mu, nu, phi) <= w + 1e-9
        assert -tr.dual_lower_bound(mu, nu, phi) <= w + 1e-9


@settings(max_examples=20)
@given(seed=st.integers(0, 2**31), D=st.floats(0.1, 10.0))
def test_jensen_relation(seed, D):
    rng = np.random.default_rng(seed)
    mu, nu = random_measure(rng, 10, 2), random_measure(rng, 10, 2)
    wc = tr.transport_cost(mu, nu, CheegerF(D))
    assert wc >= tr.F_func(D * tr.transport_cost(mu, nu, W1)) - 1e-12


# --- barycentric map ----------------------------------------------------------

def test_barycentric_identity():
    rng = np.random.default_rng(7)
    mu = random_measure(rng, 10, 2)
    src, img = tr.barycentric_map(tr.solve_exact(mu, mu, W2))
    np.testing.assert_allclose(img, src, atol=1e-14)


def test_barycentric_1d_is_monotone():
    rng = np.random.default_rng(8)
    mu, nu = random_measure(rng, 20, 1), random_measure(rng, 25, 1)
    src, img = tr.barycentric_map(tr.solve_exact(mu, nu, W2))
    order = np.argsort(src[:, 0])
    assert np.all(np.diff(img[order, 0]) >= -1e-12)


@settings(max_examples=20)
@given(seed=st.integers(0, 2**31))
def test_quadratic_plans_are_monotone(seed):
    rng = np.random.default_rng(seed)
    mu, nu = random_measure(rng, 15, 2), random_measure(rng, 15, 2)
    src, img = tr.barycentric_map(tr.solve_exact(mu, nu, W2))
    assert tr.monotonicity_defect(src, img) >= -1e-9


# --- translation search ------------------------------------------------------

def test_translation_recovers_shift():
    mu = tr.discretize_body(geo.Box([0.5, 0.5]), 6)
    v0 = np.array([0.25, -0.5])
    v, val = tr.wasserstein_translation_min(mu, mu.translate(v0), W1, tr.TranslationSearch(1.0))
    np.testing.assert_allclose(v, v0, atol=1e-12)
    assert val == pytest.approx(0.0, abs=1e-12)


def test_translation_centered_bodies_prefer_zero():
    mu = tr.discretize_body(geo.Box([0.5, 0.5]), 8)
    nu = tr.discretize_body(geo.normalize(geo.Ball(1.0)), 8)
    v, val = tr.wasserstein_translation_min(mu, nu, W1, tr.TranslationSearch(0.2, refinements=1))
    assert val <= tr.transport_cost(mu, nu, W1) + 1e-15
    assert np.linalg.norm(v) <= 0.05


def test_translation_value_monotone_in_search_box():
    rng = np.random.default_rng(9)
    mu, nu = random_measure(rng, 12, 2), random_measure(rng, 12, 2)
    vals = [tr.wasserstein_translation_min(mu, nu, W1, tr.TranslationSearch(h, 5, 0))[1]
            for h in (0.25, 0.5, 1.0)]
    # the grids are nested (odd count, halving widths), so values cannot increase
    assert vals[1] <= vals[0] + 1e-15 and vals[2] <= vals[1] + 1e-15


# --- CSV --------------------------------------------------------------------

def test_measure_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(10)
    mu = random_measure(rng, 7, 3)
    tr.write_measure_csv(mu, tmp_path / "m.csv")
    back = tr.read_measure_csv(tmp_path / "m.csv")
    np.testing.assert_array_equal(back.points, mu.points)
    np.testing.assert_array_equal(back.weights, mu.weights)


def test_plan_csv_has_header_and_rows(tmp_path):
    rng = np.random.default_rng(12)
    mu, nu = random_measure(rng, 5, 2), random_measure(rng, 6, 2)
    plan = tr.solve_exact(mu, nu, W1)
    tr.write_plan_csv(plan, tmp_path / "p.csv")
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[0].startswith("# {") and lines[1] == "i,j,mass"
    data = np.loadtxt(tmp_path / "p.csv", delimiter=",", skiprows=2, ndmin=2)
    assert data.shape[0] == plan.mass.size
    assert data[:, 2].sum() == pytest.approx(1.0, abs=1e-12)
