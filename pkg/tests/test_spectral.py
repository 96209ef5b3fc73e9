import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from isoquant import geometry as geo
from isoquant import spectral as sp


def test_interval_carries_both_constants():
    est = sp.poincare_interval(1.0)
    assert est.paper_value == pytest.approx(math.pi, rel=1e-15)
    # Neumann cos(pi (x + 1) / 2) on [-1, 1] has eigenvalue (pi/2)^2
    assert est.oracle_value == pytest.approx(math.pi / 2, rel=1e-7)
    assert est.value == est.oracle_value
    assert sp.poincare_interval(1.0, use_paper=True).value == est.paper_value
    d = est.to_dict()
    assert d["oracle_value"] != d["paper_value"]


def test_fd_gap_converges_quadratically():
    errs = [abs(sp.neumann_fd_gap(2.0, m) - (math.pi / 2) ** 2) for m in (100, 200, 400)]
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.01)
    assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.01)


@given(a=st.floats(0.01, 100.0), t=st.floats(0.01, 100.0))
def test_interval_dilation_law(a, t):
    for use_paper in (False, True):
        lhs = sp.poincare_interval(t * a, use_paper).value
        assert lhs == pytest.approx(sp.poincare_interval(a, use_paper).value / t, rel=1e-14)


def test_interval_rejects_nonpositive():
    with pytest.raises(ValueError):
        sp.poincare_interval(0.0)


def test_box_examples():
    a = 0.7
    assert sp.poincare_box([a, a]).value == sp.poincare_interval(a).value
    alpha = 4.0
    est = sp.poincare_box([alpha / 2, 1 / (2 * alpha)])
    assert est.value == sp.poincare_interval(alpha / 2).value
    assert est.bracket == (est.value, est.value)
    with pytest.raises(ValueError):
        sp.poincare_box([1.0, -1.0])


@given(st.lists(st.floats(0.05, 20.0), min_size=1, max_size=5), st.randoms(use_true_random=False))
def test_box_permutation_invariant(hs, rnd):
    perm = list(hs)
    rnd.shuffle(perm)
    assert sp.poincare_box(perm).value == sp.poincare_box(hs).value
    assert sp.poincare_box(hs).value == min(sp.poincare_interval(h).value for h in hs)


def test_grid_unit_square_against_tensorized_oracle():
    grid = sp.poincare_grid(geo.Box([0.5, 0.5]), 64)
    oracle = sp.poincare_box([0.5, 0.5]).value
    assert abs(grid.value - oracle) / oracle <= 0.05
    assert grid.method == "grid_eigen" and grid.resolution == 64


def test_grid_dilation_law():
    E = geo.Polytope([[0, 0], [2, 0], [0.5, 1.5]])
    a = sp.poincare_grid(E, 48).value
    b = sp.poincare_grid(geo.dilate(E, 3.0), 48).value
    # the grid follows the bounding box, so the law holds up to round-off
    assert b == pytest.approx(a / 3.0, rel=1e-8)


@pytest.mark.parametrize("body", [geo.Ball(1.0), geo.Polytope([[0, 0], [2, 0], [0.5, 1.5]]),
                                  geo.Box([1.0, 0.3])])
def test_grid_self_convergence(body):
    a, b = sp.poincare_grid(body, 32).value, sp.poincare_grid(body, 64).value
    assert a > 0 and abs(a - b) / b <= 0.05


def test_grid_ball_3d_positive():
    est = sp.poincare_grid(geo.Ball(1.0, dimension=3), 16)
    assert 0 < est.value < 10


def test_grid_guards():
    with pytest.raises(ValueError):
        sp.poincare_grid(geo.Box([1, 1]), 4)
    # a thin diagonal strip keeps only diagonal cells, which share no edges
    thin = geo.Polytope([[0, 0], [1, 1], [1 - 1e-3, 1 + 1e-3], [-1e-3, 1e-3]])
    with pytest.raises(sp.SpectralError):
        sp.poincare_grid(thin, 8)


def test_cheeger_bracket():
    box = geo.Box([2.0, 0.125])
    est = sp.cheeger_estimate(box)
    h = sp.poincare_box(box.half_sides).value
    assert est.kind == "cheeger" and est.method == "tensorized"
    assert est.bracket == pytest.approx((h, 2 * h))
    assert est.bracket[0] <= est.value <= est.bracket[1]
    assert est.paper_value == pytest.approx(math.pi / 2.0)
    grid = sp.cheeger_estimate(geo.Ball(1.0), resolution=32)
    assert grid.bracket[0] > 0 and grid.method == "grid_eigen"
    with pytest.raises(ValueError):
        sp.cheeger_estimate(box, method="isoperimetric")
    with pytest.raises(ValueError):
        sp.cheeger_estimate(geo.Ball(1.0), method="box")


@given(t=st.floats(0.05, 20.0))
def test_cheeger_dilation_law_closed_form(t):
    box = geo.Box([1.5, 0.4])
    est = sp.cheeger_estimate(box)
    big = sp.cheeger_estimate(geo.dilate(box, t))
    np.testing.assert_allclose(big.bracket, np.array(est.bracket) / t, rtol=1e-14)
    sc = est.scaled(t)
    np.testing.assert_allclose(sc.bracket, big.bracket, rtol=1e-14)


def test_estimate_invariants():
    with pytest.raises(sp.SpectralError):
        sp.SpectralEstimate(-1.0, "cheeger", "closed_form")
    with pytest.raises(sp.SpectralError):
        sp.SpectralEstimate(1.0, "cheeger", "closed_form", bracket=(2.0, 3.0))
    with pytest.raises(ValueError):
        sp.SpectralEstimate(1.0, "kls", "closed_form")
