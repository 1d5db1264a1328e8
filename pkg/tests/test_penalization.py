import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qlschrod.nonlinearity import HomogeneousQ
from qlschrod.penalization import (Ball, Box, CutoffEta, PenalizedH, choose_a, compute_A, eta,
                                   eta_prime, seam_check, verify_H_bounds)

Q = HomogeneousQ.product()


def test_eta_examples():
    a = 0.3
    assert eta(a, a) == 1.0 and eta_prime(a, a) == 0.0
    assert eta(3 * a, a) == pytest.approx(0.5, abs=1e-15)
    assert eta(5 * a, a) == 0.0 and eta(-4.0, a) == 1.0
    s = np.linspace(-1, 3, 200_001)
    assert np.max(np.abs(eta_prime(s, a))) == pytest.approx(3 / (8 * a), rel=1e-9)
    assert CutoffEta(a).slope_bound == pytest.approx(3 / (8 * a))
    with pytest.raises(ValueError):
        CutoffEta(0.0)


@settings(max_examples=200, deadline=None)
@given(st.floats(min_value=-5, max_value=5), st.floats(min_value=-5, max_value=5))
def test_eta_monotone_and_c1(s1, s2):
    a = 0.2
    if s1 < s2:
        assert eta(s1, a) >= eta(s2, a)
    h = 1e-7
    fd = (eta(s1 + h, a) - eta(s1 - h, a)) / (2 * h)
    assert abs(fd - eta_prime(s1, a)) <= 1e-5


def test_compute_A_product_coupling():
    # dense angular grid oracle for max cos^3 sin^3
    phi = np.linspace(0, np.pi / 2, 2_000_001)
    gmax = np.max((np.cos(phi) * np.sin(phi)) ** 3)
    for a in (0.0625, 0.1, 1.0):
        assert compute_A(Q, a) == pytest.approx((5 * a) ** 4 * gmax, rel=1e-6)
        assert compute_A(Q, a) == pytest.approx((5 * a) ** 4 / 8, rel=1e-12)


def test_compute_A_limits():
    assert compute_A(HomogeneousQ.zero(), 0.5) == 0.0
    for q in (Q, HomogeneousQ.product(2.0, 3.0)):
        assert compute_A(q, 0.05) / compute_A(q, 0.1) == pytest.approx(2.0 ** -(q.p - 2), rel=1e-12)
    with pytest.raises(ValueError):
        compute_A(Q, 0.0)


def test_choose_a_default():
    a = choose_a(Q, 1.0, 1.0)
    bound = (8 / (4 * 625)) ** 0.25  # 625 a^4 / 8 = 1/4
    grid_a = max(2.0 ** -j for j in range(30) if 2.0 ** -j < bound)
    assert a == 0.5 * grid_a == 0.0625
    h = PenalizedH(Q, a, Ball(1.0), 1.0, 1.0)
    assert h.A == pytest.approx((5 * a) ** 4 / 8)
    assert h.smallness_ok
    assert h.k == 4 * 6 / 4


def test_choose_a_symmetry_and_monotonicity():
    assert choose_a(Q, 1.0, 3.0) == choose_a(Q, 3.0, 1.0) == choose_a(Q, 1.0, 1.0)
    prev = 0.0
    for w0 in (0.25, 0.5, 1.0, 2.0, 4.0, 8.0):
        a = choose_a(Q, w0, w0)
        assert a >= prev
        prev = a
    with pytest.raises(ValueError):
        choose_a(Q, 0.0, 1.0)


def test_h_branches():
    a = 0.0625
    h = PenalizedH(Q, a, Ball(1.0), 1.0, 1.0)
    inside, outside = np.array([0.2, 0, 0]), np.array([3.0, 0, 0])
    for s, t in ((1.0, 2.0), (0.01, 0.02), (-1.0, 2.0)):
        assert h.h_value(inside, s, t) == Q.value(s, t)
    s, t = 0.03, 0.04  # |(s,t)| = 0.05 <= a
    assert h.h_value(outside, s, t) == Q.value(s, t)
    s, t = 1.2, 0.5  # |(s,t)| >= 5a
    assert h.h_value(outside, s, t) == pytest.approx(h.A * (s * s + t * t), rel=1e-15)
    gs, gt = h.h_grad(outside, s, t)
    assert (gs, gt) == (pytest.approx(2 * h.A * s), pytest.approx(2 * h.A * t))
    assert h.h_value(outside, 0.0, 0.0) == 0.0


def test_box_region():
    h = PenalizedH(Q, 0.0625, Box(1.0), 1.0, 1.0)
    assert h.inside(np.array([[0.9, -0.9, 0.9], [1.1, 0, 0]])).tolist() == [True, False]


def test_bounds_pass_for_default():
    h = PenalizedH(Q, choose_a(Q, 1.0, 1.0), Ball(1.0), 1.0, 1.0)
    rep = verify_H_bounds(h)
    assert rep.ok, rep.to_dict()


def test_oversized_a_is_reported():
    h = PenalizedH(Q, 10 * choose_a(Q, 1.0, 1.0), Ball(1.0), 1.0, 1.0)
    rep = verify_H_bounds(h)
    assert not rep.ok
    assert rep.violations["H3_energy"] > 0 or rep.violations["H3_slope"] > 0
    assert rep.examples["H3_slope"] or rep.examples["H3_energy"]
    with pytest.raises(ValueError):
        verify_H_bounds(h, sample_count=10)


def test_seams_are_c1():
    h = PenalizedH(Q, 0.0625, Ball(1.0), 1.0, 1.0)
    rep = seam_check(h)
    assert rep.ok(1e-6), rep


@settings(max_examples=200, deadline=None)
@given(st.floats(min_value=0.0, max_value=2 * np.pi), st.floats(min_value=0.01, max_value=10.0))
def test_gradient_matches_finite_differences(phi, rfac):
    h = PenalizedH(Q, 0.0625, Ball(1.0), 1.0, 1.0)
    r = rfac * h.a
    s, t = r * np.cos(phi), r * np.sin(phi)
    d = 1e-6 * r
    fs = (h.qhat(s + d, t) - h.qhat(s - d, t)) / (2 * d)
    ft = (h.qhat(s, t + d) - h.qhat(s, t - d)) / (2 * d)
    gs, gt = h.qhat_grad(s, t)
    scale = abs(gs) + abs(gt) + 2 * h.A * r
    assert abs(fs - gs) <= 1e-4 * scale and abs(ft - gt) <= 1e-4 * scale


@settings(max_examples=200, deadline=None)
@given(st.floats(min_value=-1.0, max_value=1.0), st.floats(min_value=-1.0, max_value=1.0))
def test_exterior_superquadratic_bound(s, t):
    h = PenalizedH(Q, 0.0625, Ball(1.0), 1.0, 1.0)
    out = np.array([5.0, 0, 0])
    gs, gt = h.h_grad(out, s, t)
    euler = s * gs + t * gt
    assert 2 * h.h_value(out, s, t) <= euler + 1e-12 * (1 + abs(euler))


@settings(max_examples=200, deadline=None)
@given(st.floats(min_value=1e-3, max_value=10), st.floats(min_value=1e-3, max_value=10))
def test_interior_euler(s, t):
    h = PenalizedH(Q, 0.0625, Ball(1.0), 1.0, 1.0)
    x = np.zeros(3)
    gs, gt = h.h_grad(x, s, t)
    val = h.h_value(x, s, t)
    assert abs(6 * val - s * gs - t * gt) <= 1e-9 * (6 * val)
