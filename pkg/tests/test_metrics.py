import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ztrobot.chain import KinematicState
from ztrobot.errors import BadWeights, DegenerateInput, SingularJacobian
from ztrobot.metrics import (
    Twist,
    Wrench,
    combined_score,
    dexterity,
    dexterity_gradient,
    evaluate,
    homogenize,
    pinv,
    pinv_derivative,
    rtr,
    rtr_gradient,
)

TWIST = np.array([0.002, 0.0, 0.0, 0.0, 0.0, 0.0])
WRENCH = np.array([60.0, 20.0, 0.0, 0.0, 0.0, 0.0])
L = 0.25


def random_states(robot, rng, count):
    out = []
    while len(out) < count:
        s = KinematicState(robot, rng.uniform(-np.pi, np.pi, robot.n))
        if np.linalg.svd(s.weighted, compute_uv=False)[-1] > 1e-2:
            out.append(s)
    return out


def fd_gradient(robot, q, f, h=1e-6):
    g = np.zeros(robot.n)
    for i in range(robot.n):
        dq = np.zeros(robot.n)
        dq[i] = h
        g[i] = (f(KinematicState(robot, q + dq).weighted) - f(KinematicState(robot, q - dq).weighted)) / (2 * h)
    return g


def test_dexterity_examples():
    assert dexterity(np.eye(6))[0] == pytest.approx(1.0, abs=1e-15)
    eta, g1, g2 = dexterity(np.diag([1.0, 2.0]))
    assert g1 == pytest.approx(np.sqrt(5)) and g2 == pytest.approx(np.sqrt(1.25))
    assert eta == pytest.approx(0.8)


def test_dexterity_decreases_toward_rank_loss():
    values = [dexterity(np.diag([1.0, e]))[0] for e in np.logspace(0, -5, 30)]
    assert np.all(np.diff(values) < 0)
    assert values[-1] < 1e-4
    with pytest.raises(SingularJacobian):
        dexterity(np.diag([1.0, 0.0]))


@given(arrays(float, 3, elements=st.floats(0.1, 10)))
def test_dexterity_is_one_only_for_equal_singular_values(s):
    eta = dexterity(np.diag(s))[0]
    if np.ptp(s) <= 1e-12 * s.max():
        assert eta == pytest.approx(1.0, abs=1e-12)
    elif np.ptp(s) > 1e-6 * s.max():
        assert eta < 1.0


@given(arrays(float, (6, 8), elements=st.floats(-5, 5)))
@settings(max_examples=100)
def test_metric_bounds(j):
    if np.linalg.svd(j, compute_uv=False)[-1] < 1e-3:
        return
    eta1 = dexterity(j)[0]
    assert 0 < eta1 <= 1 + 1e-12
    t = np.arange(1.0, 7.0)
    w = np.array([1.0, -2, 0.5, 0.1, 0.0, 3])
    assert 0 <= rtr(j, t, w, L) <= 1


def test_dexterity_gradient_matches_finite_differences(robot, rng):
    worst = 0.0
    for s in random_states(robot, rng, 200):
        g = dexterity_gradient(s.weighted, s.partials)
        num = fd_gradient(robot, s.q, lambda jw: dexterity(jw)[0])
        worst = max(worst, np.linalg.norm(g - num) / np.linalg.norm(num))
    assert worst < 1e-4


def test_constant_jacobian_has_zero_gradients(rng):
    j = rng.normal(size=(6, 9))
    zero = np.zeros((9, 6, 9))
    np.testing.assert_array_equal(dexterity_gradient(j, zero), 0.0)
    np.testing.assert_array_equal(rtr_gradient(j, zero, TWIST, WRENCH, L), 0.0)


def planar_2r(q, l1=1.0, l2=0.7):
    s1, c1 = np.sin(q[0]), np.cos(q[0])
    s12, c12 = np.sin(q[0] + q[1]), np.cos(q[0] + q[1])
    return np.array([[-l1 * s1 - l2 * s12, -l2 * s12], [l1 * c1 + l2 * c12, l2 * c12]])


def planar_partials(q, h=1e-6):
    return np.array([(planar_2r(q + h * e) - planar_2r(q - h * e)) / (2 * h) for e in np.eye(2)])


def test_dexterity_gradient_antisymmetric_across_elbow_branches():
    up = np.array([0.4, np.pi / 2])
    down = np.array([0.4, -np.pi / 2])
    g_up = dexterity_gradient(planar_2r(up), planar_partials(up))
    g_down = dexterity_gradient(planar_2r(down), planar_partials(down))
    assert abs(g_up[0]) < 1e-9 and abs(g_down[0]) < 1e-9
    assert g_up[1] == pytest.approx(-g_down[1], rel=1e-8)
    assert abs(g_up[1]) > 1e-3


def test_rtr_examples():
    t = np.array([1.0, 0, 0, 0, 0, 0])
    assert rtr(np.eye(6), t, 3 * t, 1.0) == pytest.approx(1.0)
    assert rtr(np.eye(6), t, np.array([0, 1.0, 0, 0, 0, 0]), 1.0) == 0.0
    with pytest.raises(DegenerateInput):
        rtr(np.eye(6), np.zeros(6), t, 1.0)
    with pytest.raises(DegenerateInput):
        rtr(np.eye(6), t, np.zeros(6), 1.0)


def test_rtr_equals_cosine_between_torque_and_rate(rng):
    for _ in range(50):
        j = rng.normal(size=(6, 10))
        t, w = rng.normal(size=6), rng.normal(size=6)
        th, wh = homogenize(t, w, L)
        tau = j.T @ wh
        qd = np.linalg.pinv(j) @ th
        cos = abs(tau @ qd) / (np.linalg.norm(tau) * np.linalg.norm(qd))
        assert rtr(j, t, w, L) == pytest.approx(cos, rel=1e-10)


def test_rtr_gradient_matches_finite_differences(robot, rng):
    worst = 0.0
    for s in random_states(robot, rng, 200):
        g = rtr_gradient(s.weighted, s.partials, TWIST, WRENCH, L)
        num = fd_gradient(robot, s.q, lambda jw: rtr(jw, TWIST, WRENCH, L))
        worst = max(worst, np.linalg.norm(g - num) / max(np.linalg.norm(num), 1e-12))
    assert worst < 1e-3


def test_rtr_is_invariant_to_positive_scaling(robot, rng):
    s = random_states(robot, rng, 1)[0]
    base = rtr(s.weighted, TWIST, WRENCH, L)
    g = rtr_gradient(s.weighted, s.partials, TWIST, WRENCH, L)
    for t, w in ((TWIST, 10 * WRENCH), (7 * TWIST, WRENCH), (0.1 * TWIST, 3 * WRENCH)):
        assert rtr(s.weighted, t, w, L) == pytest.approx(base, rel=1e-12)
        np.testing.assert_allclose(rtr_gradient(s.weighted, s.partials, t, w, L), g, rtol=1e-9, atol=1e-14)


def test_pinv_derivative_matches_finite_differences(rng):
    a = rng.normal(size=(4, 7))
    da = rng.normal(size=(4, 7))
    h = 1e-6
    num = (pinv(a + h * da) - pinv(a - h * da)) / (2 * h)
    np.testing.assert_allclose(pinv_derivative(a, pinv(a), da), num, atol=1e-7)


def test_homogenize_divides_linear_velocity_and_moment():
    t, w = homogenize(Twist((1, 2, 3), (4, 5, 6)), Wrench((1, 1, 1), (2, 2, 2)), 2.0)
    np.testing.assert_array_equal(t, [0.5, 1, 1.5, 4, 5, 6])
    np.testing.assert_array_equal(w, [1, 1, 1, 1, 1, 1])
    with pytest.raises(ValueError):
        homogenize(np.zeros(5), np.zeros(6), 1.0)


def test_combined_score():
    assert combined_score(1, 1, 0.5, 0.5) == 1
    assert combined_score(0.8, 0.4, 0.5, 0.5) == pytest.approx(0.6)
    assert combined_score(0.3, 0.9, 1, 0) == 0.3
    with pytest.raises(BadWeights):
        combined_score(0.5, 0.5, 0.7, 0.7)
    with pytest.raises(BadWeights):
        combined_score(0.5, 0.5, -0.5, 1.5)


def test_evaluate_bundles_metrics(robot, rng):
    s = random_states(robot, rng, 1)[0]
    m = evaluate(s.weighted, TWIST, WRENCH, L)
    assert m.eta == pytest.approx(0.5 * m.eta1 + 0.5 * m.eta2)
    assert m.eta1 == dexterity(s.weighted)[0]
