import numpy as np
import pytest

from conftest import scalar_problem
from zominimax import (
    Projector,
    SaddlePoint,
    joint_two_point,
    minibatch_joint,
    phi_two_point,
    quadratic_saddle,
    vr_update,
    y_two_point,
)
from zominimax.estimators import (
    GradEstimate,
    draw_samples,
    joint_estimates,
    minibatch_from_samples,
    phi_estimates,
    y_two_point_batch,
)
from zominimax.geometry import sample_unit_sphere, stream
from zominimax.problem import NonFiniteOracleError
from zominimax.reference_oracles import McEstimate, exact_grad_f_delta_quadratic, variance_probe
from zominimax.validation import check_unbiasedness, variance_ratio

VAR_CONST = 16 * np.sqrt(2 * np.pi)


def linear_problem(c, d_x):
    c = np.asarray(c, dtype=float)
    return scalar_problem(
        lambda X, Y: np.concatenate([X, Y], axis=1) @ c,
        d_x=d_x,
        d_y=c.size - d_x,
        proj_y=Projector.box(-1, 1, dim=c.size - d_x) if c.size > d_x else Projector.unconstrained(0),
        L=float(np.linalg.norm(c)),
    )


def test_constant_function_gives_zero(quad6):
    prob = scalar_problem(lambda X, Y: np.full(X.shape[0], 3.0), d_x=2, d_y=2)
    w = sample_unit_sphere(4, stream(0))
    est = joint_two_point(prob, SaddlePoint(np.zeros(2), np.zeros(2)), 0.1, w, 0)
    assert np.all(est.g == 0)
    assert prob.szo_calls == 2


def test_scalar_linear_exact():
    prob = linear_problem([2.5], d_x=1)
    est = joint_two_point(prob, SaddlePoint(np.array([0.3]), np.zeros(0)), 0.1, [1.0], 0)
    assert est.g_x[0] == pytest.approx(2.5, rel=1e-14)
    assert est.g_y.shape == (0,)


def test_joint_rejects_bad_input(quad6):
    p = SaddlePoint(np.zeros(3), np.zeros(3))
    with pytest.raises(ValueError):
        joint_two_point(quad6.problem, p, 0.1, np.ones(6), 0)
    with pytest.raises(ValueError):
        joint_two_point(quad6.problem, p, 0.0, np.eye(6)[0], 0)
    bad = scalar_problem(lambda X, Y: np.full(X.shape[0], np.inf))
    with pytest.raises(NonFiniteOracleError):
        joint_two_point(bad, SaddlePoint(np.zeros(1), np.zeros(1)), 0.1, [0.6, 0.8], 0)


def test_joint_unbiased_on_quadratic(quad6):
    prob = quad6.problem
    p = SaddlePoint(np.array([0.3, -0.2, 0.1]), np.array([0.2, 0.1, -0.3]))
    G = joint_estimates(prob, p.x, p.y, 0.3, draw_samples(prob, 1_000_000, stream(0, "unb")))
    est = McEstimate.from_samples(G)
    exact = exact_grad_f_delta_quadratic(prob, p, 0.3)
    assert np.allclose(exact, quad6.grad(p.x, p.y))
    assert est.within(exact, k=3.0)


def test_mutated_estimator_fails_unbiasedness():
    def wrong_d(problem, x, y, delta, S):
        return joint_estimates(problem, x, y, delta, S) * (problem.d - 1) / problem.d

    assert check_unbiasedness(n=200_000).passed
    assert not check_unbiasedness(estimator=wrong_d, n=200_000).passed


def test_minibatch_b1_is_joint_bitwise(quad6):
    prob = quad6.problem
    p = SaddlePoint(np.array([0.1, 0.2, 0.3]), np.array([-0.1, 0.0, 0.1]))
    est = minibatch_joint(prob, p, 0.2, 1, stream(4, "mb"))
    S = draw_samples(prob, 1, stream(4, "mb"))
    ref = joint_two_point(prob, p, 0.2, S.W[0], S.xi[0])
    assert np.array_equal(est.g, ref.g)
    assert est.batch_size == 1


def test_minibatch_cost_and_errors(quad6):
    prob = quad6.problem
    p = SaddlePoint(np.zeros(3), np.zeros(3))
    before = prob.szo_calls
    minibatch_joint(prob, p, 0.2, 7, stream(0))
    assert prob.szo_calls - before == 14
    with pytest.raises(ValueError):
        minibatch_joint(prob, p, 0.2, 0, stream(0))


def test_variance_ratio_b1_vs_b16():
    v1, _ = variance_ratio(1, reps=10_000, seed=1)
    v16, _ = variance_ratio(16, reps=10_000, seed=1)
    assert 10 <= v1.mean / v16.mean <= 22


@pytest.mark.parametrize("b", [1, 4])
def test_variance_below_bound(b):
    est, bound = variance_ratio(b, reps=100_000, seed=2)
    assert est.mean <= 1.1 * bound


def test_variance_probe_deterministic_is_zero():
    est = variance_probe(lambda n: np.ones((n, 3)), np.ones(3), 10)
    assert est.mean == 0.0 and est.stderr == 0.0


def test_vr_same_point_returns_previous_bitwise(quad6):
    prob = quad6.problem
    p = SaddlePoint(np.array([0.1, 0.2, 0.3]), np.array([-0.1, 0.0, 0.1]))
    g0 = minibatch_joint(prob, p, 0.2, 5, stream(0))
    before = prob.szo_calls
    g1 = vr_update(g0, prob, p, p, 0.2, 3, stream(1))
    assert np.array_equal(g1.g, g0.g)
    assert prob.szo_calls - before == 12


def test_vr_linear_is_exact_for_any_b():
    c = np.array([1.0, -2.0, 0.5, 3.0])
    prob = linear_problem(c, d_x=2)
    p0 = SaddlePoint(np.zeros(2), np.zeros(2))
    p1 = SaddlePoint(np.array([0.3, -0.1]), np.array([0.2, 0.4]))
    g0 = minibatch_joint(prob, p0, 0.1, 1, stream(0))
    # linear F: the estimates at both points coincide, so the update cancels
    g1 = vr_update(g0, prob, p1, p0, 0.1, 2, stream(1))
    assert np.allclose(g1.g, g0.g, atol=1e-12)
    # starting from the exact gradient the output stays exact
    exact = GradEstimate(c[:2], c[2:], 1, 0.1)
    for b in (1, 5):
        assert np.allclose(vr_update(exact, prob, p1, p0, 0.1, b, stream(b)).g, c, atol=1e-12)


def test_vr_is_pure_function_of_stream(quad6):
    prob = quad6.problem
    p0 = SaddlePoint(np.zeros(3), np.zeros(3))
    p1 = SaddlePoint(np.full(3, 0.1), np.full(3, -0.1))
    g0 = minibatch_joint(prob, p0, 0.2, 4, stream(0))
    a = vr_update(g0, prob, p1, p0, 0.2, 4, stream(9, "vr"))
    b = vr_update(g0, prob, p1, p0, 0.2, 4, stream(9, "vr"))
    assert np.array_equal(a.g, b.g)


def test_vr_errors(quad6):
    prob = quad6.problem
    p = SaddlePoint(np.zeros(3), np.zeros(3))
    g0 = minibatch_joint(prob, p, 0.2, 2, stream(0))
    with pytest.raises(ValueError, match="smoothing radius"):
        vr_update(g0, prob, p, p, 0.3, 2, stream(0))
    other = quadratic_saddle(2, 2, 1.0, x_box=(-1, 1), seed=0).problem
    with pytest.raises(ValueError):
        vr_update(g0, other, SaddlePoint(np.zeros(2), np.zeros(2)), SaddlePoint(np.zeros(2), np.zeros(2)), 0.2, 2, stream(0))


def test_vr_recursion_bound_monte_carlo():
    # one PAGE-style step: refresh with prob p (batch b_tilde), else the recursive update
    toy = quadratic_saddle(2, 2, 1.0, a=[0.1, -0.1], sigma=0.2, seed=5)
    prob = toy.problem
    delta, b, b_tilde, p = 0.3, 4, 64, 0.5
    z0 = SaddlePoint(np.array([0.1, 0.2]), np.array([-0.2, 0.1]))
    z1 = SaddlePoint(np.array([0.25, 0.1]), np.array([-0.1, 0.15]))
    g_true0 = exact_grad_f_delta_quadratic(prob, z0, delta)
    g_true1 = exact_grad_f_delta_quadratic(prob, z1, delta)
    rng = stream(0, "vr-mc")
    trials = 1000
    err_prev, err_next = np.empty(trials), np.empty(trials)
    for i in range(trials):
        g_prev = minibatch_joint(prob, z0, delta, 8, rng)
        err_prev[i] = np.sum((g_prev.g - g_true0) ** 2)
        if rng.random() < p:
            g = minibatch_joint(prob, z1, delta, b_tilde, rng)
        else:
            g = vr_update(g_prev, prob, z1, z0, delta, b, rng)
        err_next[i] = np.sum((g.g - g_true1) ** 2)
    dz = np.sum((z1.x - z0.x) ** 2) + np.sum((z1.y - z0.y) ** 2)
    rhs = (1 - p) * err_prev.mean() + prob.d**2 * prob.L**2 / (b * delta**2) * dz
    tol = p * VAR_CONST * prob.d * prob.L**2 / b_tilde + 3 * err_next.std(ddof=1) / np.sqrt(trials)
    assert err_next.mean() <= rhs + tol


def test_mean_squared_difference_bound():
    toy = quadratic_saddle(3, 2, 1.0, sigma=0.1, seed=2)
    prob = toy.problem
    delta = 0.2
    z1 = SaddlePoint(np.array([0.1, -0.3, 0.2]), np.array([0.4, -0.1]))
    z2 = SaddlePoint(np.array([0.15, -0.25, 0.1]), np.array([0.3, 0.0]))
    S = draw_samples(prob, 200_000, stream(0, "msd"))
    diff = joint_estimates(prob, z1.x, z1.y, delta, S) - joint_estimates(prob, z2.x, z2.y, delta, S)
    dz = np.sum((z1.x - z2.x) ** 2) + np.sum((z1.y - z2.y) ** 2)
    assert np.mean(np.sum(diff**2, axis=1)) <= 1.2 * prob.d**2 * prob.L**2 / delta**2 * dz


# --- y-only estimator


def test_y_two_point_trivial_cases():
    H_const = lambda Y, xi: np.full(Y.shape[0], 4.0)
    assert np.all(y_two_point(H_const, [0.1, 0.2], 0.1, [0.6, 0.8], 0) == 0)
    H_lin = lambda Y, xi: 1.7 * Y[:, 0]
    assert y_two_point(H_lin, [0.3], 0.05, [-1.0], 0)[0] == pytest.approx(1.7, rel=1e-14)
    with pytest.raises(ValueError):
        y_two_point(H_lin, [0.3], 0.0, [1.0], 0)
    with pytest.raises(FloatingPointError):
        y_two_point(lambda Y, xi: np.full(Y.shape[0], np.nan), [0.3], 0.1, [1.0], 0)


def test_y_two_point_unbiased_on_quadratic():
    c = np.array([0.5, -1.0, 0.25])
    H = lambda Y, xi: Y @ c - 0.75 * np.sum(Y * Y, axis=1)
    y = np.array([0.1, 0.2, -0.3])
    n = 1_000_000
    rng = stream(0, "y-unb")
    W = sample_unit_sphere(3, rng, n)
    V = y_two_point_batch(H, np.tile(y, (n, 1)), 0.1, W, np.zeros(n, dtype=np.int64))
    # smoothing shifts a quadratic by a constant, so grad h_nu = grad h
    assert McEstimate.from_samples(V).within(c - 1.5 * y, k=3.0)


# --- primal-function estimator


def test_phi_two_point_trivial_cases():
    prob = scalar_problem(lambda X, Y: Y[:, 0] ** 2, d_x=2, d_y=1)
    assert np.all(phi_two_point(prob, np.zeros(2), 0.1, [0.6, 0.8], 0, [0.3], [0.3]) == 0)
    # F = c.x + 0 * y: Phi linear, two-point difference exact along w
    c = np.array([2.0, -1.0])
    lin = scalar_problem(lambda X, Y: X @ c, d_x=2, d_y=1)
    w = np.array([0.6, 0.8])
    g = phi_two_point(lin, np.array([0.1, 0.1]), 0.2, w, 0, [0.0], [0.0])
    assert np.allclose(g, 2 * (c @ w) * w)
    assert lin.szo_calls == 2


def test_phi_estimator_unbiased_with_exact_maximizers():
    toy = quadratic_saddle(3, 2, 1.0, a=[0.1, 0.0, -0.1], seed=1)
    prob = toy.problem
    x = np.array([0.05, -0.1, 0.08])
    delta, n = 0.1, 1_000_000
    rng = stream(0, "phi-unb")
    W = sample_unit_sphere(3, rng, n)
    Yp = (x + delta * W) @ toy.C / toy.mu
    Ym = (x - delta * W) @ toy.C / toy.mu
    # all maximizers interior, so Phi is quadratic on the smoothing ball
    assert np.max(np.abs(np.concatenate([Yp, Ym]))) < 1
    G = phi_estimates(prob, x, delta, W, np.zeros(n, dtype=np.int64), Yp, Ym)
    assert McEstimate.from_samples(G).within(toy.grad_phi(x), k=3.0)


def test_minibatch_from_samples_average(quad6):
    prob = quad6.problem
    p = SaddlePoint(np.zeros(3), np.full(3, 0.1))
    S = draw_samples(prob, 6, stream(3))
    per = joint_estimates(prob, p.x, p.y, 0.2, S)
    assert np.allclose(minibatch_from_samples(prob, p, 0.2, S).g, per.mean(axis=0))
