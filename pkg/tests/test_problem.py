import threading

import numpy as np
import pytest
from scipy import sparse

from conftest import scalar_problem
from zominimax import (
    Dataset,
    PoisonSplit,
    Projector,
    SaddlePoint,
    evaluate,
    poisoning_problem,
    random_split,
    synthetic_dataset,
    wrap_phi_regularizer,
    wrap_strong_concavity,
)
from zominimax.bench_problems import poisoning_full_objective
from zominimax.geometry import stream
from zominimax.problem import NonFiniteOracleError, SzoCounter


def bilinear_problem():
    return scalar_problem(lambda X, Y: X[:, 0] * Y[:, 0], proj_y=Projector.box(-5, 5, dim=1))


def test_evaluate_bilinear_scalar():
    prob = bilinear_problem()
    assert evaluate(prob, SaddlePoint(np.array([2.0]), np.array([3.0])), 0) == 6.0
    assert prob.szo_calls == 1


def test_poisoning_zero_weights_give_unit_hinges():
    # one poisoned and one clean sample with a = 0, b = +1
    data = Dataset(sparse.csr_matrix(np.zeros((2, 3))), np.array([1, 1]))
    prob = poisoning_problem(data, PoisonSplit(np.array([0]), np.array([1]), 0.5))
    z = np.zeros(3)
    # each hinge is max(1 - 0, 0) = 1 and R(0) = 0
    assert prob.evaluate(z, z, 0) == 2.0


def test_finite_sum_mean_matches_full_objective():
    data = synthetic_dataset(40, 4, seed=1)
    prob = poisoning_problem(data, random_split(40, 0.15, 1))
    rng = stream(0, "test")
    x, y = rng.normal(size=4), prob.proj_y(rng.normal(size=4))
    handles = np.arange(prob.meta["n_handles"])
    vals = prob.evaluate_batch(np.tile(x, (handles.size, 1)), np.tile(y, (handles.size, 1)), handles)
    assert abs(vals.mean() - poisoning_full_objective(prob, x, y)) < 1e-12


def test_dimension_mismatch_is_an_error():
    prob = bilinear_problem()
    with pytest.raises(ValueError, match="dims"):
        evaluate(prob, SaddlePoint(np.zeros(2), np.zeros(1)), 0)
    with pytest.raises(ValueError, match="dimension mismatch"):
        prob.evaluate_batch(np.zeros((3, 1)), np.zeros((3, 1)), np.zeros(2))


def test_non_finite_value_names_the_point():
    prob = scalar_problem(lambda X, Y: np.where(X[:, 0] > 1, np.nan, 0.0))
    with pytest.raises(NonFiniteOracleError, match=r"x=\[2\.0\]"):
        prob.evaluate(np.array([2.0]), np.array([0.0]), 0)


def test_purity_bit_identical():
    data = synthetic_dataset(30, 3, seed=0)
    prob = poisoning_problem(data, random_split(30, 0.2, 0))
    x, y = np.array([0.1, -0.3, 0.2]), np.array([0.5, 1.0, -2.0])
    assert prob.evaluate(x, y, 7) == prob.evaluate(x, y, 7)


def test_saddle_point_rejects_non_finite():
    with pytest.raises(ValueError):
        SaddlePoint(np.array([np.inf]), np.array([0.0]))


def test_counter_is_thread_safe():
    c = SzoCounter()
    threads = [threading.Thread(target=lambda: [c.add(1) for _ in range(1000)]) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert c.count == 8000


# --- regularization wrappers


def concave_problem(D_y=2.0):
    # F = x * sum(y), merely concave (linear) in y; box of side D_y / sqrt(2) in 2-D
    half = D_y / (2 * np.sqrt(2))
    return scalar_problem(lambda X, Y: X[:, 0] * Y.sum(axis=1), d_y=2, proj_y=Projector.box(-half, half, dim=2), L=3.0, D_y=D_y)


def test_strong_concavity_wrapper_vanishes_at_center():
    base = concave_problem()
    y0 = np.array([0.1, -0.2])
    w = wrap_strong_concavity(base, 0.5, y0)
    assert w.evaluate([1.5], y0, 0) == base.evaluate([1.5], y0, 0)


def test_strong_concavity_wrapper_decrease():
    base = concave_problem(D_y=2.0)
    y0 = np.zeros(2)
    w = wrap_strong_concavity(base, 0.5, y0)
    y = np.array([0.6, 0.8])  # ||y - y0|| = 1
    assert base.evaluate([1.0], y, 0) - w.evaluate([1.0], y, 0) == pytest.approx(0.125, abs=1e-15)


def test_strong_concavity_wrapper_constants():
    base = concave_problem(D_y=2.0)
    w = wrap_strong_concavity(base, 0.1, np.zeros(2))
    assert (w.mu, w.L) == pytest.approx((0.05, 3.1))
    assert w.counter is base.counter and w.base is base


def test_phi_wrapper_constants():
    base = scalar_problem(lambda X, Y: X.sum(axis=1) * Y[:, 0], d_x=4, d_y=1, proj_y=Projector.box(-0.5, 0.5, dim=1), L=1.0, D_y=1.0)
    w = wrap_phi_regularizer(base, 0.1, 0.4, np.zeros(1))
    assert w.mu == pytest.approx(0.01)
    assert w.L == pytest.approx(1.01)
    x = np.ones(4)
    assert w.evaluate(x, [0.0], 0) == base.evaluate(x, [0.0], 0)


@pytest.mark.parametrize("wrap", [
    lambda p, y0: wrap_strong_concavity(p, 0.0, y0),
    lambda p, y0: wrap_strong_concavity(p, 0.1, np.array([5.0, 0.0])),
    lambda p, y0: wrap_phi_regularizer(p, 0.0, 0.1, y0),
    lambda p, y0: wrap_phi_regularizer(p, 0.1, -1.0, y0),
    lambda p, y0: wrap_phi_regularizer(p, 0.1, 0.1, np.array([0.0, 2.0])),
])
def test_wrapper_errors(wrap):
    with pytest.raises(ValueError):
        wrap(concave_problem(), np.zeros(2))


def test_wrapping_strongly_concave_problem_is_an_error(quad6):
    with pytest.raises(ValueError, match="already"):
        wrap_strong_concavity(quad6.problem, 0.1, np.zeros(3))


def test_wrapper_transparency_pointwise():
    data = synthetic_dataset(50, 5, seed=2)
    base = poisoning_problem(data, random_split(50, 0.15, 2))
    rng = stream(1, "transparency")
    y0 = base.proj_y(rng.normal(size=5))
    for w, coef in [
        (wrap_strong_concavity(base, 0.3, y0), 0.3 / (2 * base.D_y)),
        (wrap_phi_regularizer(base, 0.2, 0.3, y0), 0.2 * 0.3 / (2 * 5 * base.D_y**2)),
    ]:
        X = rng.normal(size=(100, 5))
        Y = base.proj_y(rng.normal(scale=2, size=(100, 5)))
        xi = base.noise(rng, 100)
        diff = base.evaluate_batch(X, Y, xi) - w.evaluate_batch(X, Y, xi)
        assert np.max(np.abs(diff - coef * np.sum((Y - y0) ** 2, axis=1))) < 1e-12


def test_threaded_evaluation_matches_serial(monkeypatch):
    data = synthetic_dataset(200, 8, seed=0)
    prob = poisoning_problem(data, random_split(200, 0.15, 0))
    rng = stream(0, "threads")
    X, Y = rng.normal(size=(1000, 8)), prob.proj_y(rng.normal(size=(1000, 8)))
    xi = prob.noise(rng, 1000)
    serial = prob.evaluate_batch(X, Y, xi)
    monkeypatch.setenv("ZOMINIMAX_THREADS", "4")
    assert np.array_equal(serial, prob.evaluate_batch(X, Y, xi))
    assert prob.szo_calls == 2000
