"""Two-point zeroth-order gradient estimators.

All estimators take their randomness either explicitly (directions and noise
handles) or from a caller-supplied generator, and evaluate the oracle through
one batched call so a whole mini-batch costs a single vectorized pass.
Perturbed query points are deliberately not projected back onto X x Y.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .geometry import sample_unit_sphere
from .problem import ProblemSpec, SaddlePoint

__all__ = [
    "GradEstimate",
    "SampleSet",
    "draw_samples",
    "joint_estimates",
    "joint_two_point",
    "minibatch_joint",
    "minibatch_from_samples",
    "vr_update",
    "y_two_point",
    "y_two_point_batch",
    "phi_two_point",
    "phi_estimates",
]


@dataclass(frozen=True)
class GradEstimate:
    g_x: np.ndarray
    g_y: np.ndarray
    batch_size: int
    delta: float

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if not (np.all(np.isfinite(self.g_x)) and np.all(np.isfinite(self.g_y))):
            raise FloatingPointError("gradient estimate has non-finite entries")

    @property
    def g(self) -> np.ndarray:
        return np.concatenate([self.g_x, self.g_y])


@dataclass(frozen=True)
class SampleSet:
    """Stored ``(w_i, xi_i)`` pairs so the same randomness can be replayed at two points."""

    W: np.ndarray  # (b, d) unit directions
    xi: np.ndarray  # (b,) noise handles

    @property
    def size(self) -> int:
        return self.W.shape[0]


def draw_samples(problem: ProblemSpec, b: int, rng: np.random.Generator, dim: int | None = None) -> SampleSet:
    """Draw ``b`` directions on S^{dim-1} (default ``dim = d``) and ``b`` noise handles."""
    if b < 1:
        raise ValueError(f"batch size must be >= 1, got {b}")
    W = sample_unit_sphere(problem.d if dim is None else dim, rng, b)
    xi = problem.noise(rng, b)
    return SampleSet(W, xi)


def _check_unit(W: np.ndarray):
    if not np.allclose(np.linalg.norm(W, axis=1), 1.0, atol=1e-9):
        raise ValueError("directions must have unit norm")


def joint_estimates(problem: ProblemSpec, x, y, delta: float, S: SampleSet) -> np.ndarray:
    """Per-sample joint estimates ``d (F(z+dw) - F(z-dw)) / (2 delta) * w``, shape ``(b, d)``.

    Costs exactly ``2b`` oracle calls.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    b, dx = S.size, problem.d_x
    Wx, Wy = S.W[:, :dx], S.W[:, dx:]
    X = np.concatenate([x + delta * Wx, x - delta * Wx])
    Y = np.concatenate([y + delta * Wy, y - delta * Wy])
    vals = problem.evaluate_batch(X, Y, np.concatenate([S.xi, S.xi]))
    s = problem.d * (vals[:b] - vals[b:]) / (2.0 * delta)
    return s[:, None] * S.W


def _as_estimate(problem: ProblemSpec, g: np.ndarray, b: int, delta: float) -> GradEstimate:
    return GradEstimate(g[: problem.d_x].copy(), g[problem.d_x :].copy(), b, delta)


def joint_two_point(problem: ProblemSpec, p: SaddlePoint, delta: float, w, xi) -> GradEstimate:
    """Single two-point estimate of the smoothed gradient along unit direction ``w`` in R^d."""
    problem.check_point(p)
    W = np.asarray(w, dtype=float).reshape(1, problem.d)
    _check_unit(W)
    S = SampleSet(W, np.asarray([xi], dtype=np.int64))
    return _as_estimate(problem, joint_estimates(problem, p.x, p.y, delta, S)[0], 1, delta)


def minibatch_from_samples(problem: ProblemSpec, p: SaddlePoint, delta: float, S: SampleSet) -> GradEstimate:
    est = joint_estimates(problem, p.x, p.y, delta, S)
    return _as_estimate(problem, est.mean(axis=0), S.size, delta)


def minibatch_joint(problem: ProblemSpec, p: SaddlePoint, delta: float, b: int, rng: np.random.Generator) -> GradEstimate:
    """Average of ``b`` independent joint estimates (``2b`` oracle calls)."""
    problem.check_point(p)
    return minibatch_from_samples(problem, p, delta, draw_samples(problem, b, rng))


def vr_update(
    g_prev: GradEstimate,
    problem: ProblemSpec,
    p_t: SaddlePoint,
    p_prev: SaddlePoint,
    delta: float,
    b: int,
    rng: np.random.Generator,
) -> GradEstimate:
    """Recursive variance-reduced update ``g_prev + g(p_t; S) - g(p_prev; S)``.

    Both estimates reuse the identical sample set ``S`` (``4b`` oracle calls).
    """
    if g_prev.delta != delta:
        raise ValueError(f"smoothing radius {delta} differs from previous estimate's {g_prev.delta}")
    if g_prev.g_x.shape != (problem.d_x,) or g_prev.g_y.shape != (problem.d_y,):
        raise ValueError("previous estimate has the wrong dimensions")
    problem.check_point(p_t)
    problem.check_point(p_prev)
    S = draw_samples(problem, b, rng)
    diff = (joint_estimates(problem, p_t.x, p_t.y, delta, S) - joint_estimates(problem, p_prev.x, p_prev.y, delta, S)).mean(axis=0)
    return _as_estimate(problem, g_prev.g + diff, b, delta)


YOracle = Callable[[np.ndarray, np.ndarray], np.ndarray]


def y_two_point_batch(H: YOracle, Y: np.ndarray, nu: float, W: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """Row-wise ``(d_y / 2nu) (H(y+nu w) - H(y-nu w)) w`` for a batch of points (``2B`` calls)."""
    if not nu > 0:
        raise ValueError("nu must be positive")
    B, dy = Y.shape
    vals = np.asarray(H(np.concatenate([Y + nu * W, Y - nu * W]), np.concatenate([xi, xi])), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise FloatingPointError("inner oracle returned non-finite values")
    s = dy * (vals[:B] - vals[B:]) / (2.0 * nu)
    return s[:, None] * W


def y_two_point(H: YOracle, y, nu: float, w, xi) -> np.ndarray:
    y = np.asarray(y, dtype=float).reshape(1, -1)
    W = np.asarray(w, dtype=float).reshape(1, -1)
    _check_unit(W)
    return y_two_point_batch(H, y, nu, W, np.asarray([xi], dtype=np.int64))[0]


def phi_estimates(problem: ProblemSpec, x, delta: float, W: np.ndarray, xi: np.ndarray, Y_plus: np.ndarray, Y_minus: np.ndarray) -> np.ndarray:
    """Per-direction primal-function estimates, shape ``(b, d_x)`` (``2b`` calls).

    Row i is ``(d_x / 2delta) (F(x+delta w_i, y+_i) - F(x-delta w_i, y-_i)) w_i``.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    b = W.shape[0]
    X = np.concatenate([x + delta * W, x - delta * W])
    vals = problem.evaluate_batch(X, np.concatenate([Y_plus, Y_minus]), np.concatenate([xi, xi]))
    s = problem.d_x * (vals[:b] - vals[b:]) / (2.0 * delta)
    return s[:, None] * W


def phi_two_point(problem: ProblemSpec, x, delta: float, w, xi, y_plus, y_minus) -> np.ndarray:
    W = np.asarray(w, dtype=float).reshape(1, problem.d_x)
    _check_unit(W)
    return phi_estimates(
        problem,
        np.asarray(x, dtype=float),
        delta,
        W,
        np.asarray([xi], dtype=np.int64),
        np.asarray(y_plus, dtype=float).reshape(1, -1),
        np.asarray(y_minus, dtype=float).reshape(1, -1),
    )[0]
