"""Independent Monte-Carlo, closed-form and finite-difference checkers.

These deliberately avoid the estimator code paths: smoothed values are
sampled directly from the ball, quadratic gradients come from the Hessian.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .geometry import sample_unit_ball
from .problem import ProblemSpec, SaddlePoint

__all__ = [
    "McEstimate",
    "smoothed_samples",
    "mc_f_delta",
    "exact_grad_f_delta_quadratic",
    "finite_diff_grad",
    "variance_probe",
]


@dataclass(frozen=True)
class McEstimate:
    mean: float | np.ndarray
    stderr: float | np.ndarray
    samples: int

    def __post_init__(self):
        if self.samples < 2:
            raise ValueError("a Monte-Carlo estimate needs at least 2 samples")

    @classmethod
    def from_samples(cls, vals) -> "McEstimate":
        vals = np.asarray(vals, dtype=float)
        n = vals.shape[0]
        if n < 2:
            raise ValueError("a Monte-Carlo estimate needs at least 2 samples")
        mean = vals.mean(axis=0)
        se = vals.std(axis=0, ddof=1) / np.sqrt(n)
        if np.ndim(mean) == 0:
            return cls(float(mean), float(se), n)
        return cls(mean, se, n)

    def within(self, value, k: float = 3.0, slack: float = 0.0) -> bool:
        return bool(np.all(np.abs(np.asarray(self.mean) - value) <= k * np.asarray(self.stderr) + slack))


def smoothed_samples(problem: ProblemSpec, p: SaddlePoint, delta: float, N: int, rng: np.random.Generator) -> np.ndarray:
    """``N`` samples ``F(z + delta q; xi)`` with ``q ~ Unif(B^d)`` and fresh ``xi``."""
    Q = sample_unit_ball(problem.d, rng, N)
    xi = problem.noise(rng, N)
    dx = problem.d_x
    return problem.evaluate_batch(p.x + delta * Q[:, :dx], p.y + delta * Q[:, dx:], xi)


def mc_f_delta(problem: ProblemSpec, p: SaddlePoint, delta: float, N: int, rng: np.random.Generator) -> McEstimate:
    """Direct Monte-Carlo estimate of the ball-smoothed objective ``f_delta(x, y)``."""
    if N < 2:
        raise ValueError("N must be at least 2")
    problem.check_point(p)
    return McEstimate.from_samples(smoothed_samples(problem, p, delta, N, rng))


def exact_grad_f_delta_quadratic(problem: ProblemSpec, p: SaddlePoint, delta: float) -> np.ndarray:
    """Smoothed gradient of a quadratic problem; smoothing only shifts the value, so this is ``grad f``."""
    toy = problem.root().meta.get("quadratic")
    if toy is None:
        raise ValueError("problem has no quadratic closed form")
    g = toy.grad(p.x, p.y)
    layer = problem
    while layer.base is not None:
        # each wrapper subtracts coef * ||y - y0||^2
        g[layer.d_x :] -= 2.0 * layer.reg_coef * (p.y - layer.reg_center)
        layer = layer.base
    return g


def finite_diff_grad(g: Callable[[np.ndarray], float], z, h: float = 1e-5) -> np.ndarray:
    """Central differences; exact up to rounding on quadratics, O(h^2) otherwise."""
    if not h > 0:
        raise ValueError("h must be positive")
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    for i in range(z.size):
        e = np.zeros_like(z)
        e[i] = h
        out[i] = (g(z + e) - g(z - e)) / (2.0 * h)
    return out


def variance_probe(estimator: Callable[[int], np.ndarray], reference, N: int) -> McEstimate:
    """Empirical ``E||g - reference||^2`` over ``N`` draws.

    ``estimator(n)`` must return an ``(n, dim)`` array of independent estimates.
    """
    if N < 2:
        raise ValueError("N must be at least 2")
    G = np.asarray(estimator(N), dtype=float)
    return McEstimate.from_samples(np.sum((G - np.asarray(reference)) ** 2, axis=1))
