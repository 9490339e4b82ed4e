"""Projected gradient-free descent for nonsmooth strongly convex minimization over Y.

Used to initialize and polish the dual iterate of PGFDA and for the inner
maximizations of NL-PGFDA (maximization is minimization of ``-F``, see
:class:`SliceOracle`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .estimators import y_two_point_batch
from .geometry import Projector, sample_unit_sphere
from .problem import ProblemSpec

__all__ = [
    "InnerConfig",
    "SliceOracle",
    "pgfd",
    "pgfd_batch",
    "k_for_accuracy",
    "nu_for_accuracy",
    "gap_for_budget",
]

_C_INNER = 64.0 * math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class InnerConfig:
    mu: float
    nu: float
    K: int

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("inner solver needs mu > 0")
        if not self.nu > 0:
            raise ValueError("smoothing radius nu must be positive")
        if self.K < 2:
            raise ValueError("K must be at least 2 (the output average divides by K(K-1))")


class SliceOracle:
    """``H(y; xi) = sign * F(x_i, y; xi)`` with one fixed ``x_i`` per batch row.

    Called with ``m * B`` rows of ``y`` it repeats the ``B`` anchors ``m`` times,
    which is how the +/- perturbations of a batch are evaluated in one pass.
    """

    def __init__(self, problem: ProblemSpec, X, sign: float = -1.0):
        self.problem = problem
        self.X = np.atleast_2d(np.asarray(X, dtype=float))
        self.sign = float(sign)

    def noise(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.problem.noise(rng, n)

    def __call__(self, Y, xi):
        reps = Y.shape[0] // self.X.shape[0]
        return self.sign * self.problem.evaluate_batch(np.tile(self.X, (reps, 1)), Y, xi)


def _zero_noise(rng, n):
    return np.zeros(n, dtype=np.int64)


def pgfd_batch(
    H: Callable,
    Y0,
    cfg: InnerConfig,
    proj_y: Projector,
    rngs: Sequence[np.random.Generator],
    draw_noise: Callable | None = None,
) -> np.ndarray:
    """Run ``B`` independent solver instances in lockstep, one per row of ``Y0``.

    Instance ``i`` draws all of its ``K`` directions and noise handles from
    ``rngs[i]`` up front, so the result of each row is identical to a solo
    :func:`pgfd` run with the same generator.  Costs ``2 K B`` oracle calls.
    """
    Y = np.atleast_2d(np.array(Y0, dtype=float))
    B, dy = Y.shape
    if len(rngs) != B:
        raise ValueError("need one generator per instance")
    if not np.allclose(proj_y(Y), Y, atol=1e-9, rtol=0):
        raise ValueError("initial points must lie in Y")
    if draw_noise is None:
        draw_noise = getattr(H, "noise", _zero_noise)
    K, mu, nu = cfg.K, cfg.mu, cfg.nu

    W = np.empty((K, B, dy))
    XI = np.empty((K, B), dtype=np.int64)
    for i, rng in enumerate(rngs):
        W[:, i, :] = sample_unit_sphere(dy, rng, K)
        XI[:, i] = draw_noise(rng, K)

    acc = np.zeros_like(Y)
    for k in range(K):
        if k:
            acc += k * Y
        v = y_two_point_batch(H, Y, nu, W[k], XI[k])
        Y = proj_y(Y - (2.0 / (mu * (k + 1))) * v)
    return acc * (2.0 / (K * (K - 1)))


def pgfd(
    H: Callable,
    y0,
    cfg: InnerConfig,
    proj_y: Projector,
    rng: np.random.Generator,
    draw_noise: Callable | None = None,
) -> np.ndarray:
    """Minimize ``E[H(y; xi)]`` over ``Y`` with ``K`` two-point steps of size ``2/(mu(k+1))``.

    Returns the ``k``-weighted average of ``y_0, ..., y_{K-1}`` (``y_0`` has zero
    weight).  Exactly ``2K`` oracle calls.
    """
    return pgfd_batch(H, np.reshape(y0, (1, -1)), cfg, proj_y, [rng], draw_noise)[0]


def _positive(**kw):
    for k, v in kw.items():
        if not v > 0:
            raise ValueError(f"{k} must be positive, got {v}")


def k_for_accuracy(mu: float, L: float, d_y: int, eps: float) -> int:
    """Iterations guaranteeing expected suboptimality ``eps``: ``ceil(64 sqrt(2 pi) d_y L^2 / (mu eps))``, at least 2."""
    _positive(mu=mu, L=L, d_y=d_y, eps=eps)
    return max(2, math.ceil(_C_INNER * d_y * L**2 / (mu * eps)))


def nu_for_accuracy(L: float, eps: float) -> float:
    _positive(L=L, eps=eps)
    return eps / (4.0 * L)


def gap_for_budget(mu: float, L: float, d_y: int, K: int) -> float:
    """Suboptimality guaranteed by a budget of ``K`` iterations (inverse of :func:`k_for_accuracy`)."""
    _positive(mu=mu, L=L, d_y=d_y)
    if K < 2:
        raise ValueError("budget must be at least 2")
    return _C_INNER * d_y * L**2 / (mu * K)
