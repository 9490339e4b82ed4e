"""Gradient mappings and Monte-Carlo residuals for Goldstein-type stationarity.

The residuals use the smoothed gradient as the witness element of the
Goldstein subdifferential, so they bound the definitional (minimum-norm)
residual from above but are not equal to it.  Standard errors come from a
multinomial bootstrap over the Monte-Carlo samples.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .estimators import draw_samples, joint_estimates, phi_estimates
from .geometry import Projector, sample_unit_sphere
from .inner_solver import InnerConfig, SliceOracle, pgfd, pgfd_batch
from .problem import ProblemSpec, SaddlePoint

__all__ = [
    "ResidualReport",
    "mapping_x",
    "mapping_y",
    "mapping_primal",
    "estimate_gssp_residual",
    "estimate_ggsp_residual",
]

N_BOOTSTRAP = 200
# directions solved together in the GGSP inner loop
_GGSP_CHUNK = 1024


@dataclass(frozen=True)
class ResidualReport:
    r_x: float
    r_y: float | None
    stderr_x: float
    stderr_y: float | None
    batch: int
    delta: float
    eta_x: float
    eta_y: float | None = None
    # extra slack to add when transferring the residual to an unregularized problem
    transfer_slack: float = 0.0
    szo_calls: int = 0


def _check_eta(eta):
    if not eta > 0:
        raise ValueError(f"step size must be positive, got {eta}")


def mapping_primal(x, g, eta: float, proj_x: Projector) -> np.ndarray:
    """``(x - Proj(x - eta g)) / eta``; equals ``g`` when the set is the whole space."""
    _check_eta(eta)
    x = np.asarray(x, dtype=float)
    g = np.asarray(g, dtype=float)
    if proj_x.kind == "unconstrained":
        return g.copy()
    return (x - proj_x(x - eta * g)) / eta


def mapping_x(x, y, g_x, eta_x: float, proj_x: Projector) -> np.ndarray:
    return mapping_primal(x, g_x, eta_x, proj_x)


def mapping_y(x, y, g_y, eta_y: float, proj_y: Projector) -> np.ndarray:
    """Ascent-oriented mapping ``(Proj(y + eta g) - y) / eta``."""
    _check_eta(eta_y)
    y = np.asarray(y, dtype=float)
    g_y = np.asarray(g_y, dtype=float)
    if proj_y.kind == "unconstrained":
        return g_y.copy()
    return (proj_y(y + eta_y * g_y) - y) / eta_y


def _bootstrap_means(samples: np.ndarray, rng: np.random.Generator, reps: int = N_BOOTSTRAP) -> np.ndarray:
    n = samples.shape[0]
    counts = rng.multinomial(n, np.full(n, 1.0 / n), size=reps)
    return counts @ samples / n


def _std(vals) -> float:
    return float(np.std(vals, ddof=1))


def estimate_gssp_residual(
    problem: ProblemSpec,
    p: SaddlePoint,
    delta: float,
    eta_x: float,
    eta_y: float,
    N: int,
    rng: np.random.Generator,
) -> ResidualReport:
    """Estimate ``||G_x||`` and ``||G_y||`` at ``p`` from ``N`` joint two-point samples (``2N`` calls).

    With ``N == 1`` no sample-based standard error exists and ``inf`` is reported.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    _check_eta(eta_x)
    _check_eta(eta_y)
    problem.check_point(p)
    start = problem.szo_calls
    est = joint_estimates(problem, p.x, p.y, delta, draw_samples(problem, N, rng))
    dx = problem.d_x

    def residuals(g):
        gx = mapping_x(p.x, p.y, g[:dx], eta_x, problem.proj_x)
        gy = mapping_y(p.x, p.y, g[dx:], eta_y, problem.proj_y)
        return np.linalg.norm(gx), np.linalg.norm(gy)

    r_x, r_y = residuals(est.mean(axis=0))
    if N == 1:
        se_x = se_y = float("inf")
    else:
        boot = np.array([residuals(m) for m in _bootstrap_means(est, rng)])
        se_x, se_y = _std(boot[:, 0]), _std(boot[:, 1])
    return ResidualReport(
        float(r_x), float(r_y), se_x, se_y, N, delta, eta_x, eta_y, szo_calls=problem.szo_calls - start
    )


def estimate_ggsp_residual(
    problem: ProblemSpec,
    x,
    delta: float,
    eta: float,
    inner_budget: int,
    N: int,
    rng: np.random.Generator,
    inner_nu: float | None = None,
    y_init=None,
) -> ResidualReport:
    """Estimate ``||G(x, grad Phi_delta(x), eta)||`` for the primal function.

    One inner solve at ``x`` gives a warm start shared by all ``2N`` perturbed
    inner solves (``x +/- delta w_i``); each of those has its own generator.
    Cost: ``2K + 4KN + 2N`` oracle calls with ``K = inner_budget``.
    """
    if problem.mu <= 0:
        raise ValueError(
            "primal residual needs a strongly concave problem (mu > 0); "
            "wrap the problem with wrap_phi_regularizer first"
        )
    if N < 1:
        raise ValueError("N must be at least 1")
    _check_eta(eta)
    x = np.asarray(x, dtype=float)
    start = problem.szo_calls
    cfg = InnerConfig(problem.mu, delta if inner_nu is None else inner_nu, inner_budget)
    if y_init is None:
        y_init = problem.proj_y(np.zeros(problem.d_y))
    y_anchor = pgfd(SliceOracle(problem, x), y_init, cfg, problem.proj_y, rng)

    W = sample_unit_sphere(problem.d_x, rng, N)
    xi = problem.noise(rng, N)
    children = rng.spawn(2 * N)
    est = np.empty((N, problem.d_x))
    for a in range(0, N, _GGSP_CHUNK):
        b = min(N, a + _GGSP_CHUNK)
        Xs = np.concatenate([x + delta * W[a:b], x - delta * W[a:b]])
        Y0 = np.tile(y_anchor, (Xs.shape[0], 1))
        ys = pgfd_batch(
            SliceOracle(problem, Xs), Y0, cfg, problem.proj_y, children[2 * a : 2 * b]
        )
        m = b - a
        est[a:b] = phi_estimates(problem, x, delta, W[a:b], xi[a:b], ys[:m], ys[m:])

    r = float(np.linalg.norm(mapping_primal(x, est.mean(axis=0), eta, problem.proj_x)))
    if N == 1:
        se = float("inf")
    else:
        boot = [np.linalg.norm(mapping_primal(x, m, eta, problem.proj_x)) for m in _bootstrap_means(est, rng)]
        se = _std(boot)
    return ResidualReport(r, None, se, None, N, delta, eta, szo_calls=problem.szo_calls - start)
