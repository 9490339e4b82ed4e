"""PGFDA and NL-PGFDA solvers, their concave-case drivers, and parameter recipes.

PGFDA runs variance-reduced two-point descent ascent on the smoothed objective:
with probability ``p`` (and always at ``t = 0``) the estimate is refreshed
with a batch of ``b_tilde`` samples, otherwise it is corrected with ``b``
shared samples evaluated at the current and previous iterate.  NL-PGFDA
descends on the primal function, approximating each inner maximizer with the
gradient-free inner solver, warm-started from the previous iteration.

All randomness comes from substreams of the config seed tagged by purpose and
iteration, so runs are reproducible and independent of evaluation threads.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import asdict, dataclass, field, replace
from typing import Callable

import numpy as np

from .estimators import GradEstimate, minibatch_joint, phi_estimates, vr_update
from .geometry import sample_unit_sphere, stream
from .inner_solver import InnerConfig, SliceOracle, pgfd, pgfd_batch
from .problem import ProblemSpec, SaddlePoint, wrap_phi_regularizer, wrap_strong_concavity
from .stationarity import (
    ResidualReport,
    estimate_ggsp_residual,
    estimate_gssp_residual,
    mapping_primal,
    mapping_x,
    mapping_y,
)

__all__ = [
    "PgfdaConfig",
    "NlPgfdaConfig",
    "IterRecord",
    "RunTrace",
    "SolverDivergence",
    "pgfda",
    "nl_pgfda",
    "pgfda_concave",
    "nl_pgfda_concave",
    "pgfda_szo_count",
    "nl_pgfda_szo_count",
    "recipe_ncsc_gssp",
    "recipe_ncsc_gssp_raw",
    "recipe_ncsc_ggsp",
    "recipe_ncsc_ggsp_raw",
    "gssp_complexity",
    "ggsp_complexity",
]


@dataclass(frozen=True)
class PgfdaConfig:
    eta_x: float
    eta_y: float
    eta_y_tilde: float
    T: int
    K_in: int
    K_out: int
    delta: float
    p: float
    b: int
    b_tilde: int
    seed: int = 0
    # constant of the smoothness modulus c sqrt(d) L / delta, used only for the p*b advice
    smooth_const: float = 1.0

    def __post_init__(self):
        for name in ("eta_x", "eta_y", "eta_y_tilde", "delta"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.T < 1:
            raise ValueError("T must be at least 1")
        if self.K_in < 2 or self.K_out < 2:
            raise ValueError("K_in and K_out must be at least 2")
        if not 0 < self.p <= 1:
            raise ValueError("p must lie in (0, 1]")
        if self.b < 1 or self.b_tilde < 1:
            raise ValueError("batch sizes must be at least 1")

    def check_against(self, problem: ProblemSpec):
        if self.p * self.b < problem.d / self.smooth_const**2:
            warnings.warn(
                f"p*b = {self.p * self.b:g} is below d/c^2 = {problem.d / self.smooth_const**2:g}; "
                "the variance-reduced estimate may drift",
                stacklevel=3,
            )


@dataclass(frozen=True)
class NlPgfdaConfig:
    eta: float
    T: int
    b: int
    K: int
    delta: float
    delta_tilde: float
    seed: int = 0

    def __post_init__(self):
        for name in ("eta", "delta", "delta_tilde"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.T < 1 or self.b < 1:
            raise ValueError("T and b must be at least 1")
        if self.K < 2:
            raise ValueError("K must be at least 2")


@dataclass
class IterRecord:
    t: int
    szo_calls: int
    u_norm: float
    refresh: bool
    wall_ms: float
    gx_residual: float | None = None
    gy_residual: float | None = None
    phi_estimate: float | None = None
    phi_gap_bound: float | None = None


@dataclass
class RunTrace:
    algorithm: str
    records: list[IterRecord] = field(default_factory=list)
    j: int | None = None
    x_out: np.ndarray | None = None
    y_out: np.ndarray | None = None
    total_szo: int = 0
    certificate: ResidualReport | None = None
    info: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.records)


class SolverDivergence(FloatingPointError):
    def __init__(self, msg: str, trace: RunTrace):
        super().__init__(msg)
        self.trace = trace


IterCallback = Callable[[IterRecord, np.ndarray, np.ndarray | None], None]


def _default_y(problem: ProblemSpec, y):
    y = np.zeros(problem.d_y) if y is None else np.asarray(y, dtype=float)
    return problem.proj_y(y)


def _default_x(problem: ProblemSpec, x):
    x = np.zeros(problem.d_x) if x is None else np.asarray(x, dtype=float)
    return problem.proj_x(x)


def _require_strong_concavity(problem: ProblemSpec, driver: str):
    if problem.mu <= 0:
        raise ValueError(f"problem is merely concave (mu = 0); use {driver} instead")


def pgfda_szo_count(cfg: PgfdaConfig, refresh_flags) -> int:
    """Closed-form oracle count of a PGFDA run with the given per-iteration refresh flags."""
    flags = list(refresh_flags)
    n_ref = sum(bool(f) for f in flags)
    return 2 * cfg.K_in + n_ref * 2 * cfg.b_tilde + (len(flags) - n_ref) * 4 * cfg.b + 2 * cfg.K_out


def nl_pgfda_szo_count(cfg: NlPgfdaConfig, iterations: int | None = None) -> int:
    T = cfg.T if iterations is None else iterations
    return T * cfg.b * (4 * cfg.K + 2)


def pgfda(
    problem: ProblemSpec,
    cfg: PgfdaConfig,
    x0=None,
    y_init=None,
    max_szo: int | None = None,
    callback: IterCallback | None = None,
) -> tuple[SaddlePoint, RunTrace]:
    """Projected gradient-free descent ascent for nonconvex-strongly-concave problems.

    Returns ``(x_j, y_out)`` where ``j`` is uniform over the completed
    iterations and ``y_out`` polishes ``y_j`` with ``K_out`` inner steps.  With
    ``max_szo`` the loop stops before an iteration that would leave too little
    budget for the final polish, so the total never exceeds ``max_szo``.
    """
    _require_strong_concavity(problem, "pgfda_concave")
    cfg.check_against(problem)
    trace = RunTrace("pgfda", info={"config": asdict(cfg)})
    seed, mu, delta = cfg.seed, problem.mu, cfg.delta
    start = problem.szo_calls
    t0 = time.perf_counter()

    x = _default_x(problem, x0)
    y_m1 = _default_y(problem, y_init)
    y = pgfd(SliceOracle(problem, x), y_m1, InnerConfig(mu, delta, cfg.K_in), problem.proj_y, stream(seed, "pgfda", "init"))

    xs, ys = [], []
    g: GradEstimate | None = None
    prev: SaddlePoint | None = None
    for t in range(cfg.T):
        zeta = stream(seed, "pgfda", "zeta", t).random() < cfg.p
        refresh = t == 0 or zeta
        cost = 2 * cfg.b_tilde if refresh else 4 * cfg.b
        if max_szo is not None and t > 0 and problem.szo_calls - start + cost + 2 * cfg.K_out > max_szo:
            trace.info["stopped_by_budget"] = True
            break
        cur = SaddlePoint(x, y)
        rng = stream(seed, "pgfda", "batch", t)
        if refresh:
            g = minibatch_joint(problem, cur, delta, cfg.b_tilde, rng)
        else:
            g = vr_update(g, problem, cur, prev, delta, cfg.b, rng)
        rec = IterRecord(
            t=t,
            szo_calls=problem.szo_calls - start,
            u_norm=float(np.linalg.norm(g.g_x)),
            refresh=bool(refresh),
            wall_ms=(time.perf_counter() - t0) * 1e3,
            gx_residual=float(np.linalg.norm(mapping_x(x, y, g.g_x, cfg.eta_x, problem.proj_x))),
            gy_residual=float(np.linalg.norm(mapping_y(x, y, g.g_y, cfg.eta_y, problem.proj_y))),
        )
        trace.records.append(rec)
        xs.append(x)
        ys.append(y)
        if callback is not None:
            callback(rec, x, y)
        prev = cur
        x = problem.proj_x(x - cfg.eta_x * g.g_x)
        y = problem.proj_y(y + cfg.eta_y * g.g_y)
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise SolverDivergence(f"non-finite iterate after t={t}", trace)

    n_done = len(xs)
    j = int(stream(seed, "pgfda", "output").integers(n_done))
    x_out = xs[j]
    y_out = pgfd(
        SliceOracle(problem, x_out), ys[j], InnerConfig(mu, delta, cfg.K_out), problem.proj_y, stream(seed, "pgfda", "polish")
    )
    trace.j, trace.x_out, trace.y_out = j, x_out, y_out
    trace.total_szo = problem.szo_calls - start
    trace.info["iterations"] = n_done
    return SaddlePoint(x_out, y_out), trace


def nl_pgfda(
    problem: ProblemSpec,
    cfg: NlPgfdaConfig,
    x0=None,
    y_init=None,
    max_szo: int | None = None,
    callback: IterCallback | None = None,
) -> tuple[np.ndarray, RunTrace]:
    """Nested-loop projected gradient-free descent on the primal function.

    Keeps ``b`` warm-start pairs ``(y+_i, y-_i)``; at every iteration each pair
    is refined by ``K`` inner steps at ``x_t +/- delta w_i``.  Per-iteration cost
    is ``b (4K + 2)`` oracle calls.
    """
    _require_strong_concavity(problem, "nl_pgfda_concave")
    trace = RunTrace("nl-pgfda", info={"config": asdict(cfg)})
    seed, b, delta = cfg.seed, cfg.b, cfg.delta
    inner = InnerConfig(problem.mu, cfg.delta_tilde, cfg.K)
    start = problem.szo_calls
    per_iter = b * (4 * cfg.K + 2)
    t0 = time.perf_counter()

    x = _default_x(problem, x0)
    y0 = _default_y(problem, y_init)
    Y_warm = np.tile(y0, (2 * b, 1))  # rows 0..b-1 are y+, rows b..2b-1 are y-
    xs = []
    for t in range(cfg.T):
        if max_szo is not None and t > 0 and problem.szo_calls - start + per_iter > max_szo:
            trace.info["stopped_by_budget"] = True
            break
        W = sample_unit_sphere(problem.d_x, stream(seed, "nl-pgfda", "dir", t), b)
        Xs = np.concatenate([x + delta * W, x - delta * W])
        rngs = [stream(seed, "nl-pgfda", "inner", t, i) for i in range(2 * b)]
        Y_warm = pgfd_batch(SliceOracle(problem, Xs), Y_warm, inner, problem.proj_y, rngs)
        xi = problem.noise(stream(seed, "nl-pgfda", "xi", t), b)
        u = phi_estimates(problem, x, delta, W, xi, Y_warm[:b], Y_warm[b:]).mean(axis=0)
        rec = IterRecord(
            t=t,
            szo_calls=problem.szo_calls - start,
            u_norm=float(np.linalg.norm(u)),
            refresh=True,
            wall_ms=(time.perf_counter() - t0) * 1e3,
            gx_residual=float(np.linalg.norm(mapping_primal(x, u, cfg.eta, problem.proj_x))),
        )
        trace.records.append(rec)
        xs.append(x)
        if callback is not None:
            callback(rec, x, None)
        x = problem.proj_x(x - cfg.eta * u)
        if not np.all(np.isfinite(x)):
            raise SolverDivergence(f"non-finite iterate after t={t}", trace)

    trace.info["warm_starts"] = Y_warm
    j = int(stream(seed, "nl-pgfda", "output").integers(len(xs)))
    trace.j, trace.x_out = j, xs[j]
    trace.total_szo = problem.szo_calls - start
    trace.info["iterations"] = len(xs)
    return xs[j], trace


def pgfda_concave(
    problem: ProblemSpec,
    eps: float,
    cfg: PgfdaConfig,
    y0=None,
    x0=None,
    max_szo: int | None = None,
    certify_N: int | None = None,
    callback: IterCallback | None = None,
) -> tuple[SaddlePoint, RunTrace]:
    """PGFDA on the merely concave problem regularized by ``eps/(2 D_y) ||y - y0||^2``.

    When ``certify_N`` is given, the GSSP residuals of the output are estimated
    on the original (unregularized) problem; they are not part of ``total_szo``.
    """
    if problem.mu > 0:
        raise ValueError("problem is strongly concave; call pgfda directly")
    y0 = _default_y(problem, y0)
    wrapped = wrap_strong_concavity(problem, eps, y0)
    point, trace = pgfda(wrapped, cfg, x0=x0, y_init=y0, max_szo=max_szo, callback=callback)
    trace.algorithm = "pgfda-concave"
    trace.info.update(wrapped_L=wrapped.L, wrapped_mu=wrapped.mu, eps=eps, target=eps / 2)
    if certify_N:
        before = problem.szo_calls
        rep = estimate_gssp_residual(
            problem, point, cfg.delta, cfg.eta_x, cfg.eta_y_tilde, certify_N, stream(cfg.seed, "certify")
        )
        trace.certificate = rep
        trace.info["certify_szo"] = problem.szo_calls - before
    return point, trace


def nl_pgfda_concave(
    problem: ProblemSpec,
    delta: float,
    eps: float,
    cfg: NlPgfdaConfig,
    y0=None,
    x0=None,
    max_szo: int | None = None,
    certify_N: int | None = None,
    certify_budget: int | None = None,
    callback: IterCallback | None = None,
) -> tuple[np.ndarray, RunTrace]:
    """NL-PGFDA on the primal-regularized problem (``delta eps / (2 d_x D_y^2) ||y - y0||^2``).

    The primal residual is certified on the regularized problem (the original
    has no unique inner maximizer); transferring it to the original primal
    function costs at most ``eps / 2``, recorded as ``transfer_slack``.
    """
    if problem.mu > 0:
        raise ValueError("problem is strongly concave; call nl_pgfda directly")
    y0 = _default_y(problem, y0)
    wrapped = wrap_phi_regularizer(problem, delta, eps, y0)
    x_out, trace = nl_pgfda(wrapped, cfg, x0=x0, y_init=y0, max_szo=max_szo, callback=callback)
    trace.algorithm = "nl-pgfda-concave"
    trace.info.update(wrapped_L=wrapped.L, wrapped_mu=wrapped.mu, eps=eps, target=eps / 2)
    if certify_N:
        before = problem.szo_calls
        rep = estimate_ggsp_residual(
            wrapped,
            x_out,
            cfg.delta,
            cfg.eta,
            certify_budget or cfg.K,
            certify_N,
            stream(cfg.seed, "certify"),
            inner_nu=cfg.delta_tilde,
            y_init=y0,
        )
        trace.certificate = replace(rep, transfer_slack=eps / 2)
        trace.info["certify_szo"] = problem.szo_calls - before
    return x_out, trace


# ---------------------------------------------------------------------------
# parameter recipes (all order constants collapsed into one ``const``)


def _positive(**kw):
    for k, v in kw.items():
        if not v > 0:
            raise ValueError(f"{k} must be positive, got {v}")


def recipe_ncsc_gssp_raw(problem: ProblemSpec, delta: float, eps: float, const: float = 1.0, delta_hat: float = 1.0) -> dict:
    """Unrounded PGFDA parameter values for a target ``(delta, eps)`` GSSP."""
    _positive(mu=problem.mu, delta=delta, eps=eps, const=const, delta_hat=delta_hat)
    mu, L, d, dy = problem.mu, problem.L, problem.d, problem.d_y
    _positive(L=L)
    c = const
    return {
        "eta_x": c * mu**2 * delta**3 / (d**1.5 * L**3),
        "eta_y": c * delta / (math.sqrt(d) * L),
        "eta_y_tilde": c * delta / (math.sqrt(d) * L),
        "b": c * d**1.5 * L**2 / (mu * delta * eps),
        "b_tilde": c * d**2 * L**4 / (mu**2 * delta**2 * eps**2),
        "p": c * delta * mu * eps / (math.sqrt(d) * L**2),
        "K_in": c * dy * L**2 / mu,
        "K_out": c * d**1.5 * dy * L**5 / (mu**3 * delta**3 * eps**2),
        "T": c * d**1.5 * L**3 * (delta_hat + delta * L + 1) / (mu**2 * delta**3 * eps**2),
    }


def gssp_complexity(problem: ProblemSpec, delta: float, eps: float, delta_hat: float = 1.0) -> float:
    mu, L, d = problem.mu, problem.L, problem.d
    return d**3 * L**5 * (delta_hat + delta * L) / (mu**3 * delta**4 * eps**3)


def recipe_ncsc_gssp(
    problem: ProblemSpec, delta: float, eps: float, const: float = 1.0, delta_hat: float = 1.0, seed: int = 0
) -> PgfdaConfig:
    """PGFDA configuration from the order-of-magnitude parameter settings.

    Integer fields are rounded up, ``p`` is clamped to 1 (with a warning) and
    ``K_in``, ``K_out`` to at least 2.
    """
    raw = recipe_ncsc_gssp_raw(problem, delta, eps, const, delta_hat)
    p = raw["p"]
    if p > 1:
        warnings.warn(f"recipe probability {p:g} exceeds 1; clamped to 1", stacklevel=2)
        p = 1.0
    return PgfdaConfig(
        eta_x=raw["eta_x"],
        eta_y=raw["eta_y"],
        eta_y_tilde=raw["eta_y_tilde"],
        T=max(1, math.ceil(raw["T"])),
        K_in=max(2, math.ceil(raw["K_in"])),
        K_out=max(2, math.ceil(raw["K_out"])),
        delta=delta,
        p=p,
        b=max(1, math.ceil(raw["b"])),
        b_tilde=max(1, math.ceil(raw["b_tilde"])),
        seed=seed,
    )


def recipe_ncsc_ggsp_raw(problem: ProblemSpec, delta: float, eps: float, const: float = 1.0, delta_hat: float = 1.0) -> dict:
    _positive(mu=problem.mu, delta=delta, eps=eps, const=const, delta_hat=delta_hat)
    mu, L, dx, dy = problem.mu, problem.L, problem.d_x, problem.d_y
    _positive(L=L)
    c = const
    return {
        "eta": c * delta / (math.sqrt(dx) * L),
        "T": c * math.sqrt(dx) * L * (delta_hat + delta * L) / (delta * eps**2),
        "b": c * dx * L**2 / eps**2,
        "K": c * dx**2 * dy * L**4 / (mu**2 * delta**2 * eps**2),
    }


def ggsp_complexity(problem: ProblemSpec, delta: float, eps: float, delta_hat: float = 1.0) -> float:
    mu, L, dx, dy = problem.mu, problem.L, problem.d_x, problem.d_y
    return dx**3.5 * dy * L**7 * (delta_hat + delta * L) / (mu**2 * delta**3 * eps**6)


def recipe_ncsc_ggsp(
    problem: ProblemSpec,
    delta: float,
    eps: float,
    const: float = 1.0,
    delta_hat: float = 1.0,
    delta_tilde: float | None = None,
    seed: int = 0,
) -> NlPgfdaConfig:
    """NL-PGFDA configuration; the inner smoothing radius defaults to ``delta``."""
    raw = recipe_ncsc_ggsp_raw(problem, delta, eps, const, delta_hat)
    return NlPgfdaConfig(
        eta=raw["eta"],
        T=max(1, math.ceil(raw["T"])),
        b=max(1, math.ceil(raw["b"])),
        K=max(2, math.ceil(raw["K"])),
        delta=delta,
        delta_tilde=delta if delta_tilde is None else delta_tilde,
        seed=seed,
    )
