"""Invariant battery behind ``zominimax validate``.

Each check returns a :class:`CheckResult`; the suite is seeded, so a given
build either always passes or always fails.  ``quick=True`` shrinks sample
sizes for smoke testing (tolerances are sample-size aware, so the verdicts
mean the same thing).
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .bench_problems import poisoning_problem, quadratic_saddle, random_split, synthetic_dataset
from .estimators import SampleSet, draw_samples, joint_estimates
from .geometry import Projector, sample_unit_ball, stream
from .inner_solver import InnerConfig, k_for_accuracy, nu_for_accuracy, pgfd_batch
from .minimax_solvers import NlPgfdaConfig, PgfdaConfig, nl_pgfda, nl_pgfda_szo_count, pgfda, pgfda_szo_count
from .problem import ProblemSpec, SaddlePoint, wrap_strong_concavity
from .reference_oracles import McEstimate, exact_grad_f_delta_quadratic
from .stationarity import mapping_x, mapping_y

# estimator(problem, x, y, delta, S) -> (b, d) array of per-sample joint estimates
Estimator = Callable[[ProblemSpec, np.ndarray, np.ndarray, float, SampleSet], np.ndarray]

VARIANCE_CONST = 16.0 * math.sqrt(2.0 * math.pi)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0


def _timed(fn, *args, **kw) -> CheckResult:
    t0 = time.perf_counter()
    res = fn(*args, **kw)
    res.seconds = time.perf_counter() - t0
    return res


def reference_quadratic(d_x: int = 3, d_y: int = 3, seed: int = 0):
    """Seeded quadratic toy of total dimension ``d_x + d_y`` used by several checks."""
    return quadratic_saddle(d_x, d_y, 1.0, a=np.linspace(-0.5, 0.5, d_x), seed=seed)


def random_projectors(rng: np.random.Generator, dim: int) -> list[Projector]:
    lo = rng.uniform(-2.0, 0.0, dim)
    hi = lo + rng.uniform(0.1, 2.0, dim)
    c = rng.normal(size=dim)
    return [
        Projector.unconstrained(dim),
        Projector.box(lo, hi),
        Projector.l2_ball(rng.uniform(0.1, 2.0), dim, c),
        Projector.linf_ball(rng.uniform(0.1, 2.0), dim, c),
    ]


def check_projection(n: int = 2000, seed: int = 0) -> CheckResult:
    """Idempotence, nonexpansiveness and the variational inequality of every projector kind."""
    rng = stream(seed, "validate", "projection")
    worst = 0.0
    for _ in range(n // 4):
        dim = int(rng.integers(1, 8))
        for P in random_projectors(rng, dim):
            u, v = rng.normal(scale=3.0, size=(2, dim))
            pu, pv = P(u), P(v)
            worst = max(
                worst,
                np.linalg.norm(P(pu) - pu),
                np.linalg.norm(pu - pv) - np.linalg.norm(u - v),
                # <u - P(u), z - P(u)> <= 0 for z in the set (use z = P(v))
                float(np.dot(u - pu, pv - pu)),
            )
    return CheckResult("projection properties", worst <= 1e-9, f"max violation {worst:.2e} over {n} tuples")


def check_mappings(n: int = 10_000, seed: int = 0) -> CheckResult:
    """``<g, G> >= ||G||^2`` and ``||g|| >= ||G||`` for both gradient mappings."""
    rng = stream(seed, "validate", "mapping")
    worst = 0.0
    for i in range(n):
        dim = int(rng.integers(1, 8))
        P = random_projectors(rng, dim)[i % 4]
        z = P(rng.normal(scale=2.0, size=dim))
        g = rng.normal(scale=float(rng.uniform(0.1, 10.0)), size=dim)
        eta = float(10.0 ** rng.uniform(-3, 1))
        for G, s in ((mapping_x(z, None, g, eta, P), g), (mapping_y(None, z, g, eta, P), g)):
            # the ascent mapping is the descent mapping of -g, flipped
            worst = max(worst, float(G @ G - s @ G), float(np.linalg.norm(G) - np.linalg.norm(s)))
    return CheckResult("mapping properties", worst <= 1e-9, f"max violation {worst:.2e} over {n} tuples")


def _default_estimator(problem, x, y, delta, S):
    return joint_estimates(problem, x, y, delta, S)


def unbiasedness_stats(
    estimator: Estimator | None = None, n: int = 1_000_000, delta: float = 0.3, seed: int = 0, chunk: int = 200_000
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Mean, standard error and exact target of ``n`` joint estimates on the reference quadratic."""
    estimator = estimator or _default_estimator
    toy = reference_quadratic()
    prob = toy.problem
    x, y = np.array([0.3, -0.2, 0.1]), np.array([0.2, 0.1, -0.3])
    rng = stream(seed, "validate", "unbiased")
    s1 = np.zeros(prob.d)
    s2 = np.zeros(prob.d)
    done = 0
    while done < n:
        m = min(chunk, n - done)
        G = np.asarray(estimator(prob, x, y, delta, draw_samples(prob, m, rng)), dtype=float)
        s1 += G.sum(axis=0)
        s2 += (G * G).sum(axis=0)
        done += m
    mean = s1 / n
    var = (s2 - n * mean**2) / (n - 1)
    exact = exact_grad_f_delta_quadratic(prob, SaddlePoint(x, y), delta)
    return mean, np.sqrt(var / n), exact


def check_unbiasedness(estimator: Estimator | None = None, n: int = 1_000_000, seed: int = 0) -> CheckResult:
    mean, se, exact = unbiasedness_stats(estimator, n, seed=seed)
    z = np.abs(mean - exact) / se
    return CheckResult("estimator unbiasedness", bool(np.all(z <= 3.0)), f"max |z| = {z.max():.2f} (n={n}, d=6)")


def variance_ratio(b: int, reps: int = 100_000, delta: float = 0.3, seed: int = 0) -> tuple[McEstimate, float]:
    """Empirical ``E||g_b - grad||^2`` and the bound ``16 sqrt(2 pi) d L^2 / b``."""
    toy = reference_quadratic()
    prob = toy.problem
    x, y = np.array([0.3, -0.2, 0.1]), np.array([0.2, 0.1, -0.3])
    exact = exact_grad_f_delta_quadratic(prob, SaddlePoint(x, y), delta)
    rng = stream(seed, "validate", "variance", b)
    G = joint_estimates(prob, x, y, delta, draw_samples(prob, reps * b, rng))
    G = G.reshape(reps, b, prob.d).mean(axis=1)
    est = McEstimate.from_samples(np.sum((G - exact) ** 2, axis=1))
    return est, VARIANCE_CONST * prob.d * prob.L**2 / b


def check_variance(reps: int = 100_000, seed: int = 0) -> CheckResult:
    parts, ok = [], True
    for b in (1, 16):
        est, bound = variance_ratio(b, reps, seed=seed)
        ok &= est.mean <= 1.1 * bound
        parts.append(f"b={b}: {est.mean:.3g} <= {1.1 * bound:.3g}")
    return CheckResult("variance bound", bool(ok), "; ".join(parts))


def check_ball_moment(n: int = 1_000_000, d: int = 10, d_y: int = 4, seed: int = 0) -> CheckResult:
    """``E||v||^2 = d_y / (d + 2)`` for the last ``d_y`` coordinates of a uniform ball sample."""
    Q = sample_unit_ball(d, stream(seed, "validate", "ball"), n)
    est = McEstimate.from_samples(np.sum(Q[:, d - d_y :] ** 2, axis=1))
    target = d_y / (d + 2)
    return CheckResult(
        "ball second moment",
        est.within(target, 3.0),
        f"{est.mean:.5f} vs {target:.5f} (se {est.stderr:.1e})",
    )


def small_poisoning(n: int = 60, d: int = 5, seed: int = 0) -> ProblemSpec:
    data = synthetic_dataset(n, d, seed)
    return poisoning_problem(data, random_split(n, 0.15, seed))


def regularization_gap_samples(
    problem: ProblemSpec, eps: float, y0, x, y, delta: float, N: int, rng: np.random.Generator
) -> np.ndarray:
    """Per-sample ``F~(z + delta q) - F(z + delta q)`` with common random numbers."""
    wrapped = wrap_strong_concavity(problem, eps, y0)
    Q = sample_unit_ball(problem.d, rng, N)
    xi = problem.noise(rng, N)
    X = x + delta * Q[:, : problem.d_x]
    Y = y + delta * Q[:, problem.d_x :]
    return wrapped.evaluate_batch(X, Y, xi) - problem.evaluate_batch(X, Y, xi)


def regularization_gap_closed_form(problem: ProblemSpec, eps: float, y0, y, delta: float) -> float:
    Dy, d, dy = problem.D_y, problem.d, problem.d_y
    return -(eps / (2 * Dy)) * float(np.sum((y - y0) ** 2)) - dy * delta**2 * eps / (2 * (d + 2) * Dy)


def check_regularized_surrogate(n_points: int = 10, N: int = 20_000, seed: int = 0) -> CheckResult:
    prob = small_poisoning()
    rng = stream(seed, "validate", "surrogate")
    eps, delta = 0.5, 0.5
    worst = 0.0
    for _ in range(n_points):
        x = rng.normal(size=prob.d_x)
        y = prob.proj_y(rng.uniform(-2, 2, prob.d_y))
        y0 = prob.proj_y(rng.uniform(-2, 2, prob.d_y))
        est = McEstimate.from_samples(regularization_gap_samples(prob, eps, y0, x, y, delta, N, rng))
        target = regularization_gap_closed_form(prob, eps, y0, y, delta)
        worst = max(worst, abs(est.mean - target) / est.stderr)
    return CheckResult("regularized surrogate closed form", worst <= 3.0, f"max |z| = {worst:.2f} over {n_points} points")


def inner_guarantee_runs(runs: int = 100, eps: float = 1e-2, mu: float = 0.5, seed: int = 0) -> np.ndarray:
    """Suboptimality of ``runs`` seeded inner solves of ``(mu/2)||y - y*||^2`` over a box."""
    y_star = np.array([0.1, -0.2])
    box = Projector.box(-0.5, 0.5, dim=2)
    # Lipschitz constant of h on the nu-enlarged box
    L = mu * (np.linalg.norm(np.full(2, 0.5) + np.abs(y_star)) + 0.1)

    def H(Y, xi):
        return 0.5 * mu * np.sum((Y - y_star) ** 2, axis=1)

    K = k_for_accuracy(mu, L, 2, eps)
    cfg = InnerConfig(mu, nu_for_accuracy(L, eps), K)
    rngs = [stream(seed, "validate", "inner", i) for i in range(runs)]
    Y0 = np.tile(np.array([0.5, 0.5]), (runs, 1))
    Y = pgfd_batch(H, Y0, cfg, box, rngs)
    return 0.5 * mu * np.sum((Y - y_star) ** 2, axis=1)


def check_inner_guarantee(runs: int = 100, seed: int = 0) -> CheckResult:
    gaps = inner_guarantee_runs(runs, seed=seed)
    ok = int(np.sum(gaps <= 1e-2))
    need = math.ceil(0.95 * runs)
    return CheckResult("inner-solver guarantee", ok >= need, f"{ok}/{runs} runs within 1e-2")


def check_szo_accounting(configs: int = 20, seed: int = 0) -> CheckResult:
    """Counter equals the closed-form call count for random small configurations."""
    rng = stream(seed, "validate", "accounting")
    toy = reference_quadratic(2, 2)
    bad = []
    for i in range(configs):
        prob = toy.problem
        before = prob.szo_calls
        pc = PgfdaConfig(
            eta_x=0.05, eta_y=0.1, eta_y_tilde=0.1, T=int(rng.integers(1, 12)), K_in=int(rng.integers(2, 6)),
            K_out=int(rng.integers(2, 6)), delta=0.1, p=float(rng.uniform(0, 1)), b=int(rng.integers(1, 5)),
            b_tilde=int(rng.integers(1, 9)), seed=i,
        )
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            _, tr = pgfda(prob, pc)
        flags = [r.refresh for r in tr.records]
        if not (tr.total_szo == prob.szo_calls - before == pgfda_szo_count(pc, flags)):
            bad.append(f"pgfda#{i}")
        before = prob.szo_calls
        nc = NlPgfdaConfig(
            eta=0.05, T=int(rng.integers(1, 6)), b=int(rng.integers(1, 4)), K=int(rng.integers(2, 6)),
            delta=0.1, delta_tilde=0.1, seed=i,
        )
        _, tr = nl_pgfda(prob, nc)
        if not (tr.total_szo == prob.szo_calls - before == nl_pgfda_szo_count(nc)):
            bad.append(f"nl-pgfda#{i}")
    return CheckResult("SZO accounting", not bad, "exact" if not bad else "mismatch: " + ", ".join(bad))


def run_checks(quick: bool = False, estimator: Estimator | None = None) -> list[CheckResult]:
    s = 10 if quick else 1
    return [
        _timed(check_projection, 2000 // s),
        _timed(check_mappings, 10_000 // s),
        _timed(check_unbiasedness, estimator, 1_000_000 // s),
        _timed(check_variance, 100_000 // s),
        _timed(check_ball_moment, 1_000_000 // s),
        _timed(check_regularized_surrogate, 10, 20_000 // s),
        _timed(check_inner_guarantee, 100 // s if quick else 100),
        _timed(check_szo_accounting, 20 // s if quick else 20),
    ]


def format_table(results: list[CheckResult]) -> str:
    w = max(len(r.name) for r in results)
    lines = [f"{'check':<{w}}  result  time    detail"]
    for r in results:
        lines.append(f"{r.name:<{w}}  {'PASS' if r.passed else 'FAIL':<6}  {r.seconds:5.1f}s  {r.detail}")
    return "\n".join(lines)
