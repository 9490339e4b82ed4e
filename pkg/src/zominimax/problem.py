"""Minimax problem abstraction: stochastic zeroth-order oracle, feasible sets, constants.

A problem is ``min_x max_y f(x, y) = E[F(x, y; xi)]``.  The oracle is only ever
queried for function values.  Noise realizations are 64-bit integer handles
interpreted by the problem (a dataset index for finite sums, a seed for
synthetic noise), which keeps ``F`` pure and replayable.
"""

from __future__ import annotations

import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .geometry import Projector

__all__ = [
    "SaddlePoint",
    "SzoCounter",
    "ProblemSpec",
    "NonFiniteOracleError",
    "evaluate",
    "wrap_strong_concavity",
    "wrap_phi_regularizer",
    "thread_count",
]

THREADS_ENV = "ZOMINIMAX_THREADS"
# below this many rows a batch is evaluated inline
_MIN_PARALLEL_ROWS = 256

_pool: ThreadPoolExecutor | None = None
_pool_size = 0
_pool_lock = threading.Lock()


def thread_count() -> int:
    """Worker threads used for batched oracle evaluation (env ``ZOMINIMAX_THREADS``)."""
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    return max(1, n)


def _executor(n: int) -> ThreadPoolExecutor:
    global _pool, _pool_size
    with _pool_lock:
        if _pool is None or _pool_size != n:
            if _pool is not None:
                _pool.shutdown(wait=True)
            _pool = ThreadPoolExecutor(max_workers=n, thread_name_prefix="zominimax")
            _pool_size = n
        return _pool


class NonFiniteOracleError(FloatingPointError):
    """The oracle returned NaN or inf."""


class SzoCounter:
    """Thread-safe monotone count of stochastic zeroth-order oracle calls."""

    def __init__(self, start: int = 0):
        self._count = int(start)
        self._lock = threading.Lock()

    @property
    def count(self) -> int:
        return self._count

    def add(self, n: int) -> int:
        if n < 0:
            raise ValueError("SZO counter is monotone")
        with self._lock:
            self._count += int(n)
            return self._count

    def __repr__(self):
        return f"SzoCounter({self._count})"


@dataclass(frozen=True)
class SaddlePoint:
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.array(self.x, dtype=float).reshape(-1)
        y = np.array(self.y, dtype=float).reshape(-1)
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("saddle point entries must be finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def z(self) -> np.ndarray:
        return np.concatenate([self.x, self.y])


@dataclass
class ProblemSpec:
    """A stochastic minimax problem accessed through function values only.

    ``oracle(X, Y, xi)`` is the raw vectorized map: ``X`` has shape ``(n, d_x)``,
    ``Y`` shape ``(n, d_y)``, ``xi`` is an int64 array of ``n`` noise handles, and
    the result is the ``n`` values ``F(X[i], Y[i]; xi[i])``.  Always go through
    :meth:`evaluate_batch` (or :func:`evaluate`) so calls are counted.

    ``L`` is the mean-squared Lipschitz constant, ``mu`` the strong-concavity
    modulus in ``y`` (0 for merely concave) and ``D_y`` the diameter of ``Y``.
    The oracle must be defined on the ``delta``-enlargements of ``X`` and ``Y``
    since smoothing queries are never projected.
    """

    oracle: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
    draw_noise: Callable[[np.random.Generator, int], np.ndarray]
    proj_x: Projector
    proj_y: Projector
    L: float
    mu: float
    D_y: float
    counter: SzoCounter = field(default_factory=SzoCounter)
    name: str = "problem"
    # closed forms and bookkeeping attached by constructors (e.g. exact gradients)
    meta: dict = field(default_factory=dict)
    base: "ProblemSpec | None" = None
    reg_coef: float = 0.0
    reg_center: np.ndarray | None = None

    def __post_init__(self):
        if self.L < 0 or self.mu < 0:
            raise ValueError("L and mu must be nonnegative")
        if not self.D_y > 0:
            raise ValueError("D_y must be positive")

    @property
    def d_x(self) -> int:
        return self.proj_x.dim

    @property
    def d_y(self) -> int:
        return self.proj_y.dim

    @property
    def d(self) -> int:
        return self.d_x + self.d_y

    @property
    def szo_calls(self) -> int:
        return self.counter.count

    def root(self) -> "ProblemSpec":
        """The unregularized problem underneath any wrappers."""
        p = self
        while p.base is not None:
            p = p.base
        return p

    def noise(self, rng: np.random.Generator, n: int) -> np.ndarray:
        xi = np.asarray(self.draw_noise(rng, int(n)), dtype=np.int64).reshape(-1)
        if xi.shape != (n,):
            raise ValueError(f"draw_noise returned {xi.shape[0]} handles, expected {n}")
        return xi

    def evaluate_batch(self, X, Y, xi) -> np.ndarray:
        """Counted evaluation of ``F(X[i], Y[i]; xi[i])`` for every row."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Y = np.asarray(Y, dtype=float).reshape(X.shape[0], -1)
        xi = np.asarray(xi, dtype=np.int64).reshape(-1)
        n = X.shape[0]
        if X.shape[1] != self.d_x or Y.shape[1] != self.d_y or xi.shape[0] != n:
            raise ValueError(
                f"dimension mismatch: got X{X.shape}, Y{Y.shape}, xi{xi.shape} "
                f"for d_x={self.d_x}, d_y={self.d_y}"
            )
        workers = thread_count()
        if workers > 1 and n >= _MIN_PARALLEL_ROWS:
            bounds = np.linspace(0, n, min(workers, n) + 1).astype(int)
            chunks = [(X[a:b], Y[a:b], xi[a:b]) for a, b in zip(bounds[:-1], bounds[1:])]
            parts = list(_executor(workers).map(lambda c: self.oracle(*c), chunks))
            vals = np.concatenate([np.asarray(p, dtype=float).reshape(-1) for p in parts])
        else:
            vals = np.asarray(self.oracle(X, Y, xi), dtype=float).reshape(-1)
        self.counter.add(n)
        if vals.shape != (n,):
            raise ValueError(f"oracle returned shape {vals.shape}, expected ({n},)")
        if not np.all(np.isfinite(vals)):
            i = int(np.flatnonzero(~np.isfinite(vals))[0])
            raise NonFiniteOracleError(
                f"oracle returned {vals[i]} at x={X[i].tolist()}, y={Y[i].tolist()}, xi={int(xi[i])}"
            )
        return vals

    def evaluate(self, x, y, xi) -> float:
        return float(self.evaluate_batch(np.reshape(x, (1, -1)), np.reshape(y, (1, -1)), [xi])[0])

    def check_point(self, p: SaddlePoint):
        if p.x.shape != (self.d_x,) or p.y.shape != (self.d_y,):
            raise ValueError(
                f"point has dims ({p.x.size}, {p.y.size}), problem expects ({self.d_x}, {self.d_y})"
            )


def evaluate(problem: ProblemSpec, p: SaddlePoint, xi) -> float:
    """One counted oracle call ``F(p.x, p.y; xi)``."""
    problem.check_point(p)
    return problem.evaluate(p.x, p.y, xi)


def _check_center(problem: ProblemSpec, y0) -> np.ndarray:
    y0 = np.array(y0, dtype=float).reshape(-1)
    if y0.shape != (problem.d_y,):
        raise ValueError(f"y0 must have length {problem.d_y}")
    if np.linalg.norm(problem.proj_y(y0) - y0) > 1e-9:
        raise ValueError("y0 must lie in Y")
    return y0


def _regularized(problem: ProblemSpec, coef: float, y0: np.ndarray, **changes) -> ProblemSpec:
    base_oracle = problem.oracle

    def oracle(X, Y, xi):
        return base_oracle(X, Y, xi) - coef * np.sum((Y - y0) ** 2, axis=1)

    return replace(
        problem,
        oracle=oracle,
        base=problem,
        reg_coef=coef,
        reg_center=y0,
        meta={},
        **changes,
    )


def wrap_strong_concavity(problem: ProblemSpec, eps: float, y0) -> ProblemSpec:
    """Subtract ``eps/(2 D_y) * ||y - y0||^2`` to make a concave problem strongly concave.

    The wrapped problem has ``mu = eps / D_y`` and ``L = L + eps`` and shares the
    SZO counter of ``problem``.
    """
    if problem.mu != 0:
        raise ValueError("problem is already strongly concave (mu > 0)")
    if not eps > 0:
        raise ValueError("eps must be positive")
    y0 = _check_center(problem, y0)
    return _regularized(
        problem,
        eps / (2.0 * problem.D_y),
        y0,
        mu=eps / problem.D_y,
        L=problem.L + eps,
        name=f"{problem.name}+sc(eps={eps:g})",
    )


def wrap_phi_regularizer(problem: ProblemSpec, delta: float, eps: float, y0) -> ProblemSpec:
    """Subtract ``delta*eps/(2 d_x D_y^2) * ||y - y0||^2`` (primal-function regularization).

    The wrapped problem has ``mu = delta*eps/(d_x D_y^2)`` and
    ``L = L + delta*eps/(d_x D_y)``.
    """
    if problem.mu != 0:
        raise ValueError("problem is already strongly concave (mu > 0)")
    if not (delta > 0 and eps > 0):
        raise ValueError("delta and eps must be positive")
    y0 = _check_center(problem, y0)
    dx, Dy = problem.d_x, problem.D_y
    return _regularized(
        problem,
        delta * eps / (2.0 * dx * Dy**2),
        y0,
        mu=delta * eps / (dx * Dy**2),
        L=problem.L + delta * eps / (dx * Dy),
        name=f"{problem.name}+phi(delta={delta:g},eps={eps:g})",
    )
