"""Benchmark problem instances: data poisoning with hinge loss, LIBSVM I/O, toy saddles.

The quadratic toys double as test oracles: for a quadratic ``f`` the smoothed
gradient equals the exact gradient, and the primal function has closed form.
"""

from __future__ import annotations

import gzip
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable

import numpy as np
from scipy import sparse

from .geometry import Projector, stream
from .inner_solver import InnerConfig, SliceOracle, gap_for_budget, nu_for_accuracy, pgfd
from .problem import ProblemSpec, SzoCounter

__all__ = [
    "Dataset",
    "PoisonSplit",
    "LibsvmFormatError",
    "parse_libsvm",
    "serialize_libsvm",
    "load_libsvm",
    "random_split",
    "synthetic_dataset",
    "poisoning_problem",
    "poisoning_full_objective",
    "poisoning_phi_exact",
    "QuadraticSaddle",
    "quadratic_saddle",
    "bilinear_saddle",
    "phi_value",
    "metrics_view",
]


# ---------------------------------------------------------------------------
# datasets


class LibsvmFormatError(ValueError):
    def __init__(self, lineno: int, msg: str):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


@dataclass(frozen=True, eq=False)
class Dataset:
    """``n`` sparse feature rows in R^d with labels in {-1, +1}."""

    features: sparse.csr_matrix
    labels: np.ndarray

    def __post_init__(self):
        n = self.features.shape[0]
        if n < 1:
            raise ValueError("dataset must contain at least one row")
        if self.labels.shape != (n,):
            raise ValueError("need one label per row")
        if not np.all(np.isin(self.labels, (-1, 1))):
            raise ValueError("labels must be -1 or +1")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def row(self, i: int) -> list[tuple[int, float]]:
        a, b = self.features.indptr[i], self.features.indptr[i + 1]
        return list(zip(self.features.indices[a:b].tolist(), self.features.data[a:b].tolist()))

    def dense(self) -> np.ndarray:
        return self.features.toarray()

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        f, g = self.features, other.features
        return (
            f.shape == g.shape
            and np.array_equal(f.indptr, g.indptr)
            and np.array_equal(f.indices, g.indices)
            and np.array_equal(f.data, g.data)
            and np.array_equal(self.labels, other.labels)
        )


def _parse_label(tok: str, lineno: int) -> int:
    try:
        v = float(tok)
    except ValueError:
        raise LibsvmFormatError(lineno, f"bad label {tok!r}") from None
    if v == 1.0:
        return 1
    if v in (-1.0, 0.0):
        return -1
    raise LibsvmFormatError(lineno, f"label {tok!r} is not binary")


def parse_libsvm(lines: Iterable[str], n_features: int | None = None) -> Dataset:
    """Parse LIBSVM text (``<label> <idx>:<val> ...``, 1-based indices).

    Blank lines and ``#`` comments are skipped; labels ``0`` map to ``-1``.
    """
    indptr, indices, data, labels = [0], [], [], []
    max_idx = 0
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        toks = line.split()
        labels.append(_parse_label(toks[0], lineno))
        seen = set()
        for tok in toks[1:]:
            idx_s, sep, val_s = tok.partition(":")
            if not sep:
                raise LibsvmFormatError(lineno, f"malformed feature token {tok!r}")
            try:
                idx, val = int(idx_s), float(val_s)
            except ValueError:
                raise LibsvmFormatError(lineno, f"malformed feature token {tok!r}") from None
            if idx < 1:
                raise LibsvmFormatError(lineno, f"feature index {idx} is not 1-based")
            if idx in seen:
                raise LibsvmFormatError(lineno, f"duplicate feature index {idx}")
            seen.add(idx)
            indices.append(idx - 1)
            data.append(val)
            max_idx = max(max_idx, idx)
        indptr.append(len(indices))
    if not labels:
        raise ValueError("no data rows found")
    d = max_idx if n_features is None else n_features
    if max_idx > d:
        raise ValueError(f"feature index {max_idx} exceeds n_features={d}")
    X = sparse.csr_matrix(
        (np.array(data, dtype=float), np.array(indices, dtype=np.int64), np.array(indptr, dtype=np.int64)),
        shape=(len(labels), max(d, 1)),
    )
    X.sort_indices()
    return Dataset(X, np.array(labels, dtype=np.int64))


def serialize_libsvm(data: Dataset) -> list[str]:
    out = []
    for i in range(data.n):
        feats = " ".join(f"{j + 1}:{v!r}" for j, v in data.row(i))
        lab = "+1" if data.labels[i] == 1 else "-1"
        out.append(f"{lab} {feats}".rstrip() + "\n")
    return out


def load_libsvm(path, n_features: int | None = None) -> Dataset:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rt", encoding="utf-8") as fh:
        return parse_libsvm(fh, n_features)


def synthetic_dataset(n: int, d: int, seed: int) -> Dataset:
    """Unit-norm Gaussian features labelled by a random hyperplane with 10% label flips."""
    if n < 1 or d < 1:
        raise ValueError("n and d must be positive")
    rng = stream(seed, "synthetic-dataset")
    A = rng.standard_normal((n, d))
    A /= np.linalg.norm(A, axis=1, keepdims=True)
    w = rng.standard_normal(d)
    labels = np.where(A @ w >= 0, 1, -1)
    flip = rng.random(n) < 0.1
    labels[flip] *= -1
    return Dataset(sparse.csr_matrix(A), labels.astype(np.int64))


@dataclass(frozen=True)
class PoisonSplit:
    poisoned: np.ndarray
    clean: np.ndarray
    corrupt_frac: float

    def __post_init__(self):
        if not 0 < self.corrupt_frac < 1:
            raise ValueError("corrupt_frac must lie in (0, 1)")
        if len(self.poisoned) == 0 or len(self.clean) == 0:
            raise ValueError("both the poisoned and the clean part must be nonempty")
        if np.intersect1d(self.poisoned, self.clean).size:
            raise ValueError("poisoned and clean index sets overlap")


def random_split(n: int, corrupt_frac: float, seed: int) -> PoisonSplit:
    """Seeded uniform split with ``round(corrupt_frac * n)`` poisoned rows (at least one of each)."""
    n_p = min(max(int(round(corrupt_frac * n)), 1), n - 1)
    perm = stream(seed, "poison-split").permutation(n)
    return PoisonSplit(np.sort(perm[:n_p]), np.sort(perm[n_p:]), corrupt_frac)


# ---------------------------------------------------------------------------
# poisoning attack


def _capped_l1(X: np.ndarray, beta: float) -> np.ndarray:
    return np.minimum(np.abs(X), beta).sum(axis=-1)


def poisoning_problem(
    data: Dataset,
    split: PoisonSplit,
    r: float = 2.0,
    lam: float | None = None,
    beta: float = 2.0,
    x_bound: float = 1.0,
) -> ProblemSpec:
    """Data-poisoning minimax problem with hinge loss and capped-l1 regularizer.

    A noise handle encodes one poisoned row and one clean row, so the mean of
    ``F`` over all handles is the full objective

        mean_{D_p} hinge(x, y) + mean_{D_t} hinge(x, 0) + lam * sum_j min(|x_j|, beta).

    ``X = R^d``, ``Y = {||y||_inf <= r}``.  The Lipschitz constant is the bound
    ``sqrt((2 max||a_i|| + r sqrt(d) + lam sqrt(d))^2 + x_bound^2)``, valid while
    ``||x|| <= x_bound`` (the x-region is not known in advance).
    """
    if not (r > 0 and beta > 0):
        raise ValueError("r and beta must be positive")
    lam = 1e-5 / data.n if lam is None else float(lam)
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    A = data.dense()
    labels = data.labels.astype(float)
    P = np.asarray(split.poisoned, dtype=np.int64)
    T = np.asarray(split.clean, dtype=np.int64)
    if P.max() >= data.n or T.max() >= data.n:
        raise ValueError("split indices out of range")
    n_t = T.size
    n_handles = P.size * n_t
    d = data.d

    def oracle(X, Y, xi):
        ip = P[xi // n_t]
        it = T[xi % n_t]
        hp = np.maximum(1.0 - labels[ip] * np.einsum("ij,ij->i", A[ip] + Y, X), 0.0)
        ht = np.maximum(1.0 - labels[it] * np.einsum("ij,ij->i", A[it], X), 0.0)
        return hp + ht + lam * _capped_l1(X, beta)

    def draw_noise(rng, n):
        return rng.integers(0, n_handles, size=n, dtype=np.int64)

    max_a = float(np.max(np.linalg.norm(A, axis=1)))
    L = math.sqrt((2 * max_a + r * math.sqrt(d) + lam * math.sqrt(d)) ** 2 + x_bound**2)
    return ProblemSpec(
        oracle=oracle,
        draw_noise=draw_noise,
        proj_x=Projector.unconstrained(d),
        proj_y=Projector.linf_ball(r, d),
        L=L,
        mu=0.0,
        D_y=2.0 * r * math.sqrt(d),
        name="poisoning",
        meta={
            "kind": "poisoning",
            "A": A,
            "labels": labels,
            "poisoned": P,
            "clean": T,
            "r": r,
            "lam": lam,
            "beta": beta,
            "x_bound": x_bound,
            "n_handles": n_handles,
        },
    )


def poisoning_full_objective(problem: ProblemSpec, x, y) -> float:
    """Exact (uncounted) finite-sum objective of a poisoning problem."""
    m = problem.root().meta
    A, lab, P, T = m["A"], m["labels"], m["poisoned"], m["clean"]
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    hp = np.maximum(1.0 - lab[P] * ((A[P] + y) @ x), 0.0).mean()
    ht = np.maximum(1.0 - lab[T] * (A[T] @ x), 0.0).mean()
    return float(hp + ht + m["lam"] * _capped_l1(x, m["beta"]))


def poisoning_phi_exact(problem: ProblemSpec, x) -> float:
    """Exact primal value ``max_y f(x, y)`` of the unregularized poisoning problem.

    ``y`` enters only through ``s = y^T x`` and the objective is convex in ``s``,
    so the maximum over the box sits at ``y = +/- r sign(x)``.
    """
    r = problem.root().meta["r"]
    x = np.asarray(x, dtype=float)
    y = r * np.sign(x)
    return max(poisoning_full_objective(problem, x, y), poisoning_full_objective(problem, x, -y))


# ---------------------------------------------------------------------------
# quadratic toys


def _splitmix64(z: np.ndarray) -> np.ndarray:
    z = z.astype(np.uint64)
    with np.errstate(over="ignore"):
        z = z + np.uint64(0x9E3779B97F4A7C15)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def _rademacher(xi: np.ndarray, dim: int) -> np.ndarray:
    """Pure map from noise handles to {-1, +1}^dim vectors."""
    h = _splitmix64(xi.astype(np.uint64)[:, None] * np.uint64(dim + 1) + np.arange(dim, dtype=np.uint64)[None, :])
    return np.where((h >> np.uint64(63)) == 1, 1.0, -1.0)


@dataclass
class QuadraticSaddle:
    """``f(x, y) = x^T A x / 2 + a^T x + x^T C y - mu ||y||^2 / 2`` plus zero-mean noise.

    The stochastic component adds ``sigma * zeta(xi)^T z`` with Rademacher
    ``zeta``, which keeps ``E[F] = f`` and makes ``F`` mean-squared Lipschitz.
    """

    A: np.ndarray
    a: np.ndarray
    C: np.ndarray
    mu: float
    sigma: float
    problem: ProblemSpec = field(repr=False)

    @property
    def hessian(self) -> np.ndarray:
        dx, dy = self.C.shape
        return np.block([[self.A, self.C], [self.C.T, -self.mu * np.eye(dy)]])

    def f(self, x, y) -> float:
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        return float(0.5 * x @ self.A @ x + self.a @ x + x @ self.C @ y - 0.5 * self.mu * y @ y)

    def grad(self, x, y) -> np.ndarray:
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        return np.concatenate([self.A @ x + self.a + self.C @ y, self.C.T @ x - self.mu * y])

    def f_delta(self, x, y, delta: float) -> float:
        """Ball-smoothed value: ``f + delta^2 tr(H) / (2 (d + 2))``."""
        d = self.hessian.shape[0]
        return self.f(x, y) + delta**2 * np.trace(self.hessian) / (2.0 * (d + 2))

    def y_star(self, x) -> np.ndarray:
        if self.mu <= 0:
            raise ValueError("y*(x) needs mu > 0")
        return self.problem.proj_y(self.C.T @ np.asarray(x, dtype=float) / self.mu)

    def phi(self, x) -> float:
        return self.f(x, self.y_star(x))

    def grad_phi(self, x) -> np.ndarray:
        # Danskin: the maximizer is unique, so grad Phi = grad_x f(x, y*(x))
        x = np.asarray(x, dtype=float)
        return self.A @ x + self.a + self.C @ self.y_star(x)


def quadratic_saddle(
    d_x: int,
    d_y: int,
    mu: float,
    A=None,
    a=None,
    C=None,
    x_box: tuple[float, float] | None = (-1.0, 1.0),
    y_box: tuple[float, float] = (-1.0, 1.0),
    sigma: float = 0.0,
    x_radius: float | None = None,
    lipschitz_delta: float = 0.1,
    seed: int = 0,
) -> QuadraticSaddle:
    """Build a quadratic saddle toy.

    Missing ``A`` (PSD), ``a`` and ``C`` are drawn from ``seed``.  ``x_box=None``
    means unconstrained ``X``; then ``x_radius`` bounds the region used for the
    Lipschitz constant.  ``L`` is computed as a bound on ``||grad F||`` over the
    ``lipschitz_delta``-enlarged sets.
    """
    if not mu > 0:
        raise ValueError("mu must be positive")
    rng = stream(seed, "quadratic-saddle")
    if A is None:
        M = rng.standard_normal((d_x, d_x)) / math.sqrt(d_x)
        A = M @ M.T + 0.5 * np.eye(d_x)
    if a is None:
        a = np.zeros(d_x)
    if C is None:
        C = rng.standard_normal((d_x, d_y)) / math.sqrt(d_x)
    A = np.array(A, dtype=float).reshape(d_x, d_x)
    a = np.array(a, dtype=float).reshape(d_x)
    C = np.array(C, dtype=float).reshape(d_x, d_y)
    d = d_x + d_y

    if x_box is None:
        proj_x = Projector.unconstrained(d_x)
        if x_radius is None:
            raise ValueError("unconstrained X needs x_radius for the Lipschitz bound")
        rx = x_radius + lipschitz_delta
    else:
        proj_x = Projector.box(x_box[0], x_box[1], dim=d_x)
        rx = np.linalg.norm(np.maximum(np.abs(proj_x.lo), np.abs(proj_x.hi))) + lipschitz_delta
    proj_y = Projector.box(y_box[0], y_box[1], dim=d_y)
    ry = np.linalg.norm(np.maximum(np.abs(proj_y.lo), np.abs(proj_y.hi))) + lipschitz_delta
    H = np.block([[A, C], [C.T, -mu * np.eye(d_y)]])
    L = float(np.linalg.norm(H, 2) * math.hypot(rx, ry) + np.linalg.norm(a) + sigma * math.sqrt(d))

    def oracle(X, Y, xi):
        val = 0.5 * np.einsum("ij,jk,ik->i", X, A, X) + X @ a + np.einsum("ij,jk,ik->i", X, C, Y) - 0.5 * mu * np.sum(Y * Y, axis=1)
        if sigma:
            Z = np.concatenate([X, Y], axis=1)
            val = val + sigma * np.sum(_rademacher(xi, d) * Z, axis=1)
        return val

    if sigma:
        def draw_noise(rng, n):
            return rng.integers(0, 2**62, size=n, dtype=np.int64)
    else:
        def draw_noise(rng, n):
            return np.zeros(n, dtype=np.int64)

    problem = ProblemSpec(
        oracle=oracle,
        draw_noise=draw_noise,
        proj_x=proj_x,
        proj_y=proj_y,
        L=L,
        mu=float(mu),
        D_y=proj_y.diameter,
        name="quadratic-saddle",
    )
    toy = QuadraticSaddle(A, a, C, float(mu), float(sigma), problem)
    problem.meta.update(kind="quadratic", quadratic=toy)
    return toy


def bilinear_saddle(mu: float = 1.0, sigma: float = 0.0) -> QuadraticSaddle:
    """``x y - mu y^2 / 2`` on ``[-1, 1]^2``; the saddle point is the origin."""
    return quadratic_saddle(1, 1, mu, A=[[0.0]], a=[0.0], C=[[1.0]], sigma=sigma)


# ---------------------------------------------------------------------------
# primal value estimation


def metrics_view(problem: ProblemSpec) -> ProblemSpec:
    """Same oracle with a private SZO counter, for measurements outside an algorithm's budget."""
    return replace(problem, counter=SzoCounter())


def phi_value(
    problem: ProblemSpec,
    x,
    budget: int,
    rng: np.random.Generator,
    n_eval: int = 1000,
    nu: float | None = None,
    y_init=None,
    mu: float | None = None,
) -> tuple[float, float]:
    """Estimate ``Phi(x) = max_y f(x, y)`` with one inner solve plus a sample mean.

    Returns ``(estimate, gap_bound)`` where ``gap_bound`` is the expected
    suboptimality guaranteed by an inner budget of ``budget`` iterations.  A
    merely concave problem needs an explicit ``mu`` (the caller's regularization).
    """
    if budget < 2:
        raise ValueError("budget must be at least 2")
    mu = problem.mu if mu is None else mu
    if not mu > 0:
        raise ValueError("phi_value needs mu > 0 (strong concavity) or an explicit regularization")
    x = np.asarray(x, dtype=float)
    gap = gap_for_budget(mu, max(problem.L, 1e-12), max(problem.d_y, 1), budget)
    nu = nu_for_accuracy(max(problem.L, 1e-12), gap) if nu is None else nu
    if y_init is None:
        y_init = problem.proj_y(np.zeros(problem.d_y))
    y_out = pgfd(SliceOracle(problem, x), y_init, InnerConfig(mu, nu, budget), problem.proj_y, rng)
    xi = problem.noise(rng, n_eval)
    vals = problem.evaluate_batch(np.tile(x, (n_eval, 1)), np.tile(y_out, (n_eval, 1)), xi)
    return float(vals.mean()), float(gap)
