"""Feasible-set projections, sphere/ball samplers and reproducible random streams."""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Projector",
    "project",
    "sample_unit_sphere",
    "sample_unit_ball",
    "stream",
]

_KINDS = ("unconstrained", "box", "l2_ball", "linf_ball")


def _tag_to_int(tag) -> int:
    if isinstance(tag, (int, np.integer)):
        if tag < 0:
            raise ValueError(f"stream tags must be nonnegative, got {tag}")
        return int(tag)
    if isinstance(tag, str):
        return zlib.crc32(tag.encode("utf-8"))
    raise TypeError(f"stream tag must be int or str, got {type(tag).__name__}")


def stream(seed: int, *tags) -> np.random.Generator:
    """Return an independent generator for the substream ``(seed, *tags)``.

    The same ``(seed, tags)`` always yields the same sequence, and distinct tag
    tuples yield statistically independent sequences, so callers can hand one
    substream to each iteration / batch element / purpose without any shared
    state between them.
    """
    key = tuple(_tag_to_int(t) for t in tags)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=key)))


@dataclass(frozen=True)
class Projector:
    """Euclidean projector onto a closed convex set in R^dim.

    Build instances with the classmethod constructors; ``kind`` is one of
    ``unconstrained``, ``box``, ``l2_ball`` or ``linf_ball``.
    """

    kind: str
    dim: int
    lo: np.ndarray | None = field(default=None, repr=False)
    hi: np.ndarray | None = field(default=None, repr=False)
    center: np.ndarray | None = field(default=None, repr=False)
    radius: float | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown projector kind {self.kind!r}")
        # R^0 is allowed only as the trivial unconstrained set
        if self.dim < 1 and not (self.dim == 0 and self.kind == "unconstrained"):
            raise ValueError("dimension must be positive")
        if self.kind == "box":
            if self.lo.shape != (self.dim,) or self.hi.shape != (self.dim,):
                raise ValueError("box bounds must have shape (dim,)")
            if not (np.all(np.isfinite(self.lo)) and np.all(np.isfinite(self.hi))):
                raise ValueError("box bounds must be finite")
            if np.any(self.lo > self.hi):
                raise ValueError("box requires lo <= hi coordinatewise")
        elif self.kind in ("l2_ball", "linf_ball"):
            if self.center.shape != (self.dim,) or not np.all(np.isfinite(self.center)):
                raise ValueError("ball center must be a finite vector of shape (dim,)")
            if not (np.isfinite(self.radius) and self.radius > 0):
                raise ValueError("ball radius must be positive and finite")

    @classmethod
    def unconstrained(cls, dim: int) -> "Projector":
        return cls("unconstrained", int(dim))

    @classmethod
    def box(cls, lo, hi, dim: int | None = None) -> "Projector":
        if dim is not None:
            lo = np.broadcast_to(np.asarray(lo, dtype=float), (dim,))
            hi = np.broadcast_to(np.asarray(hi, dtype=float), (dim,))
        lo = np.array(lo, dtype=float).reshape(-1)
        hi = np.array(hi, dtype=float).reshape(-1)
        return cls("box", lo.size, lo=lo, hi=hi)

    @classmethod
    def l2_ball(cls, radius: float, dim: int, center=None) -> "Projector":
        c = np.zeros(dim) if center is None else np.array(center, dtype=float).reshape(-1)
        return cls("l2_ball", int(dim), center=c, radius=float(radius))

    @classmethod
    def linf_ball(cls, radius: float, dim: int, center=None) -> "Projector":
        c = np.zeros(dim) if center is None else np.array(center, dtype=float).reshape(-1)
        return cls("linf_ball", int(dim), center=c, radius=float(radius))

    @property
    def diameter(self) -> float:
        """Euclidean diameter of the set (``inf`` when unconstrained)."""
        if self.kind == "unconstrained":
            return float("inf")
        if self.kind == "box":
            return float(np.linalg.norm(self.hi - self.lo))
        if self.kind == "l2_ball":
            return 2.0 * self.radius
        return 2.0 * self.radius * np.sqrt(self.dim)

    def __call__(self, w):
        return project(self, w)

    def contains(self, w, tol: float = 1e-9) -> bool:
        w = np.asarray(w, dtype=float)
        return bool(np.all(np.linalg.norm(np.atleast_2d(project(self, w) - w), axis=1) <= tol))


def project(P: Projector, w) -> np.ndarray:
    """Euclidean projection of ``w`` onto the set of ``P``.

    ``w`` may be a single vector of length ``P.dim`` or a 2-D array whose rows
    are projected independently.
    """
    w = np.asarray(w, dtype=float)
    if w.shape[-1] != P.dim or w.ndim not in (1, 2):
        raise ValueError(f"expected trailing dimension {P.dim}, got shape {w.shape}")
    if P.kind == "unconstrained":
        return w.copy()
    if P.kind == "box":
        return np.clip(w, P.lo, P.hi)
    if P.kind == "linf_ball":
        return np.clip(w, P.center - P.radius, P.center + P.radius)
    # l2 ball: radial scaling; feasible points (up to rounding of a previous
    # projection) are returned unchanged so projection is bitwise idempotent
    diff = w - P.center
    norms = np.linalg.norm(diff, axis=-1, keepdims=True)
    tol = 8 * np.finfo(float).eps * (P.radius + np.linalg.norm(P.center))
    outside = norms > P.radius + tol
    scale = np.where(outside, P.radius / np.where(norms > 0, norms, 1.0), 1.0)
    out = P.center + diff * scale
    return np.where(outside, out, w)


def sample_unit_sphere(d: int, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Uniform draw(s) from the unit sphere S^{d-1} via normalized Gaussians.

    Returns shape ``(d,)`` when ``size`` is None, else ``(size, d)``.
    """
    if d <= 0:
        raise ValueError(f"dimension must be positive, got {d}")
    n = 1 if size is None else int(size)
    g = rng.standard_normal((n, d))
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    # a zero Gaussian vector has probability zero; redraw defensively
    while np.any(norms == 0):
        bad = norms[:, 0] == 0
        g[bad] = rng.standard_normal((int(bad.sum()), d))
        norms = np.linalg.norm(g, axis=1, keepdims=True)
    out = g / norms
    return out[0] if size is None else out


def sample_unit_ball(d: int, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Uniform draw(s) from the closed unit ball B^d: sphere point scaled by U^{1/d}."""
    if d <= 0:
        raise ValueError(f"dimension must be positive, got {d}")
    n = 1 if size is None else int(size)
    s = sample_unit_sphere(d, rng, n)
    r = rng.random(n) ** (1.0 / d)
    out = s * r[:, None]
    return out[0] if size is None else out
