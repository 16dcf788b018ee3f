"""Direction sets, greedy nets, frequency bands, and the asymmetric distance.

Everything here is Euclidean: nets measure chord distance, not geodesic,
because the closeness comparisons downstream are of the form |v - xi|.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def asym_dist(U: np.ndarray, V: np.ndarray) -> float:
    """sup over u in U of inf over v in V of |u - v| (asymmetric)."""
    U = np.atleast_2d(np.asarray(U, dtype=float))
    V = np.atleast_2d(np.asarray(V, dtype=float))
    if U.size == 0 or V.size == 0:
        raise ValueError("asym_dist of an empty set")
    if U.shape[1] != V.shape[1]:
        raise ValueError("dimension mismatch")
    # chunked to keep memory flat for large sample sets
    worst = 0.0
    step = max(1, 2**22 // max(1, V.shape[0]))
    for i in range(0, U.shape[0], step):
        block = U[i : i + step]
        d2 = ((block[:, None, :] - V[None, :, :]) ** 2).sum(axis=2)
        worst = max(worst, float(np.sqrt(d2.min(axis=1).max())))
    return worst


@dataclass(frozen=True)
class DirectionSet:
    """A finite set of directions in R^dim, optionally unit-normalized."""

    dim: int
    points: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        object.__setattr__(self, "points", pts)
        if pts.shape[1] != self.dim:
            raise ValueError("points do not match dim")
        if self.normalized:
            norms = np.linalg.norm(pts, axis=1)
            if np.any(np.abs(norms - 1.0) > 1e-12):
                raise ValueError("normalized DirectionSet has non-unit vectors")

    def __len__(self) -> int:
        return self.points.shape[0]

    def normalize(self) -> "DirectionSet":
        norms = np.linalg.norm(self.points, axis=1, keepdims=True)
        return DirectionSet(self.dim, self.points / norms, normalized=True)

    def to_csv(self) -> str:
        return "\n".join(",".join(repr(float(x)) for x in row) for row in self.points)

    @classmethod
    def from_csv(cls, text: str, normalized: bool = False) -> "DirectionSet":
        rows = [[float(t) for t in line.split(",")] for line in text.strip().splitlines() if line.strip()]
        pts = np.array(rows)
        return cls(pts.shape[1], pts, normalized=normalized)


@dataclass(frozen=True)
class Band:
    """Frequency band around the hyperplane xi-perp, half-width s per unit length."""

    xi: np.ndarray
    s: float

    def __post_init__(self):
        xi = np.asarray(self.xi, dtype=float)
        object.__setattr__(self, "xi", xi)
        if not np.any(xi):
            raise ValueError("band axis xi must be nonzero")
        if self.s <= 0:
            raise ValueError("band width s must be positive")


def band_members(V: DirectionSet, band: Band) -> np.ndarray:
    """Indices of v in V with |xi'.v| < s|v|, xi' the unit band axis.

    Normalizing xi makes membership invariant under xi -> lambda*xi.
    """
    xi = band.xi / np.linalg.norm(band.xi)
    dots = np.abs(V.points @ xi)
    return np.nonzero(dots < band.s * np.linalg.norm(V.points, axis=1))[0]


def fibonacci_sphere(count: int) -> np.ndarray:
    """Deterministic quasi-uniform points on S^2 (Fibonacci lattice)."""
    i = np.arange(count, dtype=float)
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    z = 1.0 - (2.0 * i + 1.0) / count
    theta = 2.0 * np.pi * i / phi
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    return np.column_stack([r * np.cos(theta), r * np.sin(theta), z])


def circle_points(count: int) -> np.ndarray:
    t = 2.0 * np.pi * np.arange(count) / count
    return np.column_stack([np.cos(t), np.sin(t)])


@dataclass(frozen=True)
class Net:
    """delta-separated subset of a manifold whose delta-balls cover it."""

    base: DirectionSet
    delta: float
    candidate_pool: np.ndarray = field(repr=False, default=None)

    @property
    def points(self) -> np.ndarray:
        return self.base.points

    def __len__(self) -> int:
        return len(self.base)


def _greedy_select(pool: np.ndarray, delta: float, start: int) -> np.ndarray:
    """Greedy sequential packing: scan the pool, keep points >= delta from
    all kept ones.  Every skipped point is < delta from a kept one, so the
    result is delta-separated and delta-covers the pool at near-tight spacing.
    """
    order = np.roll(np.arange(pool.shape[0]), -start)
    mindist = np.full(pool.shape[0], np.inf)
    chosen: list[int] = []
    for i in order:
        if mindist[i] >= delta:
            chosen.append(i)
            mindist = np.minimum(mindist, np.linalg.norm(pool - pool[i], axis=1))
    return pool[np.array(chosen)]


def build_net(manifold, delta: float, seed: int = 0, pool_size: int | None = None) -> Net:
    """Greedy net at separation ``delta`` over a dense candidate pool.

    ``manifold`` is either the string "sphere:<n>" for S^{n-1} in R^n, or an
    (k, n) array of candidate samples (e.g. variety samples).  Deterministic
    for a fixed seed: the pool is a fixed lattice and the seed picks the
    starting point of the scan.  The pool is sized so its own resolution is
    about delta/4, making the covering invariant meaningful.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    if isinstance(manifold, str):
        if not manifold.startswith("sphere:"):
            raise ValueError(f"unknown manifold spec {manifold!r}")
        n = int(manifold.split(":")[1])
        if n == 2:
            size = pool_size or max(4096, int(np.ceil(8 * 2 * np.pi / delta)))
            pool = circle_points(size)
        elif n == 3:
            size = pool_size or max(20000, int(np.ceil((16.0 / delta) ** 2)))
            pool = fibonacci_sphere(min(size, 2_000_000))
        else:
            raise ValueError("sphere nets supported for n in {2, 3}")
        normalized = True
    else:
        pool = np.atleast_2d(np.asarray(manifold, dtype=float))
        normalized = False
    rng = np.random.default_rng(seed)
    start = int(rng.integers(0, pool.shape[0]))
    pts = _greedy_select(pool, delta, start)
    base = DirectionSet(pool.shape[1], pts, normalized=normalized)
    return Net(base=base, delta=delta, candidate_pool=pool)


def check_net(net: Net, resolution_divisor: int = 4) -> dict:
    """Audit both net invariants; returns separation and covering slack."""
    pts = net.points
    sep = np.inf
    if len(pts) > 1:
        d2 = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
        np.fill_diagonal(d2, np.inf)
        sep = float(np.sqrt(d2.min()))
    covering = asym_dist(net.candidate_pool, pts) if net.candidate_pool is not None else np.nan
    return {
        "separation": sep,
        "separation_ok": bool(sep >= net.delta - 1e-12),
        "covering": covering,
        "covering_ok": bool(covering <= net.delta + 1e-12),
    }
