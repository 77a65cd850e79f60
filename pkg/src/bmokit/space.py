"""Finite metric measure spaces.

A space is a point set ``{0, ..., n-1}`` with an exact distance matrix and a
positive weight per point.  Everything downstream (norms, the multi-scale
construction, map testers) works on the canonical ball list exposed here.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

__all__ = [
    "SpaceError",
    "MetricMeasureSpace",
    "Ball",
    "BallFamily",
    "build_space",
    "grid_1d",
    "grid_2d",
    "path_graph",
    "tree_graph",
    "from_distance_matrix",
    "ball_members",
    "enumerate_balls",
    "doubling_constants",
    "lower_mass_check",
    "LowerMassReport",
    "maximal_net",
    "ball_family",
    "vitali_disjoint",
    "adapted_bump",
]

TRIANGLE_RTOL = 1e-12


class SpaceError(ValueError):
    """Invalid space data or a failed structural check."""


@dataclass(frozen=True, order=True)
class Ball:
    """Open ball ``{y : d(center, y) < radius}``."""

    center: int
    radius: float

    def dilate(self, factor: float) -> "Ball":
        return Ball(self.center, factor * self.radius)


@dataclass(frozen=True, eq=False)
class MetricMeasureSpace:
    dist: np.ndarray
    weight: np.ndarray
    label: str = ""
    descriptor: dict | None = field(default=None, compare=False)

    def __post_init__(self):
        dist = np.array(self.dist, dtype=float)
        weight = np.array(self.weight, dtype=float).ravel()
        _validate(dist, weight)
        dist.flags.writeable = False
        weight.flags.writeable = False
        object.__setattr__(self, "dist", dist)
        object.__setattr__(self, "weight", weight)

    def __repr__(self):
        return f"MetricMeasureSpace(label={self.label!r}, n={self.n})"

    @property
    def n(self) -> int:
        return self.dist.shape[0]

    @cached_property
    def total_measure(self) -> float:
        return float(self.weight.sum())

    @cached_property
    def diameter(self) -> float:
        return float(self.dist.max()) if self.n else 0.0

    @cached_property
    def min_distance(self) -> float:
        """Smallest distance between distinct points (inf for one point)."""
        if self.n < 2:
            return math.inf
        off = self.dist[~np.eye(self.n, dtype=bool)]
        return float(off.min())

    def members(self, ball: Ball) -> np.ndarray:
        return self.dist[ball.center] < ball.radius

    def measure(self, mask: np.ndarray) -> float:
        return float(self.weight[np.asarray(mask, dtype=bool)].sum())

    # canonical ball list, cached because every norm and scan reuses it
    @cached_property
    def balls(self) -> list[Ball]:
        out = []
        for x in range(self.n):
            out.extend(Ball(x, float(r)) for r in _canonical_radii(self.dist[x]))
        return out

    @cached_property
    def ball_matrix(self) -> np.ndarray:
        """Boolean (n_balls, n) membership matrix of the canonical balls."""
        centers = np.fromiter((b.center for b in self.balls), dtype=np.intp)
        radii = np.fromiter((b.radius for b in self.balls), dtype=float)
        mat = self.dist[centers] < radii[:, None]
        mat.flags.writeable = False
        return mat

    @cached_property
    def ball_measures(self) -> np.ndarray:
        out = self.ball_matrix @ self.weight
        out.flags.writeable = False
        return out

    @cached_property
    def doubling(self) -> tuple[float, float]:
        return doubling_constants(self)

    @property
    def c_mu(self) -> float:
        return self.doubling[0]

    @property
    def c_D(self) -> float:
        return self.doubling[1]


@dataclass(frozen=True)
class BallFamily:
    level: int
    step: int
    radius: float
    centers: tuple[int, ...]

    @property
    def balls(self) -> list[Ball]:
        return [Ball(c, self.radius) for c in self.centers]

    def membership(self, space: MetricMeasureSpace, dilation: float = 1.0) -> np.ndarray:
        return space.dist[list(self.centers)] < dilation * self.radius


def _validate(dist: np.ndarray, weight: np.ndarray) -> None:
    if dist.ndim != 2 or dist.shape[0] != dist.shape[1]:
        raise SpaceError(f"distance matrix must be square, got shape {dist.shape}")
    n = dist.shape[0]
    if n == 0:
        raise SpaceError("space must contain at least one point")
    if weight.shape != (n,):
        raise SpaceError(f"expected {n} weights, got {weight.shape[0]}")
    if not np.all(np.isfinite(dist)):
        raise SpaceError("distances must be finite")
    if not np.all(np.isfinite(weight)) or np.any(weight <= 0):
        raise SpaceError("weights must be finite and strictly positive")
    if np.any(np.diag(dist) != 0):
        raise SpaceError("distance matrix must have a zero diagonal")
    if not np.array_equal(dist, dist.T):
        raise SpaceError("distance matrix must be symmetric")
    if n > 1 and np.any(dist[~np.eye(n, dtype=bool)] <= 0):
        raise SpaceError("distinct points must be at positive distance")
    tol = TRIANGLE_RTOL * max(dist.max(), 1.0)
    for j in range(n):
        # d(i,k) <= d(i,j) + d(j,k) for every i, k at once
        slack = dist[:, j, None] + dist[None, j, :] - dist
        if slack.min() < -tol:
            i, k = np.unravel_index(np.argmin(slack), slack.shape)
            raise SpaceError(
                f"triangle inequality fails: d({i},{k})={dist[i, k]!r} > "
                f"d({i},{j})+d({j},{k})={dist[i, j] + dist[j, k]!r}"
            )


def _canonical_radii(row: np.ndarray) -> np.ndarray:
    levels = np.unique(row)
    beyond = levels[-1] + 1.0
    return np.append(0.5 * (levels[:-1] + levels[1:]), beyond)


# -- generators ---------------------------------------------------------------


def _power_weights(norms: np.ndarray, exponent: float, dim: int) -> np.ndarray:
    if exponent <= -dim:
        raise SpaceError(
            f"non-doubling exponent {exponent}: power weights need exponent > -{dim}"
        )
    return (1.0 + norms) ** exponent


def _finish(dist, weight, label, descriptor, normalize):
    dist = np.asarray(dist, dtype=float)
    if normalize and dist.max() > 0:
        dist = dist * (0.5 / dist.max())
    return MetricMeasureSpace(dist, weight, label=label, descriptor=descriptor)


def grid_1d(n: int, exponent: float = 0.0, normalize: bool = False) -> MetricMeasureSpace:
    """Points ``0..n-1`` on the line with weights ``(1+x)**exponent``."""
    x = np.arange(n, dtype=float)
    w = _power_weights(x, exponent, 1)
    desc = {"name": "grid1d", "n": n, "exponent": exponent, "normalize": normalize}
    label = f"grid1d(n={n}, a={exponent:g})"
    return _finish(np.abs(x[:, None] - x[None, :]), w, label, desc, normalize)


def grid_2d(
    m: int, exponent: float = 0.0, normalize: bool = False, metric: str = "euclidean"
) -> MetricMeasureSpace:
    """``m x m`` integer grid, point id ``i*m + j``.

    ``metric`` is ``"euclidean"``, ``"manhattan"`` or ``"chebyshev"``; the
    power weight uses the Euclidean norm of the grid coordinates.
    """
    ii, jj = np.divmod(np.arange(m * m), m)
    pts = np.stack([ii, jj], axis=1).astype(float)
    diff = np.abs(pts[:, None, :] - pts[None, :, :])
    if metric == "euclidean":
        dist = np.sqrt((diff**2).sum(-1))
    elif metric == "manhattan":
        dist = diff.sum(-1)
    elif metric == "chebyshev":
        dist = diff.max(-1)
    else:
        raise SpaceError(f"unknown grid metric {metric!r}")
    w = _power_weights(np.hypot(pts[:, 0], pts[:, 1]), exponent, 2)
    desc = {"name": "grid2d", "m": m, "exponent": exponent, "normalize": normalize,
            "metric": metric}
    label = f"grid2d(m={m}, a={exponent:g}, {metric})"
    return _finish(dist, w, label, desc, normalize)


def _graph_space(edges, n, label, desc, normalize):
    rows, cols = zip(*edges) if edges else ((), ())
    adj = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    dist = shortest_path(adj, directed=False, unweighted=True)
    if not np.all(np.isfinite(dist)):
        raise SpaceError("graph is disconnected")
    return _finish(dist, np.ones(n), label, desc, normalize)


def path_graph(n: int, normalize: bool = False) -> MetricMeasureSpace:
    edges = [(i, i + 1) for i in range(n - 1)]
    desc = {"name": "path", "n": n, "normalize": normalize}
    return _graph_space(edges, n, f"path(n={n})", desc, normalize)


def tree_graph(
    n: int, branching: int = 2, seed: int | None = None, normalize: bool = False
) -> MetricMeasureSpace:
    """Tree on ``n`` vertices with the shortest-path metric.

    Without a seed the tree is the complete ``branching``-ary tree in
    breadth-first order; with a seed each vertex ``i > 0`` attaches to a
    uniformly random earlier vertex.
    """
    if seed is None:
        parents = [(i - 1) // branching for i in range(1, n)]
        label = f"tree(n={n}, b={branching})"
    else:
        rng = np.random.default_rng(seed)
        parents = [int(rng.integers(0, i)) for i in range(1, n)]
        label = f"tree(n={n}, seed={seed})"
    edges = [(p, i) for i, p in zip(range(1, n), parents)]
    desc = {"name": "tree", "n": n, "branching": branching, "seed": seed,
            "normalize": normalize}
    return _graph_space(edges, n, label, desc, normalize)


def from_distance_matrix(
    dist, weights=None, label: str = "explicit", normalize: bool = False
) -> MetricMeasureSpace:
    dist = np.asarray(dist, dtype=float)
    weights = np.ones(dist.shape[0]) if weights is None else np.asarray(weights, float)
    return _finish(dist, weights, label, None, normalize)


_GENERATORS = {
    "grid1d": grid_1d,
    "grid2d": grid_2d,
    "path": path_graph,
    "tree": tree_graph,
}


def build_space(spec: dict) -> MetricMeasureSpace:
    """Build a space from a generator descriptor or explicit data.

    ``{"name": "grid1d", "n": 8, "exponent": 0, "normalize": false}`` calls a
    generator; ``{"dist": [[...]], "weights": [...]}`` wraps explicit data.
    """
    spec = dict(spec)
    if "dist" in spec:
        return from_distance_matrix(
            spec["dist"], spec.get("weights"), spec.get("label", "explicit"),
            spec.get("normalize", False),
        )
    name = spec.pop("name", None)
    if name not in _GENERATORS:
        raise SpaceError(f"unknown generator {name!r}; known: {sorted(_GENERATORS)}")
    try:
        return _GENERATORS[name](**spec)
    except TypeError as exc:
        raise SpaceError(f"bad parameters for generator {name!r}: {exc}") from None


# -- queries ------------------------------------------------------------------


def ball_members(space: MetricMeasureSpace, ball: Ball) -> tuple[np.ndarray, float]:
    """Member ids of ``ball`` and their total measure."""
    if ball.radius <= 0:
        raise SpaceError("ball radius must be positive")
    mask = space.members(ball)
    return np.flatnonzero(mask), float(space.weight[mask].sum())


def enumerate_balls(space: MetricMeasureSpace) -> list[Ball]:
    """One ball per distinct member set per center, sorted by (center, radius)."""
    return list(space.balls)


def _breakpoint_radii(space: MetricMeasureSpace) -> np.ndarray:
    d = np.unique(space.dist)
    d = d[d > 0]
    return np.unique(np.concatenate([d, 0.5 * d]))


def doubling_constants(space: MetricMeasureSpace) -> tuple[float, float]:
    """Exact ``(c_mu, c_D)`` for the finite space.

    All balls ``B(x, r)`` and ``B(x, 2r)`` are constant for ``r`` in each
    interval ``(b_i, b_{i+1}]`` between consecutive values of ``{d, d/2}``, and
    both ratios increase towards the right endpoint, so the suprema are
    attained at the breakpoints themselves.
    """
    dist, w = space.dist, space.weight
    c_mu = c_D = 1.0
    for r in _breakpoint_radii(space):
        big = dist < 2 * r
        small = dist < r
        m_big = big @ w
        m_small = small @ w
        c_mu = max(c_mu, float(np.max(m_big / m_small)))
        # B(x,2r) meets B(y,r) iff some z is in both
        meets = (big.astype(np.float32) @ small.T.astype(np.float32)) > 0
        denom = np.where(meets, m_small[None, :], np.inf).min(axis=1)
        c_D = max(c_D, float(np.max(m_big / denom)))
    if c_D > c_mu**3 * (1 + 1e-12):
        raise SpaceError(f"c_D={c_D} exceeds c_mu**3={c_mu**3}")
    return c_mu, c_D


@dataclass
class LowerMassReport:
    min_slack: float
    configurations: int
    witness: tuple | None  # (x, R, y, r) at the minimal slack
    exhaustive: bool

    @property
    def ok(self) -> bool:
        return self.min_slack >= -1e-12


def lower_mass_check(
    space: MetricMeasureSpace,
    c_mu: float | None = None,
    max_exhaustive: int = 64,
    samples: int = 4000,
    seed: int = 0,
) -> LowerMassReport:
    """Check ``mu(B(y,r))/mu(B(x,R)) >= c_mu**-2 (r/R)**log2(c_mu)``.

    For ``y`` in ``B(x,R)`` and ``r <= R``.  The left side is a step function
    of both radii, so the worst case in each constancy cell sits at the cell
    boundary; the outer radius is taken as a limit from above (a closed ball
    of radius ``R``) and the inner radius at each realized distance.  Spaces
    with more than ``max_exhaustive`` points are sampled over ``(x, R, y)``.
    """
    if c_mu is None:
        c_mu = space.c_mu
    s = math.log2(c_mu)
    coef = c_mu**-2.0
    n, dist, w = space.n, space.dist, space.weight
    order = np.argsort(dist, axis=1, kind="stable")
    sorted_d = np.take_along_axis(dist, order, axis=1)
    csum = np.concatenate([np.zeros((n, 1)), np.cumsum(w[order], axis=1)], axis=1)

    def open_measure(y, r):
        return csum[y, np.searchsorted(sorted_d[y], r, side="left")]

    def closed_measure(y, r):
        return csum[y, np.searchsorted(sorted_d[y], r, side="right")]

    exhaustive = n <= max_exhaustive
    if exhaustive:
        triples = (
            (x, R, y)
            for x in range(n)
            for R in np.unique(dist[x])[1:]
            for y in np.flatnonzero(dist[x] <= R)
        )
    else:
        rng = np.random.default_rng(seed)
        triples = []
        for _ in range(samples):
            x = int(rng.integers(n))
            levels = np.unique(dist[x])[1:]
            R = float(rng.choice(levels))
            y = int(rng.choice(np.flatnonzero(dist[x] <= R)))
            triples.append((x, R, y))

    best, witness, count = math.inf, None, 0
    for x, R, y in triples:
        big = closed_measure(x, R)
        radii = sorted_d[y][(sorted_d[y] > 0) & (sorted_d[y] <= R)]
        radii = np.unique(radii)
        lhs = np.array([open_measure(y, r) for r in radii] + [closed_measure(y, R)]) / big
        rs = np.append(radii, R)
        slack = lhs - coef * (rs / R) ** s
        count += slack.size
        i = int(np.argmin(slack))
        if slack[i] < best:
            best, witness = float(slack[i]), (int(x), float(R), int(y), float(rs[i]))
    if witness is None:
        best = 0.0
    return LowerMassReport(best, count, witness, exhaustive)


def maximal_net(space: MetricMeasureSpace, r: float) -> list[int]:
    """Greedy maximal ``r/2``-separated set, scanning ids in ascending order."""
    if r <= 0:
        raise SpaceError("net radius must be positive")
    nearest = np.full(space.n, np.inf)
    kept = []
    for i in range(space.n):
        if nearest[i] >= 0.5 * r:
            kept.append(i)
            np.minimum(nearest, space.dist[i], out=nearest)
    return kept


def ball_family(space: MetricMeasureSpace, k: int, q: int) -> BallFamily:
    """Balls of radius ``2**(-k q)`` centered at the level-``k`` net."""
    if q < 1:
        raise SpaceError("q must be a positive integer")
    r = 2.0 ** (-k * q)
    centers = maximal_net(space, r)
    fam = BallFamily(k, q, r, tuple(centers))
    covered = fam.membership(space).any(axis=0)
    if not covered.all():
        raise SpaceError(f"level {k} family misses points {np.flatnonzero(~covered)}")
    return fam


def vitali_disjoint(space: MetricMeasureSpace, balls: Sequence[Ball]) -> list[Ball]:
    """Greedy disjoint subfamily whose 5-dilates cover every input ball.

    Balls are scanned by descending radius, ties by center id; a ball is kept
    when its member set misses every kept ball.
    """
    if not balls:
        raise SpaceError("vitali_disjoint needs a nonempty list")
    order = sorted(balls, key=lambda b: (-b.radius, b.center))
    kept, taken = [], np.zeros(space.n, dtype=bool)
    for b in order:
        m = space.members(b)
        if not (m & taken).any():
            kept.append(b)
            taken |= m
    for b in balls:
        m = space.members(b)
        if not any((m <= space.members(k.dilate(5))).all() for k in kept):
            raise SpaceError(f"{b} is not covered by a 5-dilate of a kept ball")
    return kept


def adapted_bump(space: MetricMeasureSpace, ball: Ball) -> np.ndarray:
    """Linear ramp: 1 on the ball, 0 off the 2-dilate, Lipschitz ``1/radius``."""
    if ball.radius <= 0:
        raise SpaceError("ball radius must be positive")
    return np.clip(2.0 - space.dist[ball.center] / ball.radius, 0.0, 1.0)
