"""Multi-scale construction of partitions of unity with small mean oscillation.

Given sets ``E_1..E_N`` that are sparse in every ball, in the sense that
some ``E_j`` occupies at most a ``c_D**(-4 lam)`` fraction of it, the
construction produces ``f_1..f_N`` with ``sum f_j = 1``, ``0 <= f_j <= 1``,
``f_j = 0`` on ``E_j`` and ``||f_j||_* = O(1/lam)``.

The iteration runs over levels ``k`` with balls of radius ``2**(-k q)``
centered on maximal nets.  On a finite space it stops at the first level
whose balls are singletons; later levels would repeat it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import Verdict, bmo_norm, ball_averages, jn_constant
from .space import Ball, BallFamily, MetricMeasureSpace, adapted_bump, ball_family

__all__ = [
    "UchiyamaHypothesisError",
    "ConstructionError",
    "ConstructionParams",
    "LevelRecord",
    "ConstructionState",
    "as_mask",
    "g_value",
    "g_values",
    "g_monotonicity_check",
    "choose_q",
    "q_inequality_holds",
    "density_functional",
    "trivial_construction",
    "uchiyama_construct",
    "level_bound_check",
    "verify_construction",
    "necessity_check",
]

INV_TOL = 1e-10
INVARIANTS = ("sum", "range", "g_bound", "drop", "monotone", "mass", "lipschitz")


class UchiyamaHypothesisError(ValueError):
    """The sets are too dense for the requested ``lam``."""

    def __init__(self, density: float, lam: float, lam_max: float, c_D: float):
        super().__init__(
            f"density {density:.6g} exceeds c_D**(-4 lam) = {c_D ** (-4 * lam):.6g} "
            f"(lam={lam:g}, c_D={c_D:.6g}); largest admissible lam is {lam_max:.6g}"
        )
        self.density = density
        self.lam = lam
        self.lam_max = lam_max
        self.c_D = c_D


class ConstructionError(AssertionError):
    """An invariant of the construction failed."""

    def __init__(self, message: str, violations: dict | None = None):
        super().__init__(message)
        self.violations = violations or {}


def as_mask(space: MetricMeasureSpace, E) -> np.ndarray:
    """Boolean mask from a mask or a collection of point ids."""
    arr = np.asarray(E)
    if arr.dtype == bool:
        if arr.shape != (space.n,):
            raise ValueError(f"mask has shape {arr.shape}, space has {space.n} points")
        return arr.copy()
    mask = np.zeros(space.n, dtype=bool)
    ids = arr.astype(int).ravel()
    if ids.size and (ids.min() < 0 or ids.max() >= space.n):
        raise ValueError("point id out of range")
    mask[ids] = True
    return mask


def _masks(space, sets):
    return np.array([as_mask(space, E) for E in sets], dtype=bool).reshape(len(sets), space.n)


def g_values(space: MetricMeasureSpace, masks: np.ndarray, members: np.ndarray, c_D: float) -> np.ndarray:
    """``log_{c_D}(mu(B) / mu(E_j & B))`` for each set and each ball row.

    ``inf`` when ``E_j`` misses ``B``; exactly 0 when ``B`` lies inside ``E_j``.
    """
    w = space.weight
    mu_b = members @ w
    mu_eb = members @ (masks * w).T  # (n_balls, N)
    with np.errstate(divide="ignore"):
        g = np.log(mu_b[:, None] / mu_eb) / math.log(c_D)
    inside = ~(members[:, None, :] & ~masks[None, :, :]).any(axis=2)
    g = np.where(inside, 0.0, np.maximum(g, 0.0))
    return g.T


def g_value(space: MetricMeasureSpace, E, ball: Ball, c_D: float) -> float:
    if c_D <= 1:
        raise ValueError("c_D must exceed 1")
    m = space.members(ball)[None, :]
    return float(g_values(space, as_mask(space, E)[None, :], m, c_D)[0, 0])


def g_monotonicity_check(
    space: MetricMeasureSpace, E, B1: Ball, B2: Ball, k: float, c_D: float
) -> Verdict:
    """``g(B1) >= g(B2) - k`` for nested balls with ``c_D**k mu(B1) >= mu(B2)``."""
    m1, m2 = space.members(B1), space.members(B2)
    mu1, mu2 = space.measure(m1), space.measure(m2)
    if not (m1 <= m2).all() or c_D**k * mu1 < mu2:
        return Verdict("n/a", {"nested": bool((m1 <= m2).all()), "mu1": mu1, "mu2": mu2})
    g1, g2 = g_value(space, E, B1, c_D), g_value(space, E, B2, c_D)
    ok = g1 >= g2 - k - 1e-12 if math.isfinite(g2) else g1 == math.inf
    return Verdict("pass" if ok else "fail", {"g1": g1, "g2": g2, "k": k})


def q_inequality_holds(q: int, c_D: float, N: int) -> bool:
    return 1 + N * c_D**6 * q <= 2.0**q


def choose_q(c_D: float, N: int) -> int:
    """Smallest positive ``q`` with ``1 + N c_D**6 q <= 2**q``."""
    if c_D <= 1 or N < 2:
        raise ValueError("need c_D > 1 and N >= 2")
    q = 1
    while not q_inequality_holds(q, c_D, N):
        q += 1
    return q


def density_functional(space: MetricMeasureSpace, sets, c_D: float | None = None) -> tuple[float, float]:
    """``sup_B min_j mu(E_j & B)/mu(B)`` and the largest admissible ``lam``.

    The second value solves ``value = c_D**(-4 lam)``; it is ``inf`` when the
    density is zero.
    """
    masks = _masks(space, sets)
    if masks.shape[0] < 2:
        raise ValueError("need at least two sets")
    frac = (space.ball_matrix @ (masks * space.weight).T) / space.ball_measures[:, None]
    value = float(frac.min(axis=1).max())
    if c_D is None:
        c_D = space.c_D
    lam_max = math.inf if value == 0 else -math.log(value) / (4 * math.log(c_D))
    return value, lam_max


def trivial_construction(space: MetricMeasureSpace, sets) -> np.ndarray:
    """``f_j = 1[E_j^c] / sum_k 1[E_k^c]``, the small-``lam`` solution."""
    masks = _masks(space, sets)
    comp = ~masks
    count = comp.sum(axis=0)
    if (count == 0).any():
        raise ValueError(f"points {np.flatnonzero(count == 0)} lie in every set")
    return comp / count


@dataclass
class ConstructionParams:
    lam: float
    N: int
    q: int
    c_D: float
    depth: int
    trivial_below: float = 1.5

    @property
    def q_admissible(self) -> bool:
        return q_inequality_holds(self.q, self.c_D, self.N)

    def radius(self, k: int) -> float:
        return 2.0 ** (-k * self.q)

    @classmethod
    def for_space(
        cls,
        space: MetricMeasureSpace,
        lam: float,
        N: int,
        q: int | None = None,
        c_D: float | None = None,
        depth: int | None = None,
        trivial_below: float = 1.5,
    ) -> "ConstructionParams":
        """Defaults: measured ``c_D``, minimal admissible ``q``, and the first
        depth whose radius drops below the minimum interpoint distance."""
        if c_D is None:
            c_D = space.c_D
        if q is None:
            q = choose_q(c_D, N)
        if depth is None:
            depth = full_depth(space, q)
        return cls(lam, N, q, c_D, depth, trivial_below)


def full_depth(space: MetricMeasureSpace, q: int) -> int:
    h = 1
    while 2.0 ** (-h * q) >= space.min_distance:
        h += 1
    return h


@dataclass
class LevelRecord:
    level: int
    radius: float
    centers: tuple[int, ...]
    fields: np.ndarray                        # (N, n) values f_{j,k}
    families: list[list[int]]                 # per j, centers of A_{j,k}
    owners: dict[int, int] = field(default_factory=dict)   # center -> s(B)
    removed: np.ndarray | None = None          # (N, n) v_{j,k}
    added: np.ndarray | None = None            # (N, n) w_{j,k}


@dataclass
class ConstructionState:
    params: ConstructionParams
    route: str                                  # "multiscale" or "trivial"
    levels: list[LevelRecord] = field(default_factory=list)
    violations: dict[str, list] = field(default_factory=lambda: {k: [] for k in INVARIANTS})
    lipschitz_checked: bool = False
    tol: float = INV_TOL

    @property
    def violation_counts(self) -> dict[str, int]:
        return {k: len(v) for k, v in self.violations.items()}

    @property
    def ok(self) -> bool:
        return not any(self.violations.values())

    def final_fields(self) -> np.ndarray:
        return self.levels[-1].fields / self.params.lam


def _bound_check(state, name, level, bad, detail):
    if bad:
        state.violations[name].append({"level": level, **detail})


def _check_level(state, space, masks, fam, prev, cur, rec, params, removal_support):
    """Record violations of every invariant at one level."""
    lam, k, tol = params.lam, rec.level, state.tol
    total = cur.sum(axis=0)
    err = float(np.max(np.abs(total - lam)))
    _bound_check(state, "sum", k, err > tol, {"max_error": err})
    lo, hi = float(cur.min()), float(cur.max())
    _bound_check(state, "range", k, lo < -tol or hi > lam + tol, {"min": lo, "max": hi})

    members = fam.membership(space)
    g = g_values(space, masks, members, params.c_D)
    sup = np.where(members[None, :, :], cur[:, None, :], -np.inf).max(axis=2)
    over = sup - g
    if (over > tol).any():
        j, b = np.unravel_index(np.argmax(over), over.shape)
        state.violations["g_bound"].append(
            {"level": k, "j": int(j), "center": fam.centers[b], "sup": float(sup[j, b]),
             "g": float(g[j, b])}
        )

    if prev is not None:
        drop = float((prev - cur).max())
        limit = params.c_D**3 * params.q
        _bound_check(state, "drop", k, drop > limit + tol, {"drop": drop, "limit": limit})
        outside = ~removal_support
        if outside.any():
            dec = float(np.where(outside, prev - cur, -np.inf).max())
            _bound_check(state, "monotone", k, dec > tol, {"decrease": dec})
        mass = float(np.max(np.abs(rec.added.sum(axis=0) - rec.removed.sum(axis=0))))
        _bound_check(state, "mass", k, mass > tol, {"imbalance": mass})

    if params.q_admissible:
        state.lipschitz_checked = True
        slope = 2.0 ** ((k + 1) * params.q)
        diff = np.abs(cur[:, :, None] - cur[:, None, :])
        excess = diff - slope * space.dist[None, :, :]
        worst = float(excess.max())
        _bound_check(state, "lipschitz", k, worst > tol * max(1.0, slope), {"excess": worst})


def uchiyama_construct(
    space: MetricMeasureSpace,
    sets,
    lam: float,
    params: ConstructionParams | None = None,
    strict: bool = True,
    tol: float = INV_TOL,
) -> tuple[np.ndarray, ConstructionState]:
    """Build ``f_1..f_N`` and the full per-level trace.

    Below ``params.trivial_below`` the closed-form indicator quotient is
    returned instead.  Every invariant is checked at every level; with
    ``strict`` any violation raises :class:`ConstructionError`, otherwise
    violations are only recorded on the state.  ``tol`` is the slack
    allowed in every invariant.
    """
    masks = _masks(space, sets)
    N = masks.shape[0]
    if N < 2:
        raise ValueError("need at least two sets")
    if lam <= 0:
        raise ValueError("lam must be positive")
    if params is None:
        params = ConstructionParams.for_space(space, lam, N)
    if params.lam != lam or params.N != N:
        raise ValueError("params were built for a different lam or N")
    if params.c_D <= 1:
        raise ValueError("c_D must exceed 1")

    if lam < params.trivial_below:
        f = trivial_construction(space, masks)
        state = ConstructionState(params, "trivial", tol=tol)
        rec = LevelRecord(0, math.inf, (), f * lam, [[] for _ in range(N)])
        state.levels.append(rec)
        return f, state

    if space.diameter >= 1:
        raise ValueError("normalize the space first (diameter must be below 1)")
    density, lam_max = density_functional(space, masks, params.c_D)
    if density > params.c_D ** (-4 * lam) * (1 + 1e-12):
        raise UchiyamaHypothesisError(density, lam, lam_max, params.c_D)

    state = ConstructionState(params, "multiscale", tol=tol)
    threshold = 4 * lam * (1 - 1e-12)

    def owner(four_g):
        hits = np.flatnonzero(four_g >= threshold)
        if hits.size == 0:
            raise ConstructionError("s(B) undefined: no set is sparse enough in 4B")
        return int(hits[0])

    root = ball_family(space, 0, params.q)
    g4 = g_values(space, masks, root.membership(space, 4.0), params.c_D)
    s0 = owner(g4[:, 0])
    f = np.zeros((N, space.n))
    f[s0] = lam
    rec = LevelRecord(0, root.radius, root.centers, f.copy(), [[] for _ in range(N)], {root.centers[0]: s0})
    state.levels.append(rec)
    _check_level(state, space, masks, root, None, f, rec, params, None)

    for k in range(1, params.depth + 1):
        fam = ball_family(space, k, params.q)
        members = fam.membership(space)
        g = g_values(space, masks, members, params.c_D)
        g4 = g_values(space, masks, fam.membership(space, 4.0), params.c_D)
        sup = np.where(members[None, :, :], f[:, None, :], -np.inf).max(axis=2)
        bumps = np.array([adapted_bump(space, b) for b in fam.balls])
        twice = fam.membership(space, 2.0)

        families = [np.flatnonzero(sup[j] > g[j]).tolist() for j in range(N)]
        owners = {}
        removed = np.zeros_like(f)
        added = np.zeros_like(f)
        reduced = f.copy()
        support = np.zeros((N, space.n), dtype=bool)
        for j in range(N):
            rem = f[j].copy()
            for b in families[j]:
                a = np.minimum(params.q * bumps[b], rem)
                rem = rem - a
                s = owners.setdefault(fam.centers[b], owner(g4[:, b]))
                added[s] += a
                support[j] |= twice[b]
            reduced[j] = rem
            removed[j] = f[j] - rem
        new = reduced + added
        rec = LevelRecord(
            k, fam.radius, fam.centers, new.copy(),
            [[fam.centers[b] for b in fams] for fams in families], owners, removed, added,
        )
        state.levels.append(rec)
        _check_level(state, space, masks, fam, f, new, rec, params, support)
        f = new

    if strict and not state.ok:
        bad = {k: v for k, v in state.violations.items() if v}
        raise ConstructionError(f"construction invariants failed: {sorted(bad)}", bad)
    return state.final_fields(), state


def _ball_radius_interval(space, ball):
    row = space.dist[ball.center]
    inside = row < ball.radius
    left = float(row[inside].max())
    right = float(row[~inside].min()) if (~inside).any() else math.inf
    return left, right


def level_bound_check(state: ConstructionState, space: MetricMeasureSpace, sets) -> Verdict:
    """``f_{j,h} <= g_j(B) - log2(r/r_h)/3 + 8*2**q + 6`` on balls with ``r <= 4 r_h``.

    Each canonical ball stands for an interval of radii with the same
    members; the right side is smallest at the largest admissible radius,
    which is where it is evaluated.
    """
    if state.route != "multiscale":
        return Verdict("n/a", {"route": state.route})
    masks = _masks(space, sets)
    p = state.params
    const = 8 * 2.0**p.q + 6
    intervals = [_ball_radius_interval(space, b) for b in space.balls]
    g = g_values(space, masks, space.ball_matrix, p.c_D)
    worst, checked = math.inf, 0
    for rec in state.levels:
        rh = rec.radius
        sup = np.where(space.ball_matrix[None], rec.fields[:, None, :], -np.inf).max(axis=2)
        for i, (left, right) in enumerate(intervals):
            if left >= 4 * rh:
                continue
            r = min(right, 4 * rh)
            rhs = g[:, i] - math.log2(r / rh) / 3 + const
            worst = min(worst, float((rhs - sup[:, i]).min()))
            checked += 1
    status = "pass" if worst >= -INV_TOL else "fail"
    return Verdict(status, {"min_slack": worst, "balls_checked": checked})


def verify_construction(
    space: MetricMeasureSpace, fields, sets, lam: float, c_D: float | None = None, tol: float = 1e-12
) -> dict:
    """Summary of the partition-of-unity properties and norm sizes."""
    f = np.asarray(fields, dtype=float)
    masks = _masks(space, sets)
    sum_err = float(np.max(np.abs(f.sum(axis=0) - 1.0)))
    range_bad = int(((f < 0) | (f > 1 + tol)).sum())
    on_sets = [float(f[j][masks[j]].max()) if masks[j].any() else 0.0 for j in range(len(f))]
    norms = [bmo_norm(space, fj)[0] for fj in f]
    report = {
        "lam": lam,
        "c_D": c_D if c_D is not None else space.c_D,
        "sum_error": sum_err,
        "range_violations": range_bad,
        "max_on_own_set": max(on_sets),
        "norms": norms,
        "lam_times_max_norm": lam * max(norms),
    }
    report["ok"] = sum_err <= tol and range_bad == 0 and report["max_on_own_set"] == 0.0
    return report


def necessity_check(
    space: MetricMeasureSpace, fields, sets, lam: float, c_2: float, c_D: float | None = None
) -> Verdict:
    """Run the converse argument ball by ball.

    For each canonical ball pick ``j0`` with the largest average (at least
    ``1/N``), then ``mu(B & E_j0)/mu(B)`` is dominated by the tail of
    ``|f_j0 - (f_j0)_B|`` at level ``1/N``, which John-Nirenberg bounds by
    ``2 exp(-A/(N ||f_j0||_*))``.
    """
    f = np.asarray(fields, dtype=float)
    masks = _masks(space, sets)
    N = f.shape[0]
    if c_D is None:
        c_D = space.c_D
    norms = np.array([bmo_norm(space, fj)[0] for fj in f])
    pre = {
        "sum_error": float(np.max(np.abs(f.sum(axis=0) - 1.0))),
        "range_ok": bool(((f >= -1e-12) & (f <= 1 + 1e-12)).all()),
        "vanish_ok": all(not (f[j][masks[j]] > 1e-12).any() for j in range(N)),
        "max_norm": float(norms.max()),
        "norm_cap": c_2 / lam,
    }
    if not (pre["sum_error"] <= 1e-10 and pre["range_ok"] and pre["vanish_ok"]
            and pre["max_norm"] <= pre["norm_cap"]):
        return Verdict("n/a", pre)

    M, mu = space.ball_matrix, space.ball_measures
    W = M * space.weight
    avgs = np.array([ball_averages(space, fj) for fj in f])       # (N, nb)
    j0 = np.argmax(avgs, axis=0)
    nb = M.shape[0]
    rows = np.arange(nb)
    chosen = f[j0]                                                  # (nb, n)
    level = np.minimum(1.0 / N, avgs[j0, rows])
    ratio = (W * masks[j0]).sum(axis=1) / mu
    tail = (W * (np.abs(chosen - avgs[j0, rows][:, None]) >= level[:, None])).sum(axis=1) / mu
    A = np.array([jn_constant(space, fj) for fj in f])
    with np.errstate(divide="ignore", invalid="ignore"):
        jn = np.where(norms[j0] > 0, 2 * np.exp(-A[j0] * level / norms[j0]), 0.0)
    bad_tail = np.flatnonzero(ratio > tail + 1e-12)
    bad_jn = np.flatnonzero(tail > jn * (1 + 1e-12) + 1e-15)
    density = float(ratio.max())
    detail = {
        **pre,
        "density": density,
        "jn_bound": float(jn.max()),
        "target": c_D ** (-4 * lam),
        "empirical_lam": math.inf if density == 0 else -math.log(density) / (4 * math.log(c_D)),
        "tail_failures": [space.balls[i] for i in bad_tail[:5]],
        "jn_failures": [space.balls[i] for i in bad_jn[:5]],
    }
    return Verdict("pass" if bad_tail.size == 0 and bad_jn.size == 0 else "fail", detail)
