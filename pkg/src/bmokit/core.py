"""Mean-oscillation norms, tail estimates and distribution-function tools.

Fields are plain float arrays of length ``space.n``.  Every sup over balls
runs over the canonical ball list, which realizes each member set once per
center and is therefore exact on a finite space.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .space import Ball, MetricMeasureSpace

__all__ = [
    "HypothesisError",
    "BoundViolation",
    "Verdict",
    "TailProfile",
    "DistributionFunction",
    "STROMBERG_CONSTANT",
    "as_field",
    "ball_average",
    "ball_averages",
    "oscillations",
    "bmo_norm",
    "dual_norm",
    "median_oscillations",
    "jn_tail",
    "jn_profile",
    "default_lambda_grid",
    "jn_constant",
    "two_sided_tail",
    "two_sided_check",
    "jn_converse",
    "jn_converse_bound",
    "empirical_distribution",
    "find_t0",
    "stromberg_functional",
    "stromberg_bound",
]

#: ``1 + 2 * sum_{m>=1} (m+1) 2**(-m/2)``, summed in closed form.
STROMBERG_CONSTANT = 1.0 + 2.0 * (1.0 / (1.0 - 2.0**-0.5) ** 2 - 1.0)

TOL = 1e-12


class HypothesisError(ValueError):
    """A lemma's hypothesis does not hold; ``witness`` says where."""

    def __init__(self, message: str, witness: dict | None = None):
        super().__init__(message)
        self.witness = witness or {}


class BoundViolation(AssertionError):
    """A proven bound failed numerically (a bug, never expected)."""

    def __init__(self, message: str, witness: dict | None = None):
        super().__init__(message)
        self.witness = witness or {}


@dataclass
class Verdict:
    status: str  # "pass", "fail" or "n/a"
    detail: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    @property
    def applicable(self) -> bool:
        return self.status != "n/a"


def as_field(space: MetricMeasureSpace, f) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape != (space.n,):
        raise ValueError(f"field has shape {f.shape}, space has {space.n} points")
    if not np.all(np.isfinite(f)):
        raise ValueError("field values must be finite")
    return f


def ball_average(space: MetricMeasureSpace, f, ball: Ball) -> float:
    f = as_field(space, f)
    m = space.members(ball)
    vals = f[m]
    if vals.max() == vals.min():
        return float(vals[0])
    w = space.weight[m]
    return float(w @ vals / w.sum())


def ball_averages(space: MetricMeasureSpace, f) -> np.ndarray:
    """Averages over every canonical ball.

    Balls on which ``f`` is constant get that constant exactly, so constant
    fields have exactly zero oscillation.
    """
    f = as_field(space, f)
    M = space.ball_matrix
    avg = (M @ (space.weight * f)) / space.ball_measures
    hi = np.where(M, f, -np.inf).max(axis=1)
    lo = np.where(M, f, np.inf).min(axis=1)
    avg = np.clip(avg, lo, hi)
    return np.where(hi == lo, lo, avg)


def oscillations(space: MetricMeasureSpace, f) -> np.ndarray:
    """``mean_B |f - f_B|`` for every canonical ball."""
    f = as_field(space, f)
    avg = ball_averages(space, f)
    W = space.ball_matrix * space.weight
    return (W * np.abs(f[None, :] - avg[:, None])).sum(axis=1) / space.ball_measures


def bmo_norm(space: MetricMeasureSpace, f) -> tuple[float, Ball]:
    """BMO norm and the first canonical ball attaining it."""
    osc = oscillations(space, f)
    i = int(np.argmax(osc))
    return float(osc[i]), space.balls[i]


def median_oscillations(space: MetricMeasureSpace, f) -> np.ndarray:
    """``mean_B |f - m_B|`` with ``m_B`` a weighted median of ``f`` on ``B``."""
    f = as_field(space, f)
    order = np.argsort(f, kind="stable")
    W = (space.ball_matrix * space.weight)[:, order]
    cw = np.cumsum(W, axis=1)
    idx = np.argmax(cw >= 0.5 * space.ball_measures[:, None], axis=1)
    med = f[order][idx]
    dev = np.abs(f[order][None, :] - med[:, None])
    return (W * dev).sum(axis=1) / space.ball_measures


def dual_norm(space: MetricMeasureSpace, f) -> float:
    """Sup of ``|int f g|`` over mean-zero ``g`` with ``|g| <= 1/mu(B)`` on a ball.

    For a fixed ball the linear program's optimum is the mean absolute
    deviation from a weighted median, so no optimizer is needed.
    """
    return float(median_oscillations(space, f).max())


# -- John-Nirenberg tails -----------------------------------------------------


@dataclass
class TailProfile:
    ball_index: np.ndarray
    threshold: np.ndarray
    tail: np.ndarray
    ball_measure: np.ndarray
    norm: float

    def to_tsv(self, space: MetricMeasureSpace | None = None) -> str:
        head = "ball\tcenter\tradius\tlambda\ttail\tball_measure"
        lines = [head]
        for b, lam, t, m in zip(self.ball_index, self.threshold, self.tail, self.ball_measure):
            ball = space.balls[b] if space is not None else None
            c = ball.center if ball else -1
            r = ball.radius if ball else float("nan")
            lines.append(f"{b}\t{c}\t{r:.17g}\t{lam:.17g}\t{t:.17g}\t{m:.17g}")
        return "\n".join(lines) + "\n"


def _deviations(space, f):
    avg = ball_averages(space, f)
    return np.abs(f[None, :] - avg[:, None])


def jn_tail(space: MetricMeasureSpace, f, ball: Ball, lam: float) -> float:
    """``mu({x in B : |f(x) - f_B| > lam})``."""
    if lam < 0:
        raise ValueError("threshold must be nonnegative")
    f = as_field(space, f)
    m = space.members(ball)
    dev = np.abs(f[m] - ball_average(space, f, ball))
    return float(space.weight[m][dev > lam].sum())


def default_lambda_grid(norm: float) -> np.ndarray:
    return norm * 2.0 ** np.arange(-4, 7)


def jn_profile(space: MetricMeasureSpace, f, lambdas=None) -> TailProfile:
    """Tail measures over every canonical ball and a threshold grid.

    The default grid is ``||f||_* * 2**i`` for ``i = -4..6``.
    """
    f = as_field(space, f)
    norm, _ = bmo_norm(space, f)
    if lambdas is None:
        if norm == 0:
            raise ValueError("profile normalization needs a non-constant field")
        lambdas = default_lambda_grid(norm)
    lambdas = np.asarray(lambdas, dtype=float)
    W = space.ball_matrix * space.weight
    dev = _deviations(space, f)
    tails = np.stack([(W * (dev > lam)).sum(axis=1) for lam in lambdas], axis=1)
    nb, nl = tails.shape
    return TailProfile(
        ball_index=np.repeat(np.arange(nb), nl),
        threshold=np.tile(lambdas, nb),
        tail=tails.ravel(),
        ball_measure=np.repeat(space.ball_measures, nl),
        norm=norm,
    )


def jn_constant(space: MetricMeasureSpace, f, lambdas=None) -> float:
    """Largest ``A`` with ``tail(B, lam) <= 2 mu(B) exp(-A lam / ||f||_*)``.

    With ``lambdas=None`` the bound is required for every ``lam > 0``.  The
    tail is a right-continuous step function that only drops at the values
    ``|f(x) - f_B|``, so the infimum over ``lam`` is approached just below
    each of them.  Passing a grid restricts the requirement to those
    thresholds, which can only make ``A`` larger.  Returns ``inf`` for
    constant fields.
    """
    f = as_field(space, f)
    norm, _ = bmo_norm(space, f)
    if norm == 0:
        return math.inf
    mu = space.ball_measures
    if lambdas is not None:
        prof = jn_profile(space, f, lambdas)
        keep = (prof.tail > 0) & (prof.threshold > 0)
        if not keep.any():
            return math.inf
        vals = (norm / prof.threshold[keep]) * np.log(
            2 * prof.ball_measure[keep] / prof.tail[keep]
        )
        return float(vals.min())
    dev = np.where(space.ball_matrix, _deviations(space, f), -1.0)
    order = np.argsort(-dev, axis=1, kind="stable")
    ds = np.take_along_axis(dev, order, axis=1)
    ws = np.take_along_axis(space.ball_matrix * space.weight, order, axis=1)
    # weight of {dev >= ds[k]}; ties resolve themselves since min favors the last
    at_least = np.cumsum(ws, axis=1)
    pos = ds > 0
    if not pos.any():
        return math.inf
    with np.errstate(divide="ignore"):
        ratio = (norm / ds) * np.log(2 * mu[:, None] / at_least)
    return float(ratio[pos].min())


def two_sided_tail(space: MetricMeasureSpace, f, ball: Ball, s: float, t: float) -> float:
    """``min(mu{x in B: f >= t}, mu{x in B: f <= s})``."""
    if s > t:
        raise ValueError("need s <= t")
    f = as_field(space, f)
    m = space.members(ball)
    w, v = space.weight[m], f[m]
    return float(min(w[v >= t].sum(), w[v <= s].sum()))


def _worst_two_sided(L, U, v, rate):
    """Max over ``a <= b`` of ``log min(L[a], U[b]) + rate (v[b] - v[a])``.

    ``L`` is non-decreasing and ``U`` non-increasing in the index.
    """
    m = len(v)
    with np.errstate(divide="ignore"):
        logU = np.log(U) + rate * v
    # suffix argmax of logU
    suf_val = np.maximum.accumulate(logU[::-1])[::-1]
    suf_idx = np.empty(m, dtype=int)
    best = m - 1
    for k in range(m - 1, -1, -1):
        if logU[k] >= logU[best]:
            best = k
        suf_idx[k] = best
    negU = -U
    best_val, best_ab = -np.inf, (0, 0)
    for a in range(m):
        if L[a] <= 0:
            continue
        # last b with U[b] >= L[a]
        bstar = int(np.searchsorted(negU, -L[a], side="right")) - 1
        if bstar >= a:
            val = math.log(L[a]) + rate * (v[bstar] - v[a])
            if val > best_val:
                best_val, best_ab = val, (a, bstar)
        lo = max(a, bstar + 1)
        if lo < m and np.isfinite(suf_val[lo]):
            val = suf_val[lo] - rate * v[a]
            if val > best_val:
                best_val, best_ab = val, (a, int(suf_idx[lo]))
    return best_val, best_ab


def two_sided_check(space: MetricMeasureSpace, f, C1: float, rate: float) -> dict:
    """Worst case of ``min(mu{f<=s}, mu{f>=t}) / (C1 mu(B) exp(-rate (t-s)))``.

    Scans every canonical ball and every pair ``s <= t`` of realized values;
    level sets only change at realized values and the ratio grows with
    ``t - s``, so this grid is exhaustive.  Returns the worst ratio with its
    witness; the inequality holds iff the ratio is ``<= 1``.
    """
    f = as_field(space, f)
    v = np.unique(f)
    inv = np.searchsorted(v, f)
    W = space.ball_matrix * space.weight
    per_value = np.zeros((W.shape[0], v.size))
    np.add.at(per_value.T, inv, W.T)
    L = np.cumsum(per_value, axis=1)
    U = np.cumsum(per_value[:, ::-1], axis=1)[:, ::-1]
    worst, witness = -np.inf, None
    for b in range(W.shape[0]):
        val, (a, c) = _worst_two_sided(L[b], U[b], v, rate)
        val -= math.log(C1 * space.ball_measures[b])
        if val > worst:
            worst, witness = val, {"ball": space.balls[b], "s": float(v[a]), "t": float(v[c])}
    ratio = math.exp(worst) if np.isfinite(worst) else 0.0
    return {"ratio": ratio, "witness": witness}


def jn_converse_bound(C1: float, C2: float) -> float:
    return 4.0 * (C1 + 1.0) / C2 * math.exp(2.0 * C2)


def jn_converse(space: MetricMeasureSpace, f, C1: float, C2: float, certify: bool = False) -> float:
    """Norm bound from a two-sided exponential tail hypothesis.

    Checks ``min(mu{f>=t}, mu{f<=s}) <= C1 mu(B) exp(-C2 (t-s))`` on every
    ball, returns ``4 (C1+1) exp(2 C2) / C2`` and asserts the norm obeys it.
    With ``certify`` each ball also gets a ``t0`` from :func:`find_t0` and the
    bound ``mean_B |f - t0| <= 2 (C1+1) exp(2 C2) / C2`` is checked.
    """
    if C1 <= 0 or C2 <= 0:
        raise ValueError("C1 and C2 must be positive")
    f = as_field(space, f)
    chk = two_sided_check(space, f, C1, C2)
    if chk["ratio"] > 1 + 1e-9:
        raise HypothesisError("two-sided tail hypothesis fails", chk["witness"])
    bound = jn_converse_bound(C1, C2)
    norm, ball = bmo_norm(space, f)
    if norm > bound * (1 + TOL):
        raise BoundViolation(f"norm {norm} exceeds bound {bound}", {"ball": ball})
    if certify:
        cap = 2 * (C1 + 1) * math.exp(2 * C2) / C2
        for b in space.balls:
            df = empirical_distribution(space, f, b)
            if df.is_constant:
                continue
            t0 = find_t0(df, C1, C2)
            m = space.members(b)
            dev = space.weight[m] @ np.abs(f[m] - t0) / space.weight[m].sum()
            if dev > cap * (1 + TOL):
                raise BoundViolation("t0 certificate fails", {"ball": b, "t0": t0})
    return bound


# -- distribution functions -----------------------------------------------------


@dataclass
class DistributionFunction:
    """Right-continuous non-decreasing step function into ``[0, 1]``.

    Equals ``floor`` left of ``breakpoints[0]`` and ``values[i]`` on
    ``[breakpoints[i], breakpoints[i+1])``.
    """

    breakpoints: np.ndarray
    values: np.ndarray
    floor: float = 0.0

    def __post_init__(self):
        self.breakpoints = np.asarray(self.breakpoints, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.breakpoints.shape != self.values.shape or self.breakpoints.size == 0:
            raise ValueError("need matching, nonempty breakpoints and values")
        if np.any(np.diff(self.breakpoints) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        seq = np.concatenate([[self.floor], self.values])
        if np.any(np.diff(seq) < 0) or seq.min() < 0 or seq.max() > 1:
            raise ValueError("values must be non-decreasing within [0, 1]")

    def __call__(self, t):
        idx = np.searchsorted(self.breakpoints, t, side="right") - 1
        vals = np.concatenate([[self.floor], self.values])
        return vals[np.asarray(idx) + 1]

    @property
    def is_constant(self) -> bool:
        return bool(np.all(self.values == self.floor))

    def shifted(self, c: float) -> "DistributionFunction":
        return DistributionFunction(self.breakpoints + c, self.values, self.floor)


def empirical_distribution(space: MetricMeasureSpace, f, ball: Ball) -> DistributionFunction:
    """``t -> mu{x in B: f(x) <= t} / mu(B)``."""
    f = as_field(space, f)
    m = space.members(ball)
    v, inv = np.unique(f[m], return_inverse=True)
    mass = np.bincount(inv, weights=space.weight[m])
    cum = np.cumsum(mass) / mass.sum()
    cum[-1] = 1.0
    return DistributionFunction(v, cum, 0.0)


def _pieces(df):
    # piece -1 is (-inf, t_0); piece i is [t_i, t_{i+1})
    vals = np.concatenate([[df.floor], df.values])
    left = np.concatenate([[-np.inf], df.breakpoints])
    right = np.concatenate([df.breakpoints, [np.inf]])
    return vals, left, right


def _t0_hypothesis(df, C1, C2):
    vals, left, right = _pieces(df)
    lhs = np.minimum(vals[:, None], 1.0 - vals[None, :])
    gap = right[None, :] - left[:, None]
    with np.errstate(invalid="ignore"):
        rhs = C1 * np.exp(-C2 * gap)
    upper = np.triu(np.ones_like(lhs, dtype=bool))
    bad = upper & (lhs > rhs + TOL)
    if bad.any():
        a, b = np.argwhere(bad)[0]
        return {"s": float(left[a]), "t": float(right[b]), "lhs": float(lhs[a, b])}
    return None


def _t0_feasible(df, t0, C1, C2):
    vals, left, right = _pieces(df)
    R = (C1 + 1.0) * math.exp(2.0 * C2)
    lo = left <= t0
    with np.errstate(invalid="ignore", over="ignore"):
        ok_lo = vals[lo] <= R * np.exp(-C2 * (t0 - left[lo])) + TOL
        hi = right > t0
        ok_hi = 1.0 - vals[hi] <= R * np.exp(-C2 * (right[hi] - t0)) + TOL
    return bool(ok_lo.all() and ok_hi.all())


def find_t0(df: DistributionFunction, C1: float, C2: float) -> float:
    """Smallest grid point ``t0`` with ``max(df(t0-t), 1-df(t0+t)) <= (C1+1) e^{2C2} e^{-C2 t}``.

    The grid is the breakpoints and their midpoints.  The hypothesis
    ``min(df(s), 1 - df(t)) <= C1 e^{-C2 (t-s)}`` is checked first at the
    extreme ``(s, t)`` of every pair of steps.
    """
    if df.is_constant:
        raise ValueError("find_t0 needs a non-constant distribution function")
    bad = _t0_hypothesis(df, C1, C2)
    if bad is not None:
        raise HypothesisError("distribution function violates the tail hypothesis", bad)
    bp = df.breakpoints
    cands = np.sort(np.concatenate([bp, 0.5 * (bp[:-1] + bp[1:])]))
    for t0 in cands:
        if _t0_feasible(df, float(t0), C1, C2):
            return float(t0)
    raise HypothesisError("no feasible t0 on the breakpoint grid", {"candidates": cands.size})


# -- Stromberg ------------------------------------------------------------------


def stromberg_functional(space: MetricMeasureSpace, f, lam: float) -> tuple[float, np.ndarray]:
    """``sup_B inf_c mu{x in B: |f - c| >= lam} / mu(B)`` and optimal ``c`` per ball.

    A point survives iff its value lies in the open window ``(c-lam, c+lam)``;
    the best window over a sorted value list is found by sliding its left end
    over every value, which covers all pairwise midpoints.
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    f = as_field(space, f)
    order = np.argsort(f, kind="stable")
    fs = f[order]
    n = fs.size
    ends = np.array([i + np.searchsorted(fs[i:] - fs[i], 2 * lam, side="left") for i in range(n)])
    W = (space.ball_matrix * space.weight)[:, order]
    P = np.concatenate([np.zeros((W.shape[0], 1)), np.cumsum(W, axis=1)], axis=1)
    starts = np.arange(n)
    outside = P[:, starts] + (P[:, -1:] - P[:, ends])
    best = np.argmin(outside, axis=1)
    frac = outside[np.arange(W.shape[0]), best] / space.ball_measures
    centers = 0.5 * (fs[best] + fs[ends[best] - 1])
    return float(frac.max()), centers


def stromberg_bound(space: MetricMeasureSpace, f, lam: float, gamma: float, c_D: float) -> Verdict:
    """Check ``||f||_* <= STROMBERG_CONSTANT * lam`` when the lemma applies."""
    value, _ = stromberg_functional(space, f, lam)
    cap = 1.0 / (4.0 * c_D**3)
    detail = {"functional": value, "gamma": gamma, "gamma_cap": cap, "lam": lam}
    if not (0 <= gamma < cap and value <= gamma):
        return Verdict("n/a", detail)
    norm, ball = bmo_norm(space, f)
    detail.update(norm=norm, bound=STROMBERG_CONSTANT * lam)
    if norm > STROMBERG_CONSTANT * lam * (1 + TOL):
        detail["ball"] = ball
        return Verdict("fail", detail)
    return Verdict("pass", detail)
