"""Signal plans: deterministic maps from types to posterior means, built from
three kinds of segment.

* ``reveal``: x = theta.
* ``pool``: an inefficient type is pooled along a matching curve, x = g(theta).
* ``cost``: an efficient type sits at its own cost, x = c(theta).

A pooled inefficient type and the efficient type with ``c(b) = g(theta)``
share the same posterior mean; the matching ODE makes that mean the
conditional expectation of the pair.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq

from .matching import EscapeError, MatchingCurve, integrate_matching, solve_g1, solve_g2
from .model import MarketInstance, ScalarFn

ENDPOINT_TOL = 1e-12


class UnclassifiedRatioWarning(UserWarning):
    pass


class UnclassifiedRatioError(ValueError):
    """No construction is known to be optimal; callers fall back to the LP oracle."""


class NoBracketError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Segment:
    kind: str  # "reveal" | "pool" | "cost"
    lo: float
    hi: float
    curve: Optional[MatchingCurve] = None

    def __post_init__(self):
        if self.kind not in ("reveal", "pool", "cost"):
            raise ValueError(f"unknown segment kind {self.kind!r}")
        if self.kind == "pool" and self.curve is None:
            raise ValueError("pool segment needs a matching curve")
        if self.hi < self.lo:
            raise ValueError("segment interval is reversed")

    @property
    def length(self) -> float:
        return self.hi - self.lo

    def assign(self, theta, inst: MarketInstance):
        if self.kind == "reveal":
            return np.asarray(theta, dtype=float) * 1.0
        if self.kind == "cost":
            return inst.c(theta)
        return self.curve.mean_at(np.clip(theta, self.curve.theta_lo, self.curve.theta_hi))

    def image(self, inst: MarketInstance) -> Tuple[float, float]:
        if self.kind == "reveal":
            return self.lo, self.hi
        if self.kind == "cost":
            return inst.c(self.lo), inst.c(self.hi)
        lo_x = float(self.curve.mean_at(self.hi))
        hi_x = float(self.curve.mean_at(self.lo))
        return lo_x, hi_x

    def trades(self, inst: MarketInstance, theta) -> np.ndarray:
        """Whether types in this segment trade at their assigned mean."""
        th = np.asarray(theta, dtype=float)
        if self.kind == "reveal":
            return inst.c(th) <= th
        return np.ones_like(th, dtype=bool)

    def describe(self) -> Dict:
        d = {"kind": self.kind, "lo": self.lo, "hi": self.hi}
        if self.curve is not None:
            d["curve"] = self.curve.label
            d["x_range"] = [self.curve.x_lo, self.curve.x_hi]
        return d


@dataclass(frozen=True, eq=False)
class SignalPlan:
    segments: Tuple[Segment, ...]
    inst: MarketInstance
    label: str = ""
    meta: Dict = field(default_factory=dict)

    def __post_init__(self):
        segs = tuple(s for s in self.segments if s.length > ENDPOINT_TOL or s.kind != "reveal" and s.length > 0)
        segs = tuple(sorted(segs, key=lambda s: (s.lo, s.hi)))
        object.__setattr__(self, "segments", _merge_reveals(segs))
        self.validate()

    def validate(self):
        segs = self.segments
        if not segs:
            raise ValueError("empty plan")
        if abs(segs[0].lo) > 1e-9 or abs(segs[-1].hi - 1.0) > 1e-9:
            raise ValueError("segments must cover [0, 1]")
        for s, t in zip(segs[:-1], segs[1:]):
            if abs(s.hi - t.lo) > 1e-9:
                raise ValueError(f"gap or overlap between {s.describe()} and {t.describe()}")
        pools = [s for s in segs if s.kind == "pool"]
        costs = [s for s in segs if s.kind == "cost"]
        for p in pools:
            lo_x, hi_x = p.image(self.inst)
            hits = [c for c in costs if abs(c.image(self.inst)[0] - lo_x) < 1e-7 and abs(c.image(self.inst)[1] - hi_x) < 1e-7]
            if len(hits) != 1:
                raise ValueError(f"pool on [{p.lo}, {p.hi}] is not paired with exactly one cost segment")

    def kinds(self) -> List[str]:
        return [s.kind for s in self.segments]

    def segment_of(self, theta) -> np.ndarray:
        th = np.atleast_1d(np.asarray(theta, dtype=float))
        his = np.array([s.hi for s in self.segments])
        idx = np.searchsorted(his, th, side="left")
        return np.clip(idx, 0, len(self.segments) - 1)

    def assign(self, theta):
        th = np.asarray(theta, dtype=float)
        flat = np.atleast_1d(th).ravel()
        idx = self.segment_of(flat)
        out = np.empty_like(flat)
        for k, seg in enumerate(self.segments):
            sel = idx == k
            if np.any(sel):
                out[sel] = seg.assign(flat[sel], self.inst)
        return float(out[0]) if th.ndim == 0 else out.reshape(th.shape)

    def same_as(self, other: "SignalPlan", tol: float = 1e-9) -> bool:
        if self.kinds() != other.kinds():
            return False
        return all(abs(a.lo - b.lo) <= tol and abs(a.hi - b.hi) <= tol for a, b in zip(self.segments, other.segments))

    def summary(self) -> Dict:
        return {"label": self.label, "segments": [s.describe() for s in self.segments], **self.meta}

    def to_csv(self, path: str, n: int = 1000):
        grid = (np.arange(n) + 0.5) / n
        xs = self.assign(grid)
        idx = self.segment_of(grid)
        with open(path, "w", newline="") as fh:
            fh.write("# schema=1\n")
            w = csv.writer(fh)
            w.writerow(["theta", "x", "segment"])
            for t, x, k in zip(grid, xs, idx):
                w.writerow([f"{t:.15g}", f"{x:.15g}", self.segments[k].kind])

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True)


def _merge_reveals(segs: Sequence[Segment]) -> Tuple[Segment, ...]:
    out: List[Segment] = []
    for s in segs:
        if out and s.kind == "reveal" and out[-1].kind == "reveal" and abs(out[-1].hi - s.lo) <= 1e-9:
            out[-1] = Segment("reveal", out[-1].lo, s.hi)
        else:
            out.append(s)
    return tuple(out)


# ---------------------------------------------------------------------------
# ratio diagnostics


def ratio(alpha: Callable, x, theta):
    """t_x(theta) = alpha(theta) / (x - theta)."""
    x = np.asarray(x, dtype=float)
    theta = np.asarray(theta, dtype=float)
    gap = x - theta
    if np.any(gap < 1e-12):
        raise ZeroDivisionError("x - theta below 1e-12")
    out = alpha(theta) / gap
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class RatioClass:
    shape: str  # "increasing" | "convex-with-endpoint-condition" | "other"
    increasing: bool
    convex: bool
    endpoint: bool
    lower: float


def classify_ratio(inst: MarketInstance, alpha: Callable, lower: float = 0.0, n: int = 200,
                   theta_match: Optional[float] = None) -> RatioClass:
    """Grid test of the shape of theta -> alpha(theta)/(x - theta).

    The grid is ``n`` posterior means in (theta*, c(1)] by ``n`` types in
    [lower, theta*].  The convex branch additionally needs the endpoint
    inequality t(lower) > t(theta_match) at x = c(1), where ``theta_match``
    defaults to the bottom of the reveal-pool matching.
    """
    ts = inst.crossings.theta_star
    c1 = inst.c(1.0)
    xs = ts + (c1 - ts) * np.arange(1, n + 1) / n
    th = np.linspace(lower, ts, n)
    T = alpha(th)[None, :] / (xs[:, None] - th[None, :])
    d1 = np.diff(T, axis=1)
    d2 = np.diff(T, n=2, axis=1)
    scale = np.abs(T).max()
    increasing = bool(np.all(d1 > 0))
    convex = bool(np.all(d2 > -1e-14 * scale))
    endpoint = False
    if theta_match is None:
        try:
            theta_match = solve_g2(inst).theta_lo
        except EscapeError:
            theta_match = None
    if theta_match is not None and theta_match > lower:
        endpoint = ratio(alpha, c1, lower) > ratio(alpha, c1, theta_match)
    if increasing:
        shape = "increasing"
    elif convex and endpoint:
        shape = "convex-with-endpoint-condition"
    else:
        shape = "other"
    return RatioClass(shape, increasing, convex, endpoint, lower)


@dataclass(frozen=True)
class PoolRevealPoolParams:
    x_star: float
    theta1: float
    theta2: float
    residual: float
    other_roots: Tuple[float, ...] = ()

    def __post_init__(self):
        if not 0.0 <= self.theta1 < self.theta2:
            raise ValueError("need theta1 < theta2")


def find_x_star(inst: MarketInstance, alpha: Callable, lower_curve: MatchingCurve, top_curve: MatchingCurve,
                n_scan: int = 400) -> PoolRevealPoolParams:
    """Mean where the two pooling branches make the ratio indifferent.

    ``lower_curve`` is the curve anchored at the bottom type (g1 or g_beta),
    ``top_curve`` the one through the crossing (g2).  The difference
    h(x) = t_x(lower(x)) - t_x(top(x)) is positive at c(1) and tends to
    minus infinity at the crossing; all sign changes on a scan are refined
    and the smallest root is returned.
    """
    ts = top_curve.x_lo
    c1 = inst.c(1.0)

    def h(x):
        return ratio(alpha, x, lower_curve.type_at(x)) - ratio(alpha, x, top_curve.type_at(x))

    if not h(c1) > 0:
        raise NoBracketError("ratio difference is not positive at c(1)")
    # geometric spacing near the crossing, where h diverges
    span = c1 - ts
    xs = ts + span * np.geomspace(1e-9, 1.0, n_scan)
    hs = np.array([h(x) for x in xs])
    if not hs[0] < 0:
        raise NoBracketError("ratio difference is not negative near the crossing")
    flips = np.flatnonzero(np.sign(hs[:-1]) * np.sign(hs[1:]) < 0)
    roots = [brentq(h, xs[i], xs[i + 1], xtol=1e-15, rtol=1e-15) for i in flips]
    x_star = roots[0]
    if len(roots) > 1:
        warnings.warn(f"multiple indifference means found: {roots}; using the smallest", UnclassifiedRatioWarning)
    return PoolRevealPoolParams(
        x_star,
        float(lower_curve.type_at(x_star)),
        float(top_curve.type_at(x_star)),
        abs(h(x_star)),
        tuple(roots[1:]),
    )


# ---------------------------------------------------------------------------
# constructions


def build_full_reveal(inst: MarketInstance) -> SignalPlan:
    return SignalPlan((Segment("reveal", 0.0, 1.0),), inst, "full-reveal")


def build_nam(inst: MarketInstance, g2: Optional[MatchingCurve] = None) -> SignalPlan:
    """Reveal-pool negative assortative matching."""
    ts = inst.crossings.theta_star
    g2 = g2 or solve_g2(inst)
    lo = g2.theta_lo
    segs = (Segment("reveal", 0.0, lo), Segment("pool", lo, ts, g2), Segment("cost", ts, 1.0))
    return SignalPlan(segs, inst, "nam", {"theta_star": ts, "theta_lower": lo})


def build_pool_reveal_pool(inst: MarketInstance, alpha: Callable, lower: float = 0.0,
                           g2: Optional[MatchingCurve] = None, label: str = "pool-reveal-pool") -> SignalPlan:
    """Pool-reveal-pool matching; ``lower > 0`` reveals [0, lower) first."""
    ts = inst.crossings.theta_star
    g2 = g2 or solve_g2(inst)
    g1 = solve_g1(inst, theta_start=lower)
    params = find_x_star(inst, alpha, g1, g2)
    top1 = g1.type_at(g1.x_lo)
    if not lower <= params.theta1 < params.theta2 < ts:
        raise ValueError("indifference point does not split the inefficient block")
    b_split = inst.c_inv(params.x_star)
    segs = (
        Segment("reveal", 0.0, lower),
        Segment("pool", lower, params.theta1, g1),
        Segment("reveal", params.theta1, params.theta2),
        Segment("pool", params.theta2, ts, g2),
        Segment("cost", ts, b_split),
        Segment("cost", b_split, 1.0),
    )
    meta = {
        "theta_star": ts,
        "theta_lower": g2.theta_lo,
        "theta_bar": top1,
        "x_star": params.x_star,
        "theta1": params.theta1,
        "theta2": params.theta2,
        "x_star_residual": params.residual,
        "x_star_other_roots": list(params.other_roots),
    }
    if lower > 0:
        meta["theta_beta"] = lower
    return SignalPlan(segs, inst, label, meta)


def theta_beta(inst: MarketInstance, beta: float) -> float:
    """Root of (1 - beta) c(theta) = theta."""
    if not 0.0 <= beta <= 1.0:
        raise ValueError("beta must lie in [0, 1]")
    if beta == 1.0:
        return 0.0
    fn = lambda t: (1.0 - beta) * inst.c(t) - t
    return brentq(fn, 0.0, 1.0, xtol=1e-15, rtol=1e-15)


def surplus_weight(inst: MarketInstance, beta: float) -> ScalarFn:
    """theta - (1 - beta) c(theta): the per-type value of trade in the price/surplus objective."""
    ident = ScalarFn.polynomial([0.0, 1.0])
    return ident - inst.c.scaled(1.0 - beta)


def build_price_surplus_plan(inst: MarketInstance, beta: float) -> SignalPlan:
    ts = inst.crossings.theta_star
    tb = theta_beta(inst, beta)
    g2 = solve_g2(inst)
    lo = g2.theta_lo
    weight = surplus_weight(inst, beta)
    if tb > lo:
        if tb >= ts - ENDPOINT_TOL:
            plan = SignalPlan((Segment("reveal", 0.0, 1.0),), inst, "price-surplus-cutoff")
        else:
            cut = solve_g2(inst, floor=tb, stop_at_floor=True)
            b_top = inst.c_inv(cut.x_hi)
            segs = (
                Segment("reveal", 0.0, tb),
                Segment("pool", tb, ts, cut),
                Segment("cost", ts, b_top),
                Segment("reveal", b_top, 1.0),
            )
            plan = SignalPlan(segs, inst, "price-surplus-cutoff")
        plan.meta.update({"theta_star": ts, "theta_lower": lo, "theta_beta": tb, "route": "cutoff"})
        return plan
    cls = classify_ratio(inst, weight, lower=tb, theta_match=lo)
    if cls.shape == "increasing":
        plan = build_nam(inst, g2)
        plan.meta.update({"theta_beta": tb, "route": "nam"})
        return plan
    if cls.shape == "convex-with-endpoint-condition":
        plan = build_pool_reveal_pool(inst, weight, lower=tb, g2=g2, label="x_beta-nam")
        plan.meta.update({"route": "x_beta-nam"})
        return plan
    raise UnclassifiedRatioError(
        f"price/surplus ratio on [{tb:.6g}, {ts:.6g}] is neither increasing nor convex with the endpoint condition"
    )


def build_volume_plan(inst: MarketInstance, alpha: Callable) -> SignalPlan:
    """Dispatch on the ratio shape for the weighted-volume objective."""
    prof = inst.crossings
    if prof.regime != "gains-at-top":
        return greedy_multicross(inst, alpha)
    g2 = solve_g2(inst)
    cls = classify_ratio(inst, alpha, theta_match=g2.theta_lo)
    if cls.shape == "increasing":
        return build_nam(inst, g2)
    if cls.shape == "convex-with-endpoint-condition":
        return build_pool_reveal_pool(inst, alpha, g2=g2)
    raise UnclassifiedRatioError("weight ratio is neither increasing nor convex with the endpoint condition")


def greedy_multicross(inst: MarketInstance, alpha: Optional[Callable] = None) -> SignalPlan:
    """Greedy right-to-left pairing of inefficient and efficient blocks.

    Take the rightmost unused efficient interval E and the rightmost unused
    inefficient interval I lying to its left.  Integrate the matching curve
    from the bottom of E's mean range (type I.hi) up to c(E.hi):

    * if the matched type stays above I.lo, E is used up and the lower part
      of I stays available for efficient blocks further left;
    * otherwise all of I is pooled and the unused top of E stays available.

    Whatever inefficient mass is left is revealed, as is any efficient mass
    with no inefficient block to its left.
    """
    prof = inst.crossings
    ineff = [list(iv) for iv in prof.inefficient_blocks()]
    eff = [list(iv) for iv in prof.efficient_blocks()]
    if alpha is not None:
        _check_blockwise_increasing(inst, alpha, ineff, eff)
    segs: List[Segment] = []
    steps = []
    while eff:
        E = eff[-1]
        left = [I for I in ineff if I[1] <= E[0] + 1e-15]
        if not left:
            segs.append(Segment("reveal", E[0], E[1]))
            eff.pop()
            continue
        I = left[-1]
        adjacent = abs(I[1] - E[0]) < 1e-12
        curve = integrate_matching(
            inst, E[0], I[1], E[1], floor=I[0], ceiling=I[1] + 1e-9, seed=adjacent,
            stop_at_floor=True, label=f"block[{I[0]:.4g},{I[1]:.4g}]x[{E[0]:.4g},{E[1]:.4g}]",
        )
        b_top = inst.c_inv(curve.x_hi)
        if b_top >= E[1] - 1e-12 and curve.theta_lo > I[0] + 1e-12:
            theta_k = curve.theta_lo
            segs.append(Segment("pool", theta_k, I[1], curve))
            segs.append(Segment("cost", E[0], E[1]))
            eff.pop()
            I[1] = theta_k
            steps.append({"case": "efficient-exhausted", "theta_k": theta_k, "E": [E[0], E[1]]})
        else:
            b_top = min(b_top, E[1])
            segs.append(Segment("pool", I[0], I[1], curve))
            segs.append(Segment("cost", E[0], b_top))
            steps.append({"case": "inefficient-exhausted", "residual": [b_top, E[1]], "I": [I[0], I[1]]})
            ineff.remove(I)
            if E[1] - b_top > 1e-12:
                E[0] = b_top
            else:
                eff.pop()
    for I in ineff:
        if I[1] - I[0] > 0:
            segs.append(Segment("reveal", I[0], I[1]))
    plan = SignalPlan(tuple(segs), inst, "greedy", {"regime": prof.regime, "steps": steps})
    if prof.regime == "gains-at-top":
        plan.meta.update({"theta_star": prof.theta_star, "theta_lower": plan.segments[0].hi if plan.segments[0].kind == "reveal" else 0.0})
    return plan


def _check_blockwise_increasing(inst, alpha, ineff, eff):
    for E in eff:
        xs = np.linspace(inst.c(E[0]), inst.c(E[1]), 41)[1:]
        for I in ineff:
            if I[1] > E[0] + 1e-15:
                continue
            th = np.linspace(I[0], I[1], 200)
            T = alpha(th)[None, :] / (xs[:, None] - th[None, :])
            if not np.all(np.diff(T, axis=1) > 0):
                raise UnclassifiedRatioError("weight ratio is not increasing on an inefficient block")
