"""Discretization, feasibility residuals, objective values and dual
certificates for signal plans.

A plan is discretized on ``n`` uniform type cells and ``n`` uniform mean
bins.  Every type cell is cut at the preimages of the bin edges, so each
piece maps into a single bin; pieces carry exact (Gauss) masses and
conditional means.  The martingale residual of a bin is then
``sum(mass * (x - theta))`` over its pieces, which is zero for an exact
plan up to quadrature and curve error.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional

import numpy as np
from numpy.polynomial.legendre import leggauss

from .matching import MatchingCurve
from .model import MarketInstance
from .signals import SignalPlan, surplus_weight

GAUSS_X, GAUSS_W = leggauss(6)
ZP_TOL = 1e-7
GAP_TOL = 1e-6
SUPPORT_MASS = 1e-12


class CertificateViolation(RuntimeError):
    def __init__(self, message: str, report=None):
        self.report = report
        super().__init__(message)


class NegativeGapError(RuntimeError):
    pass


class ObjectiveConsistencyWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Objective:
    """``volume`` with weight ``alpha`` or ``price-surplus`` with ``beta``."""

    kind: str
    alpha: Optional[Callable] = None
    beta: Optional[float] = None

    def __post_init__(self):
        if self.kind == "volume" and self.alpha is None:
            raise ValueError("volume objective needs a weight")
        if self.kind == "price-surplus" and (self.beta is None or not 0 <= self.beta <= 1):
            raise ValueError("price-surplus objective needs beta in [0, 1]")
        if self.kind not in ("volume", "price-surplus"):
            raise ValueError(f"unknown objective {self.kind!r}")

    @classmethod
    def volume(cls, alpha: Callable) -> "Objective":
        return cls("volume", alpha=alpha)

    @classmethod
    def price_surplus(cls, beta: float) -> "Objective":
        return cls("price-surplus", beta=beta)

    def weight(self, inst) -> Callable:
        """Per-type value of trade (the martingale-rewritten form for price/surplus)."""
        if self.kind == "volume":
            return self.alpha
        return surplus_weight(inst, self.beta)


def const_weight(value: float = 1.0) -> Callable:
    from .model import ScalarFn

    return ScalarFn.constant(value, kind="weight")


# ---------------------------------------------------------------------------
# discrete signals


@dataclass(frozen=True, eq=False)
class DiscreteSignal:
    """Sparse joint distribution over (type cell, mean bin).

    Each entry is a piece of a type cell sent to one mean bin, with its
    mass, the conditional means of type, assigned mean and cost, a
    representative support point and a trade flag.  ``lo == hi`` marks a
    point-mass type (finite-type markets).
    """

    n_rows: int
    x_edges: np.ndarray
    cell_mass: np.ndarray
    row: np.ndarray
    col: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    mass: np.ndarray
    theta: np.ndarray
    x: np.ndarray
    cost: np.ndarray
    trade: np.ndarray
    rep_theta: np.ndarray
    rep_x: np.ndarray
    halfcell: float
    f: Optional[Callable] = None
    col_x: Optional[np.ndarray] = None

    @property
    def n_cols(self) -> int:
        return self.x_edges.size - 1 if self.col_x is None else self.col_x.size

    def matrix(self) -> np.ndarray:
        out = np.zeros((self.n_rows, self.n_cols))
        np.add.at(out, (self.row, self.col), self.mass)
        return out

    def column_means(self) -> np.ndarray:
        tot = np.bincount(self.col, self.mass, self.n_cols)
        mx = np.bincount(self.col, self.mass * self.x, self.n_cols)
        with np.errstate(invalid="ignore"):
            return np.where(tot > 0, mx / np.where(tot > 0, tot, 1), np.nan)

    @classmethod
    def from_table(cls, types, prior, x_values, table, costs) -> "DiscreteSignal":
        """Finite signal given as a (types x means) mass table."""
        types = np.asarray(types, dtype=float)
        xv = np.asarray(x_values, dtype=float)
        tab = np.asarray(table, dtype=float)
        costs = np.asarray(costs, dtype=float)
        i, j = np.nonzero(tab > 0)
        m = tab[i, j]
        edges = np.concatenate([[xv[0] - 0.5], 0.5 * (xv[:-1] + xv[1:]), [xv[-1] + 0.5]])
        return cls(
            types.size, edges, np.asarray(prior, dtype=float), i, j, types[i], types[i], m, types[i],
            xv[j], costs[i], costs[i] <= xv[j] + 1e-12, types[i], xv[j], 0.0, None, xv,
        )


def _piece_cuts(plan: SignalPlan, inst: MarketInstance, edges: np.ndarray, x_edges: np.ndarray) -> np.ndarray:
    cuts = [edges, inst.f.breakpoints, inst.c.breakpoints, np.array(inst.crossings.crossings)]
    for seg in plan.segments:
        cuts.append(np.array([seg.lo, seg.hi]))
        x_lo, x_hi = seg.image(inst)
        inner = x_edges[(x_edges > x_lo) & (x_edges < x_hi)]
        if inner.size == 0:
            continue
        if seg.kind == "pool":
            pre = seg.curve.type_at(inner)
        elif seg.kind == "cost":
            pre = inst.c_inv(inner)
        else:
            pre = inner
        cuts.append(pre[(pre > seg.lo) & (pre < seg.hi)])
    pts = np.unique(np.clip(np.concatenate(cuts), 0.0, 1.0))
    # drop slivers produced by round-off
    keep = np.concatenate([[True], np.diff(pts) > 1e-14])
    return pts[keep]


def discretize(plan: SignalPlan, inst: MarketInstance, n: int) -> DiscreteSignal:
    if n < 10:
        raise ValueError("need at least 10 cells")
    edges = np.linspace(0.0, 1.0, n + 1)
    x_edges = edges
    pts = _piece_cuts(plan, inst, edges, x_edges)
    lo, hi = pts[:-1], pts[1:]
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    nodes = mid[:, None] + half[:, None] * GAUSS_X[None, :]
    wts = half[:, None] * GAUSS_W[None, :] * inst.f(nodes)
    seg_idx = plan.segment_of(mid)
    xs_nodes = np.empty_like(nodes)
    rep_x = np.empty_like(mid)
    trade = np.empty(mid.size, dtype=bool)
    for k, seg in enumerate(plan.segments):
        sel = seg_idx == k
        if not np.any(sel):
            continue
        xs_nodes[sel] = seg.assign(nodes[sel], inst)
        rep_x[sel] = seg.assign(mid[sel], inst)
        trade[sel] = seg.trades(inst, mid[sel])
    mass = wts.sum(axis=1)
    theta = (wts * nodes).sum(axis=1) / mass
    x = (wts * xs_nodes).sum(axis=1) / mass
    cost = (wts * inst.c(nodes)).sum(axis=1) / mass
    row = np.clip(np.searchsorted(edges, mid, side="right") - 1, 0, n - 1)
    col = np.clip(np.searchsorted(x_edges, rep_x, side="right") - 1, 0, n - 1)
    cell_mass = np.diff(inst.F(edges))
    return DiscreteSignal(n, x_edges, cell_mass, row, col, lo, hi, mass, theta, x, cost, trade, mid, rep_x,
                          0.5 / n, inst.f)


@dataclass(frozen=True)
class FeasibilityReport:
    bp_residual: float
    m_residual: float
    pm_residual: float
    m_residual_total: float

    def ok(self, tol: float = 1e-6) -> bool:
        return max(self.bp_residual, self.m_residual, self.pm_residual) <= tol


def check_feasibility(ds: DiscreteSignal, inst) -> FeasibilityReport:
    rows = np.bincount(ds.row, ds.mass, ds.n_rows)
    bp = float(np.max(np.abs(rows - ds.cell_mass)))
    col_m = np.bincount(ds.col, ds.mass * (ds.x - ds.theta), ds.n_cols)
    c_hat = np.minimum(ds.theta, inst.c(ds.theta))
    bad = c_hat > ds.x + ds.halfcell + 1e-12
    pm = float(ds.mass[bad].max()) if np.any(bad) else 0.0
    return FeasibilityReport(bp, float(np.max(np.abs(col_m))), pm, float(np.abs(col_m).sum()))


@dataclass(frozen=True)
class ObjectiveValue:
    value: float
    theta_form: float
    difference: float


def _weight_integral(ds: DiscreteSignal, weight: Callable) -> np.ndarray:
    out = weight(ds.theta) * ds.mass
    wide = ds.hi > ds.lo
    if np.any(wide) and ds.f is not None:
        mid = 0.5 * (ds.lo[wide] + ds.hi[wide])
        half = 0.5 * (ds.hi[wide] - ds.lo[wide])
        nodes = mid[:, None] + half[:, None] * GAUSS_X[None, :]
        w = half[:, None] * GAUSS_W[None, :] * ds.f(nodes)
        out[wide] = (w * weight(nodes)).sum(axis=1)
    return out


def evaluate_objective(ds: DiscreteSignal, inst, objective: Objective) -> ObjectiveValue:
    tr = ds.trade
    if objective.kind == "volume":
        v = float(_weight_integral(ds, objective.alpha)[tr].sum())
        return ObjectiveValue(v, v, 0.0)
    keep = 1.0 - objective.beta
    x_form = float(np.sum((ds.x[tr] - keep * ds.cost[tr]) * ds.mass[tr]))
    th_form = float(np.sum((ds.theta[tr] - keep * ds.cost[tr]) * ds.mass[tr]))
    diff = x_form - th_form
    m_tot = check_feasibility(ds, inst).m_residual_total
    if abs(diff) > 10 * m_tot + 1e-14:
        warnings.warn(f"price/surplus forms differ by {diff:.3e} (martingale residual {m_tot:.3e})",
                      ObjectiveConsistencyWarning)
    return ObjectiveValue(x_form, th_form, diff)


def plan_value(plan: SignalPlan, inst: MarketInstance, objective: Objective) -> float:
    """Continuum objective value: integral of the trade weight over trading types."""
    weight = objective.weight(inst)
    total = 0.0
    for seg in plan.segments:
        pts = np.unique(np.concatenate([[seg.lo, seg.hi], inst.f.breakpoints, inst.c.breakpoints,
                                        np.array(inst.crossings.crossings)]))
        pts = pts[(pts >= seg.lo) & (pts <= seg.hi)]
        for a, b in zip(pts[:-1], pts[1:]):
            m = 0.5 * (a + b)
            if not seg.trades(inst, np.array([m]))[0]:
                continue
            gx, gw = leggauss(20)
            nodes = m + 0.5 * (b - a) * gx
            total += float(np.sum(0.5 * (b - a) * gw * inst.f(nodes) * weight(nodes)))
    return total


# ---------------------------------------------------------------------------
# dual certificates


QUAD_X, QUAD_W = leggauss(8)


@dataclass(frozen=True, eq=False)
class _LogBranch:
    """log(q / C) on one branch: J(x) = -integral from x_anchor to x of ds / (s - a(s)).

    The integral is taken by Gauss quadrature on the matching curve's knot
    intervals.  A ``singular`` branch starts at the crossing, where
    x - a(x) ~ (1 - L)(x - x0); there the term -1/((1 - L) u) is split
    off and integrated exactly, leaving a bounded remainder.
    """

    curve: MatchingCurve
    x0: float
    x_lo: float
    x_hi: float
    x_anchor: float
    singular: bool
    power: float
    knots: np.ndarray
    cum: np.ndarray

    @classmethod
    def build(cls, curve: MatchingCurve, x_lo: float, x_hi: float, x_anchor: float, singular: bool,
              seed_slope: float = 0.0):
        inner = curve.xs[(curve.xs > x_lo) & (curve.xs < x_hi)]
        knots = np.concatenate([[x_lo], inner, [x_hi]])
        power = -1.0 / (1.0 - seed_slope) if singular else 0.0
        br = cls(curve, x_lo, x_lo, x_hi, x_anchor, singular, power, knots, np.zeros(knots.size))
        inc = br._remainder_integral(knots[:-1], knots[1:])
        cum = np.concatenate([[0.0], np.cumsum(inc)])
        object.__setattr__(br, "cum", cum)
        ref = br._remainder(np.array([x_anchor]))[0]
        object.__setattr__(br, "cum", cum - ref)
        return br

    def _gap(self, x):
        """x - a(x); on the knot interval touching the crossing the cubic is
        expanded about it so the difference carries no cancellation."""
        gap = x - self.curve.type_at(x)
        if self.singular:
            sp = self.curve.spline
            k0 = np.searchsorted(sp.x, self.x0, side="right") - 1
            first = (x >= sp.x[k0]) & (x < sp.x[k0 + 1])
            if np.any(first):
                c3, c2, c1, c0 = sp.c[:, k0]
                t = x[first] - sp.x[k0]
                u = x[first] - self.x0
                gap[first] = u - (c0 - self.x0) - ((c3 * t + c2) * t + c1) * t
        return gap

    def _integrand(self, x):
        u = x - self.x0
        with np.errstate(divide="ignore", invalid="ignore"):
            val = -1.0 / self._gap(x)
            if self.singular:
                val = val - self.power / u
        return np.where(u > 0, val, 0.0) if self.singular else val

    def _remainder_integral(self, lo, hi):
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        nodes = mid[:, None] + half[:, None] * QUAD_X[None, :]
        return (half[:, None] * QUAD_W[None, :] * self._integrand(nodes)).sum(axis=1)

    def _remainder(self, x):
        k = np.clip(np.searchsorted(self.knots, x, side="right") - 1, 0, self.knots.size - 2)
        return self.cum[k] + self._remainder_integral(self.knots[k], x)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = self._remainder(x)
        if self.singular:
            with np.errstate(divide="ignore"):
                out = out + self.power * (np.log(x - self.x0) - np.log(self.x_anchor - self.x0))
        return out


@dataclass(frozen=True, eq=False)
class DualCertificate:
    """Multipliers (w, q, m) and the constant C for the volume objective."""

    C: float
    theta_star: float
    x_top: float
    x_split: float
    branches: tuple
    alpha: Callable
    inst: MarketInstance
    kind: str
    pooled: tuple  # ((lo, hi, curve), ...) inefficient intervals and their curves
    meta: Dict = field(default_factory=dict)

    def q(self, x) -> np.ndarray:
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.full(xs.shape, self.C, dtype=float)
        ts = self.theta_star
        for br in self.branches:
            sel = (xs > br.x_lo) & (xs <= br.x_hi) if br.singular else (xs >= br.x_lo) & (xs <= br.x_hi)
            if np.any(sel):
                out[sel] = self.C * np.exp(br(xs[sel]))
        top = xs > self.x_top
        if np.any(top):
            out[top] = self.q(np.array([self.x_top]))[0]
        out[xs == ts] = -np.inf
        return out if np.ndim(x) else float(out[0])

    def m(self, x):
        xs = np.asarray(x, dtype=float)
        return self.q(xs) * (1.0 - xs)

    def _pool_term(self, x, theta):
        # q(x)(x - theta), with the 0 * inf limit at the crossing resolved to 0
        qx = self.q(x)
        gap = x - theta
        with np.errstate(invalid="ignore"):
            return np.where(np.isinf(qx) | (gap == 0), 0.0, qx * gap)

    def w(self, theta) -> np.ndarray:
        th = np.atleast_1d(np.asarray(theta, dtype=float))
        out = np.zeros_like(th)
        inst = self.inst
        alpha = self.alpha
        eff = th > self.theta_star
        if np.any(eff):
            ce = inst.c(th[eff])
            out[eff] = alpha(th[eff]) + self._pool_term(ce, th[eff])
        for lo, hi, curve in self.pooled:
            sel = (th >= lo) & (th <= hi) & ~eff
            if np.any(sel):
                xm = curve.mean_at(np.clip(th[sel], curve.theta_lo, curve.theta_hi))
                out[sel] = alpha(th[sel]) + self._pool_term(xm, th[sel])
        return out if np.ndim(theta) else float(out[0])

    def scaled_by(self, lam: float) -> "DualCertificate":
        if lam <= 0:
            raise ValueError("scale must be positive")
        alpha = self.alpha
        return DualCertificate(self.C * lam, self.theta_star, self.x_top, self.x_split, self.branches,
                               lambda t: lam * alpha(t), self.inst, self.kind, self.pooled, dict(self.meta))

    def samples(self, n: int = 1001):
        grid = np.linspace(0.0, 1.0, n)
        return grid, self.q(grid), self.m(grid), self.w(grid)

    def to_csv(self, path: str, n: int = 1001):
        grid, q, m, w = self.samples(n)
        with open(path, "w", newline="") as fh:
            fh.write("# schema=1\n")
            wr = csv.writer(fh)
            wr.writerow(["t", "q", "m", "w"])
            for row in zip(grid, q, m, w):
                wr.writerow([f"{v:.15g}" for v in row])

    def ode_residual(self, n: int = 2000, delta: float = 1e-3) -> float:
        """max |q'(x)(x - a(x)) + q(x)| on each branch, away from the crossing.

        q' comes from central differences of the stored branch (in log
        distance to the crossing on a singular branch), so this checks the
        certificate as evaluated rather than the quadrature integrand.
        """
        worst = 0.0
        for br in self.branches:
            if br.singular:
                xs = br.x0 + np.geomspace(delta, br.x_hi - br.x0, n)[:-1]
                u = xs - br.x0
                hs = 1e-4
                dJ = (br(br.x0 + u * np.exp(hs)) - br(br.x0 + u * np.exp(-hs))) / (2 * hs) / u
            else:
                h = 1e-5
                xs = np.linspace(br.x_lo + h, br.x_hi - h, n)
                dJ = (br(xs + h) - br(xs - h)) / (2 * h)
            q = self.C * np.exp(br(xs))
            res = q * (dJ * (xs - br.curve.type_at(xs)) + 1.0)
            worst = max(worst, float(np.max(np.abs(res))))
        return worst


def build_dual_volume(inst: MarketInstance, alpha: Callable, plan: SignalPlan) -> DualCertificate:
    """Dual multipliers certifying a reveal-pool or pool-reveal-pool plan."""
    ts = inst.crossings.theta_star
    c1 = inst.c(1.0)
    pools = [s for s in plan.segments if s.kind == "pool"]
    if plan.label in ("nam",) or len(pools) == 1:
        g2 = pools[0].curve
        lo = pools[0].lo
        C = -alpha(lo) / (c1 - lo)
        br = _LogBranch.build(g2, ts, c1, c1, True, g2.slopes[0])
        cert = DualCertificate(C, ts, c1, c1, (br,), alpha, inst, "reveal-pool",
                               ((lo, ts, g2),), {"theta_lower": lo})
    elif len(pools) == 2:
        low, top = pools
        x_star = plan.meta["x_star"]
        t1, t2 = low.hi, top.lo
        C = -alpha(t1) / (x_star - t1)
        C2 = -alpha(t2) / (x_star - t2)
        br_a = _LogBranch.build(top.curve, ts, x_star, x_star, True, top.curve.slopes[0])
        br_b = _LogBranch.build(low.curve, x_star, c1, x_star, False)
        cert = DualCertificate(C, ts, c1, x_star, (br_a, br_b), alpha, inst, "pool-reveal-pool",
                               ((low.lo, t1, low.curve), (t2, ts, top.curve)),
                               {"x_star": x_star, "theta1": t1, "theta2": t2, "C_mismatch": abs(C - C2)})
    else:
        raise ValueError("certificates exist for reveal-pool and pool-reveal-pool plans only")
    grid = np.linspace(ts, 1.0, 2001)[1:]
    if np.any(cert.q(grid) >= 0):
        raise CertificateViolation("q must be negative above the crossing")
    qmax = float(np.max(np.abs(cert.q(ts + np.array([1e-12])))))
    cert.meta["q_near_crossing"] = qmax
    cert.meta["blow_up"] = qmax > 1e12
    return cert


@dataclass(frozen=True)
class ZPReport:
    min_slack: float
    argmin: tuple
    strip_ok: bool
    delta: float

    @property
    def passed(self) -> bool:
        return self.min_slack >= -ZP_TOL and self.strip_ok


def _zp_value(cert: DualCertificate, inst, theta: np.ndarray, x: np.ndarray) -> np.ndarray:
    """v(theta, x) + q(x)(x - theta) + m(x) 1{c_hat(theta) > x} on a grid."""
    T, X = np.meshgrid(theta, x, indexing="ij")
    q = cert.q(x)[None, :]
    m = cert.m(x)[None, :]
    alpha = cert.alpha(theta)[:, None]
    c_hat = np.minimum(theta, inst.c(theta))[:, None]
    val = alpha * (X >= cert.theta_star) + q * (X - T) + m * (c_hat > X)
    return val


def verify_zp(cert: DualCertificate, inst, delta: float = 1e-3, n: int = 500, strict: bool = True) -> ZPReport:
    ts = cert.theta_star
    theta = np.linspace(0.0, 1.0, n)
    x = np.linspace(0.0, 1.0, n)
    x = x[(x <= ts - delta) | (x >= ts + delta)]
    x = np.unique(np.concatenate([x, [ts - delta, ts + delta]]))
    slack = cert.w(theta)[:, None] - _zp_value(cert, inst, theta, x)
    k = np.unravel_index(np.argmin(slack), slack.shape)
    rep = ZPReport(float(slack[k]), (float(theta[k[0]]), float(x[k[1]])), _strip_sign_argument(cert, delta), delta)
    if strict and not rep.passed:
        raise CertificateViolation(f"(ZP) slack {rep.min_slack:.3e} at {rep.argmin}", rep)
    return rep


def _strip_sign_argument(cert: DualCertificate, delta: float) -> bool:
    """Inside (theta* - delta, theta* + delta) the grid is not evaluated.

    Below the crossing q is the constant C < 0.  Above it, dy/dx has the
    sign of (a(x) - theta) because q < 0 and x > a(x), so on the strip y
    either increases to its right edge (checked on the grid) or peaks on
    the support, where it equals w.  For efficient types below their cost,
    y = alpha + q(x)(1 - theta) grows with q.  All of this needs q < 0 and
    increasing, and a decreasing, on the strip.
    """
    ts = cert.theta_star
    u = np.geomspace(1e-10, delta, 400)
    xs = ts + u
    q = cert.q(xs)
    below = cert.q(ts - u)
    a = cert.branches[0].curve.type_at(xs)
    return bool(np.all(q < 0) and np.all(np.diff(q) >= 0) and np.all(np.diff(a) <= 0)
                and np.allclose(below, cert.C, rtol=0, atol=0))


def dual_value(cert: DualCertificate, inst: MarketInstance) -> float:
    """Integral of w f over [0, 1] with Gauss panels graded toward the crossing."""
    ts = cert.theta_star
    pts = [0.0, 1.0, ts]
    pts += list(inst.f.breakpoints) + list(inst.c.breakpoints)
    for lo, hi, _ in cert.pooled:
        pts += [lo, hi]
    pts = np.unique(np.clip(pts, 0, 1))
    grade = []
    for a, b in zip(pts[:-1], pts[1:]):
        if b == ts:
            grade += list(ts - (ts - a) * 0.5 ** np.arange(0, 60))
        elif a == ts:
            grade += list(ts + (b - ts) * 0.5 ** np.arange(0, 60))
    pts = np.unique(np.concatenate([pts, grade]))
    gx, gw = leggauss(20)
    lo, hi = pts[:-1], pts[1:]
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    nodes = (mid[:, None] + half[:, None] * gx[None, :]).ravel()
    weights = (half[:, None] * gw[None, :]).ravel()
    return float(np.sum(weights * inst.f(nodes) * cert.w(nodes)))


def duality_gap(primal: float, cert: DualCertificate, inst: MarketInstance) -> float:
    gap = dual_value(cert, inst) - primal
    if gap < -GAP_TOL:
        raise NegativeGapError(f"dual value below primal by {-gap:.3e}")
    return gap


def check_support_optimality(ds: DiscreteSignal, cert: DualCertificate, inst) -> float:
    """Largest complementary-slackness slack over support entries."""
    sup = ds.mass > SUPPORT_MASS
    th, x = ds.rep_theta[sup], ds.rep_x[sup]
    c_hat = np.minimum(th, inst.c(th))
    vals = cert.alpha(th) * (x >= cert.theta_star) + cert._pool_term(x, th) + np.where(c_hat > x, cert.m(x), 0.0)
    slack = cert.w(th) - vals
    return float(np.max(np.abs(slack))) if slack.size else 0.0
