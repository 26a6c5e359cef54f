"""Matching curves: strictly decreasing pairings of inefficient types with
posterior means, obtained by integrating the matching ODE

    a'(x) = b'(x) f(b(x)) / f(a) * (b(x) - x) / (a - x),   b = c^{-1}.

Integration runs in the efficient-type variable ``b`` (so ``x = c(b)``),
where the right-hand side needs no inversion of ``c``:

    da/db = f(b) (b - c(b)) / (f(a) (a - c(b))).

Curves are then resampled on a uniform posterior-mean grid and stored as a
cubic Hermite interpolant with the exact ODE slopes at the knots.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicHermiteSpline

from .model import MarketInstance

SEED_EPS = 1e-6
RTOL = 1e-12
ATOL = 1e-14
N_SAMPLES = 2001


class SingularityError(ValueError):
    pass


class EscapeError(RuntimeError):
    """The curve left the admissible type band before reaching its end.

    For the top curve this is the numerical face of full trade being
    feasible: the matching would exhaust every inefficient type.
    """

    def __init__(self, message: str, x_escape: float):
        self.x_escape = x_escape
        super().__init__(message)


def ode_rhs(inst: MarketInstance, x: float, a: float) -> float:
    """Slope of the matching ODE in posterior-mean coordinates."""
    theta_star = _single_crossing(inst)
    if abs(x - theta_star) < 1e-14 and abs(a - theta_star) < 1e-14:
        return 0.0
    if abs(a - x) < 1e-14:
        raise SingularityError(f"a == x = {x!r} away from the crossing")
    b = inst.c_inv(x)
    db = 1.0 / inst.c_prime(b)
    return db * inst.f(b) / inst.f(a) * (b - x) / (a - x)


def _single_crossing(inst: MarketInstance) -> float:
    cr = inst.crossings.crossings
    # the seed point is the crossing closest to the queried region; most
    # callers work on single-crossing instances
    return cr[-1] if cr else np.nan


def seed_slope(inst: MarketInstance, crossing: float) -> float:
    """Decreasing root of L^2 - L - b'(b' - 1) = 0, i.e. ``1 - 1/c'(crossing)``."""
    return 1.0 - 1.0 / inst.c_prime(crossing)


@dataclass(frozen=True, eq=False)
class MatchingCurve:
    """Sampled strictly decreasing map x -> a(x) on [x_lo, x_hi]."""

    xs: np.ndarray
    types: np.ndarray
    slopes: np.ndarray
    label: str
    crossing: float
    seeded: bool
    residual: float
    spline: CubicHermiteSpline
    inst: MarketInstance

    @property
    def x_lo(self) -> float:
        return float(self.xs[0])

    @property
    def x_hi(self) -> float:
        return float(self.xs[-1])

    @property
    def theta_hi(self) -> float:
        """Type matched to the lowest mean."""
        return float(self.types[0])

    @property
    def theta_lo(self) -> float:
        """Type matched to the highest mean."""
        return float(self.types[-1])

    def type_at(self, x):
        xs = np.clip(np.asarray(x, dtype=float), self.x_lo, self.x_hi)
        out = self.spline(xs)
        return float(out) if np.ndim(out) == 0 else out

    def slope_at(self, x):
        xs = np.clip(np.asarray(x, dtype=float), self.x_lo, self.x_hi)
        out = self.spline(xs, 1)
        return float(out) if np.ndim(out) == 0 else out

    def efficient_at(self, x):
        """Efficient partner ``c^{-1}(x)``."""
        return self.inst.c_inv(x)

    def mean_at(self, theta):
        """Inverse map: the posterior mean assigned to pooled type ``theta``."""
        th = np.asarray(theta, dtype=float)
        flat = np.atleast_1d(th).ravel()
        if np.any(flat < self.theta_lo - 1e-12) or np.any(flat > self.theta_hi + 1e-12):
            raise ValueError("type outside the curve's domain")
        # types decrease along xs, so search on the reversed array
        rev = self.types[::-1]
        k = np.searchsorted(rev, flat, side="left")
        k = np.clip(k, 1, rev.size - 1)
        idx = self.xs.size - 1 - k  # interval [idx, idx+1] in xs
        lo = self.xs[idx]
        hi = self.xs[idx + 1]
        for _ in range(55):
            mid = 0.5 * (lo + hi)
            above = self.spline(mid) > flat
            lo = np.where(above, mid, lo)
            hi = np.where(above, hi, mid)
        out = 0.5 * (lo + hi)
        return float(out[0]) if th.ndim == 0 else out.reshape(th.shape)

    def martingale_balance(self) -> np.ndarray:
        """Pointwise |E[theta | x] - x| over interior samples."""
        x = self.xs[1:-1]
        a = self.types[1:-1]
        b = self.inst.c_inv(x)
        u = self.inst.f(a) * np.abs(self.slopes[1:-1])
        v = self.inst.f(b) / self.inst.c_prime(b)
        return np.abs((u * a + v * b) / (u + v) - x)

    def to_rows(self):
        x = self.xs
        mids = 0.5 * (x[:-1] + x[1:])
        res = np.abs(self.spline(mids, 1) - _rhs_x(self.inst, mids, self.spline(mids)))
        res = np.concatenate([[0.0], res])
        return list(zip(x, self.types, self.slopes, res))

    def to_csv(self, path: str):
        with open(path, "w", newline="") as fh:
            fh.write("# schema=1\n")
            w = csv.writer(fh)
            w.writerow(["x", "a", "G", "residual"])
            for row in self.to_rows():
                w.writerow([f"{v:.15g}" for v in row])


def _rhs_b(inst: MarketInstance, b, a):
    cb = inst.c(b)
    return inst.f(b) * (b - cb) / (inst.f(a) * (a - cb))


def _rhs_x(inst: MarketInstance, x, a):
    b = inst.c_inv(x)
    return _rhs_b(inst, b, a) / inst.c_prime(b)


def integrate_matching(
    inst: MarketInstance,
    b_start: float,
    a_start: float,
    b_end: float,
    floor: float = 0.0,
    ceiling: Optional[float] = None,
    seed: bool = False,
    stop_at_floor: bool = False,
    label: str = "curve",
    n_samples: int = N_SAMPLES,
    rtol: float = RTOL,
) -> MatchingCurve:
    """Integrate ``da/db`` from ``(b_start, a_start)`` towards ``b_end``.

    ``seed`` marks the singular start ``a_start == b_start == crossing``;
    the first step then uses the analytic linearization.  Reaching
    ``floor`` either truncates the curve (``stop_at_floor``) or raises
    :class:`EscapeError`.
    """
    ceiling = b_start if ceiling is None else ceiling
    crossing = b_start if seed else np.nan
    direction = np.sign(b_end - b_start)
    b0, a0 = b_start, a_start
    if seed:
        cp = inst.c_prime(b_start)
        db = SEED_EPS / cp
        b0 = b_start + direction * db
        # slope in b-space is L * c' = c' - 1
        a0 = a_start + (cp - 1.0) * direction * db

    def fun(b, y):
        return [_rhs_b(inst, b, y[0])]

    def hit_floor(b, y):
        return y[0] - floor

    hit_floor.terminal = True
    hit_floor.direction = -1

    def hit_ceiling(b, y):
        return y[0] - ceiling

    hit_ceiling.terminal = True
    hit_ceiling.direction = 1

    def hit_diagonal(b, y):
        return inst.c(b) - y[0]

    hit_diagonal.terminal = True

    sol = solve_ivp(
        fun,
        (b0, b_end),
        [a0],
        method="RK45",
        rtol=rtol,
        atol=ATOL,
        dense_output=True,
        events=[hit_floor, hit_ceiling, hit_diagonal],
    )
    if sol.status < 0:
        raise RuntimeError(f"matching integration failed: {sol.message}")
    b_stop = float(sol.t[-1])
    if sol.status == 1:
        if sol.t_events[0].size:
            if not stop_at_floor:
                raise EscapeError(
                    f"{label}: type fell to {floor} at mean {inst.c(b_stop):.12g} before the end of the efficient block",
                    float(inst.c(b_stop)),
                )
        else:
            raise EscapeError(f"{label}: curve left the inefficient band at mean {inst.c(b_stop):.12g}", float(inst.c(b_stop)))

    x_start, x_stop = inst.c(b_start), inst.c(b_stop)
    xs = np.linspace(min(x_start, x_stop), max(x_start, x_stop), n_samples)
    bs = inst.c_inv(xs)
    # keep exact endpoints (c_inv round trip may differ in the last bit)
    if x_start < x_stop:
        bs[0], bs[-1] = b_start, b_stop
    else:
        bs[0], bs[-1] = b_stop, b_start
    types = np.empty_like(xs)
    inside = (bs - b0) * direction >= 0
    types[inside] = sol.sol(bs[inside])[0]
    if seed:
        L = seed_slope(inst, b_start)
        near = ~inside
        types[near] = a_start + L * (xs[near] - x_start)
    else:
        types[~inside] = a_start
    if sol.status == 1 and sol.t_events[0].size:
        end_idx = -1 if x_stop > x_start else 0
        types[end_idx] = floor
    with np.errstate(invalid="ignore", divide="ignore"):
        slopes = _rhs_b(inst, bs, types) / inst.c_prime(bs)
    if seed:
        first = 0 if x_start < x_stop else -1
        slopes[first] = seed_slope(inst, b_start)
        types[first] = a_start
    if np.any(np.diff(types) >= 0):
        raise RuntimeError(f"{label}: sampled curve is not strictly decreasing")
    spline = CubicHermiteSpline(xs, types, slopes)
    mids = 0.5 * (xs[:-1] + xs[1:])
    residual = float(np.max(np.abs(spline(mids, 1) - _rhs_x(inst, mids, spline(mids)))))
    return MatchingCurve(xs, types, slopes, label, crossing, seed, residual, spline, inst)


def solve_g2(inst: MarketInstance, crossing: Optional[float] = None, top_eff: float = 1.0, floor: float = 0.0,
             stop_at_floor: bool = False, **kw) -> MatchingCurve:
    """Curve through the crossing: a(crossing) = crossing, run up to c(top_eff).

    With ``stop_at_floor`` the curve ends where the matched type reaches
    ``floor`` instead of raising (used when pooling starts above zero).
    """
    if crossing is None:
        crossing = inst.crossings.theta_star
    return integrate_matching(
        inst, crossing, crossing, top_eff, floor=floor, ceiling=crossing + 1e-9, seed=True,
        stop_at_floor=stop_at_floor, label="g2", **kw,
    )


def solve_g1(inst: MarketInstance, theta_start: float = 0.0, crossing: Optional[float] = None,
             top_eff: float = 1.0, **kw) -> MatchingCurve:
    """Curve ending at (c(top_eff), theta_start), integrated backwards to the crossing."""
    if crossing is None:
        crossing = inst.crossings.theta_star
    if not 0.0 <= theta_start < crossing:
        raise ValueError("theta_start must lie in [0, crossing)")
    return integrate_matching(
        inst, top_eff, theta_start, crossing, floor=0.0, ceiling=crossing, seed=False,
        label="g1" if theta_start == 0.0 else "g_beta", **kw,
    )
