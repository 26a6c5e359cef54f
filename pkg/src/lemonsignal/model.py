"""Market primitives: piecewise-cubic scalar functions, instances, crossings
and the competitive-equilibrium price for a finite posterior.

Types live on [0, 1]. A cost function ``c`` crosses the diagonal at one or
more points; types with ``c(theta) > theta`` are *inefficient* (no gains from
trade when revealed) and types with ``c(theta) < theta`` are *efficient*.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from math import comb
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq

KINDS = ("density", "cost", "weight", "generic")
REGIMES = ("gains-at-top", "gains-at-bottom", "multi-crossing", "all-inefficient", "all-efficient")

ROOT_TOL = 1e-10
NORMALIZATION_TOL = 1e-8
CONTINUITY_TOL = 1e-10
SAMPLE_STEP = 1e-3


class ValidationError(ValueError):
    """Raised when a primitive violates its invariants; ``key`` names the culprit."""

    def __init__(self, message: str, key: Optional[str] = None):
        self.key = key
        super().__init__(f"{key}: {message}" if key else message)


class DegenerateTangencyError(ValueError):
    pass


class DomainError(ValueError):
    pass


def _horner(coeffs: np.ndarray, t: np.ndarray) -> np.ndarray:
    out = np.zeros_like(t)
    for j in range(coeffs.shape[1] - 1, -1, -1):
        out = out * t + coeffs[:, j]
    return out


@dataclass(frozen=True, eq=False)
class ScalarFn:
    """Piecewise polynomial on [0, 1]; degree <= 3 for densities and costs.

    ``coefficients[i]`` holds ascending powers of ``(theta - breakpoints[i])``
    on ``[breakpoints[i], breakpoints[i+1]]``.
    """

    breakpoints: np.ndarray
    coefficients: np.ndarray
    kind: str = "generic"
    origin_zero_ok: bool = False
    name: str = ""

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float).ravel()
        raw = [list(map(float, row)) for row in np.atleast_2d(np.asarray(self.coefficients, dtype=float))]
        key = self.name or self.kind
        if self.kind not in KINDS:
            raise ValidationError(f"unknown kind {self.kind!r}", key)
        if bp.size < 2 or bp[0] != 0.0 or bp[-1] != 1.0:
            raise ValidationError("breakpoints must start at 0 and end at 1", f"{key}.breakpoints")
        if np.any(np.diff(bp) <= 0):
            raise ValidationError("breakpoints must be strictly increasing", f"{key}.breakpoints")
        if len(raw) != bp.size - 1:
            raise ValidationError(
                f"expected {bp.size - 1} coefficient rows, got {len(raw)}", f"{key}.coefficients"
            )
        if any(len(r) == 0 for r in raw):
            raise ValidationError("each piece needs at least one coefficient", f"{key}.coefficients")
        if self.kind in ("density", "cost") and any(len(r) > 4 for r in raw):
            raise ValidationError("pieces must have degree <= 3", f"{key}.coefficients")
        width = max(4, max(len(r) for r in raw))
        coeffs = np.zeros((len(raw), width))
        for i, r in enumerate(raw):
            coeffs[i, : len(r)] = r
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "coefficients", coeffs)
        self._check_continuity(key)
        self._check_kind(key)

    # construction helpers -------------------------------------------------
    @classmethod
    def polynomial(cls, coeffs: Sequence[float], kind: str = "generic", **kw) -> "ScalarFn":
        """Single global polynomial with ascending coefficients ``coeffs``."""
        return cls(np.array([0.0, 1.0]), np.array([list(coeffs)]), kind=kind, **kw)

    @classmethod
    def constant(cls, value: float, kind: str = "generic", **kw) -> "ScalarFn":
        return cls.polynomial([value], kind=kind, **kw)

    def _check_continuity(self, key: str):
        bp, co = self.breakpoints, self.coefficients
        for i in range(1, bp.size - 1):
            w = bp[i] - bp[i - 1]
            left = _horner(co[i - 1 : i], np.array([w]))[0]
            dleft = _horner(co[i - 1 : i, 1:] * np.arange(1, co.shape[1]), np.array([w]))[0]
            if abs(left - co[i, 0]) > CONTINUITY_TOL:
                raise ValidationError(f"value jumps at knot {bp[i]}", f"{key}.coefficients")
            if abs(dleft - co[i, 1]) > CONTINUITY_TOL:
                raise ValidationError(f"derivative jumps at knot {bp[i]}", f"{key}.coefficients")

    def _check_kind(self, key: str):
        if self.kind == "generic":
            return
        grid = np.linspace(0.0, 1.0, int(round(1 / SAMPLE_STEP)) + 1)
        vals = self(grid)
        if self.kind == "density":
            if np.any(vals <= 0):
                raise ValidationError("density must be strictly positive", f"{key}.coefficients")
            total = self.integral(0.0, 1.0)
            if abs(total - 1.0) > NORMALIZATION_TOL:
                raise ValidationError(f"density integrates to {total!r}, not 1", f"{key}.coefficients")
        elif self.kind == "cost":
            check = vals[1:] if self.origin_zero_ok else vals
            if np.any(check <= 0) or vals[0] < 0:
                raise ValidationError("cost must be strictly positive", f"{key}.coefficients")
            if np.any(self.derivative()(grid) <= 0):
                raise ValidationError("cost must be strictly increasing", f"{key}.coefficients")
        elif self.kind == "weight":
            # (1 - theta)^k style weights vanish at the top type only
            if np.any(vals[:-1] <= 0) or vals[-1] < 0:
                raise ValidationError("weight must be positive on [0, 1)", f"{key}.coefficients")

    # evaluation -------------------------------------------------------------
    def _locate(self, theta: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self.breakpoints, theta, side="right") - 1
        return np.clip(idx, 0, self.breakpoints.size - 2)

    def __call__(self, theta):
        th = np.asarray(theta, dtype=float)
        flat = np.atleast_1d(th).ravel()
        idx = self._locate(flat)
        t = flat - self.breakpoints[idx]
        out = _horner(self.coefficients[idx], t)
        if th.ndim == 0:
            return float(out[0])
        return out.reshape(th.shape)

    def derivative(self) -> "ScalarFn":
        co = self.coefficients
        d = np.zeros_like(co)
        d[:, :-1] = co[:, 1:] * np.arange(1, co.shape[1])
        return ScalarFn(self.breakpoints, d, kind="generic")

    def antiderivative(self) -> "PiecewiseQuartic":
        return PiecewiseQuartic.from_cubic(self)

    def integral(self, lo: float, hi: float) -> float:
        F = self.antiderivative()
        return float(F(hi) - F(lo))

    def __add__(self, other: "ScalarFn") -> "ScalarFn":
        return _combine(self, other, 1.0)

    def __sub__(self, other: "ScalarFn") -> "ScalarFn":
        return _combine(self, other, -1.0)

    def scaled(self, factor: float) -> "ScalarFn":
        return ScalarFn(self.breakpoints, self.coefficients * factor, kind="generic")

    def roots(self) -> np.ndarray:
        """All roots in [0, 1], refined by bracketing; isolated per piece."""
        found: List[float] = []
        bp, co = self.breakpoints, self.coefficients
        for i in range(bp.size - 1):
            w = bp[i + 1] - bp[i]
            poly = co[i][::-1]
            nz = np.flatnonzero(np.abs(poly) > 0)
            if nz.size == 0:
                raise DegenerateTangencyError(f"function vanishes identically on piece {i}")
            cand = np.roots(poly[nz[0]:])
            for r in cand:
                if abs(r.imag) > 1e-7:
                    continue
                t = r.real
                if -1e-9 <= t <= w + 1e-9:
                    found.append(bp[i] + min(max(t, 0.0), w))
        found.sort()
        refined: List[float] = []
        for r in found:
            r = self._refine_root(r)
            if not refined or abs(r - refined[-1]) > 1e-9:
                refined.append(r)
        return np.array(refined)

    def _refine_root(self, r: float) -> float:
        for span in (1e-9, 1e-7, 1e-5):
            lo, hi = max(0.0, r - span), min(1.0, r + span)
            flo, fhi = self(lo), self(hi)
            if flo == 0.0:
                return lo
            if fhi == 0.0:
                return hi
            if flo * fhi < 0:
                return brentq(self, lo, hi, xtol=1e-15, rtol=1e-15)
        return r


@dataclass(frozen=True, eq=False)
class PiecewiseQuartic:
    """Continuous antiderivative of a :class:`ScalarFn`, vanishing at 0.

    Stored like ScalarFn but one degree higher and without kind checks.
    """

    breakpoints: np.ndarray
    coefficients: np.ndarray

    @classmethod
    def from_cubic(cls, fn: ScalarFn) -> "PiecewiseQuartic":
        bp, co = fn.breakpoints, fn.coefficients
        out = np.zeros((co.shape[0], co.shape[1] + 1))
        out[:, 1:] = co / np.arange(1, co.shape[1] + 1)
        acc = 0.0
        for i in range(co.shape[0]):
            out[i, 0] = acc
            w = bp[i + 1] - bp[i]
            acc = float(_horner(out[i : i + 1], np.array([w]))[0])
        return cls(bp, out)

    def __call__(self, theta):
        th = np.asarray(theta, dtype=float)
        flat = np.atleast_1d(th).ravel()
        idx = np.clip(np.searchsorted(self.breakpoints, flat, side="right") - 1, 0, self.breakpoints.size - 2)
        out = _horner(self.coefficients[idx], flat - self.breakpoints[idx])
        if th.ndim == 0:
            return float(out[0])
        return out.reshape(th.shape)


def _identity() -> ScalarFn:
    return ScalarFn.polynomial([0.0, 1.0])


def _refine_to(fn: ScalarFn, knots: np.ndarray, width: int) -> np.ndarray:
    """Re-express ``fn`` on a finer knot mesh (coefficients re-centred)."""
    rows = np.zeros((knots.size - 1, width))
    for r, k in enumerate(knots[:-1]):
        i = int(fn._locate(np.array([k]))[0])
        s = k - fn.breakpoints[i]
        co = fn.coefficients[i]
        # Taylor shift: new_j = sum_{m>=j} C(m, j) co_m s^(m-j)
        for j in range(co.size):
            rows[r, j] = sum(comb(m, j) * co[m] * s ** (m - j) for m in range(j, co.size))
    return rows


def _combine(a: ScalarFn, b: ScalarFn, sign: float) -> ScalarFn:
    knots = np.union1d(a.breakpoints, b.breakpoints)
    width = max(a.coefficients.shape[1], b.coefficients.shape[1])
    return ScalarFn(knots, _refine_to(a, knots, width) + sign * _refine_to(b, knots, width), kind="generic")


# ---------------------------------------------------------------------------
# instances


@dataclass(frozen=True, eq=False)
class MarketInstance:
    """Type density ``f`` and production cost ``c`` on [0, 1].

    ``declared_regime="gains-at-bottom"`` admits a cost vanishing at the
    origin, which the gains-at-bottom examples need.
    """

    f: ScalarFn
    c: ScalarFn
    declared_regime: Optional[str] = None
    name: str = ""

    def __post_init__(self):
        if self.f.kind != "density":
            object.__setattr__(self, "f", ScalarFn(self.f.breakpoints, self.f.coefficients, kind="density", name="density"))
        zero_ok = self.declared_regime == "gains-at-bottom"
        if self.c.kind != "cost" or self.c.origin_zero_ok != zero_ok:
            object.__setattr__(
                self,
                "c",
                ScalarFn(self.c.breakpoints, self.c.coefficients, kind="cost", origin_zero_ok=zero_ok, name="cost"),
            )
        if self.declared_regime is not None and self.declared_regime not in REGIMES:
            raise ValidationError(f"unknown regime {self.declared_regime!r}", "regime")

    @cached_property
    def F(self) -> PiecewiseQuartic:
        return self.f.antiderivative()

    @cached_property
    def c_prime(self) -> ScalarFn:
        return self.c.derivative()

    @cached_property
    def excess(self) -> ScalarFn:
        """``c(theta) - theta``: positive on inefficient types."""
        return self.c - _identity()

    @cached_property
    def crossings(self) -> "CrossingProfile":
        return find_crossings(self)

    @property
    def c_range(self) -> Tuple[float, float]:
        return self.c(0.0), self.c(1.0)

    def c_hat(self, theta):
        return auxiliary_cost(self, theta)

    def c_inv(self, x):
        """Inverse cost, accurate to ~1e-15 (safeguarded Newton)."""
        xs = np.asarray(x, dtype=float)
        flat = np.atleast_1d(xs).ravel()
        c0, c1 = self.c_range
        if np.any(flat < c0 - 1e-12) or np.any(flat > c1 + 1e-12):
            raise DomainError(f"cost value outside [{c0}, {c1}]")
        lo = np.zeros_like(flat)
        hi = np.ones_like(flat)
        # linear start, then Newton with bracket maintenance
        t = np.clip((flat - c0) / (c1 - c0), 0.0, 1.0)
        for _ in range(60):
            val = self.c(t) - flat
            lo = np.where(val < 0, t, lo)
            hi = np.where(val > 0, t, hi)
            d = self.c_prime(t)
            step = np.where(d > 0, val / np.where(d > 0, d, 1.0), 0.0)
            nt = t - step
            bad = (nt <= lo) | (nt >= hi) | ~np.isfinite(nt)
            nt = np.where(bad, 0.5 * (lo + hi), nt)
            if np.all(np.abs(nt - t) <= 1e-16):
                t = nt
                break
            t = nt
        t = np.clip(t, 0.0, 1.0)
        if xs.ndim == 0:
            return float(t[0])
        return t.reshape(xs.shape)

    def mass(self, lo, hi):
        return self.F(hi) - self.F(lo)


@dataclass(frozen=True, eq=False)
class DiscreteMarket:
    """Finitely many types with prior masses and costs (the LP's primitive)."""

    types: np.ndarray
    masses: np.ndarray
    costs: np.ndarray
    name: str = ""
    halfcell: float = 0.0

    def __post_init__(self):
        t = np.asarray(self.types, dtype=float)
        m = np.asarray(self.masses, dtype=float)
        c = np.asarray(self.costs, dtype=float)
        if not (t.shape == m.shape == c.shape) or t.ndim != 1:
            raise ValidationError("types, masses and costs must be equal-length vectors", "discrete")
        if np.any(np.diff(t) <= 0):
            raise ValidationError("types must be strictly increasing", "discrete.types")
        if np.any(m < 0) or abs(m.sum() - 1.0) > 1e-12:
            raise ValidationError("masses must be nonnegative and sum to 1", "discrete.masses")
        object.__setattr__(self, "types", t)
        object.__setattr__(self, "masses", m)
        object.__setattr__(self, "costs", c)

    @classmethod
    def from_instance(cls, inst: MarketInstance, n: int) -> "DiscreteMarket":
        """Uniform cells, type = midpoint, mass from exact CDF differences."""
        edges = np.linspace(0.0, 1.0, n + 1)
        mids = 0.5 * (edges[:-1] + edges[1:])
        masses = np.diff(inst.F(edges))
        masses = masses / masses.sum()
        return cls(mids, masses, inst.c(mids), name=f"{inst.name or 'instance'}@{n}", halfcell=0.5 / n)

    def c(self, theta):
        return np.interp(theta, self.types, self.costs)

    def c_hat(self, theta):
        return np.minimum(theta, self.c(theta))


# ---------------------------------------------------------------------------
# operations


def auxiliary_cost(inst, theta):
    """``min(theta, c(theta))``."""
    th = np.asarray(theta, dtype=float)
    if np.any(th < 0) or np.any(th > 1):
        raise DomainError("types must lie in [0, 1]")
    out = np.minimum(th, inst.c(th))
    return float(out) if th.ndim == 0 else out


@dataclass(frozen=True)
class CrossingProfile:
    crossings: Tuple[float, ...]
    blocks: Tuple[Tuple[Tuple[float, float], str], ...]
    regime: str

    @property
    def theta_star(self) -> float:
        if len(self.crossings) != 1:
            raise ValueError(f"no unique crossing in regime {self.regime}")
        return self.crossings[0]

    def efficient_blocks(self):
        return [iv for iv, lab in self.blocks if lab == "efficient"]

    def inefficient_blocks(self):
        return [iv for iv, lab in self.blocks if lab == "inefficient"]


def find_crossings(inst: MarketInstance) -> CrossingProfile:
    h = inst.excess
    roots = [float(r) for r in h.roots() if 0.0 < r < 1.0]
    for r in roots:
        lo, hi = h(max(r - 1e-6, 0.0)), h(min(r + 1e-6, 1.0))
        if lo * hi >= 0:
            raise DegenerateTangencyError(f"c(theta) - theta touches zero without crossing at {r:.12g}")
    cuts = [0.0] + roots + [1.0]
    blocks = []
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        mid = h(0.5 * (lo + hi))
        blocks.append(((lo, hi), "inefficient" if mid > 0 else "efficient"))
    labels = [lab for _, lab in blocks]
    if not roots:
        regime = "all-inefficient" if labels[0] == "inefficient" else "all-efficient"
    elif len(roots) == 1:
        regime = "gains-at-top" if labels[0] == "inefficient" else "gains-at-bottom"
    else:
        regime = "multi-crossing"
    return CrossingProfile(tuple(roots), tuple(blocks), regime)


@dataclass(frozen=True)
class Posterior:
    types: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        t = np.atleast_1d(np.asarray(self.types, dtype=float))
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if t.shape != w.shape:
            raise ValidationError("support and weights differ in length", "posterior")
        if np.any(w <= 0):
            raise ValidationError("posterior weights must be positive", "posterior.weights")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValidationError("posterior weights must sum to 1", "posterior.weights")
        object.__setattr__(self, "types", t)
        object.__setattr__(self, "weights", w)

    @property
    def mean(self) -> float:
        return float(np.dot(self.types, self.weights))


@dataclass(frozen=True)
class PriceResult:
    price: float
    trade: bool
    fixed_points: Tuple[float, ...]
    traders: Tuple[float, ...] = field(default_factory=tuple)


def equilibrium_price(inst, post: Posterior, tol: float = 1e-12) -> PriceResult:
    """Largest ``p`` with ``p = E[theta | c(theta) <= p]``; breakdown gives 0.

    Candidate participation sets are the lower cost-sets of the support, so
    the scan is exhaustive over at most ``len(support)`` thresholds.
    """
    costs = np.asarray(inst.c(post.types), dtype=float)
    order = np.argsort(costs, kind="stable")
    cs, ts, ws = costs[order], post.types[order], post.weights[order]
    fixed = []
    k = len(cs)
    while k > 0:
        # participation set = all types with cost <= cs[k-1] (ties grouped)
        cut = cs[k - 1]
        mask = cs <= cut
        p = float(np.dot(ts[mask], ws[mask]) / ws[mask].sum())
        nxt = cs[~mask].min() if np.any(~mask) else np.inf
        if cut <= p + tol and p < nxt - tol:
            fixed.append(p)
        k = int(np.searchsorted(cs, cut, side="left"))
    if not fixed:
        return PriceResult(0.0, False, ())
    best = max(fixed)
    traders = tuple(float(t) for t, cc in zip(post.types, costs) if cc <= best + tol)
    return PriceResult(best, True, tuple(sorted(fixed, reverse=True)), traders)


@dataclass(frozen=True)
class AssumptionReport:
    regime: str
    gains_at_top: bool
    full_trade_infeasible: bool
    threshold_property: bool
    theta_lower: Optional[float]
    notes: Tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return self.gains_at_top and self.full_trade_infeasible


def single_downward_crossing(values: np.ndarray, atol: float = 0.0) -> bool:
    """Sampled sign pattern is (+ ... +)(- ... -) with zeros only at the switch."""
    s = np.sign(np.where(np.abs(values) <= atol, 0.0, values))
    nz = s[s != 0]
    if nz.size == 0:
        return False
    switches = np.count_nonzero(np.diff(nz) != 0)
    return switches == 0 and nz[-1] < 0 or switches == 1 and nz[0] > 0


def check_assumptions(
    inst: MarketInstance,
    theta_lower: Optional[float],
    betas: Iterable[float] = (0.0, 0.25, 0.5, 0.75, 1.0),
) -> AssumptionReport:
    prof = inst.crossings
    notes = []
    a1 = prof.regime == "gains-at-top"
    if not a1:
        notes.append(f"regime is {prof.regime}")
    a2 = theta_lower is not None and theta_lower > 1e-9
    if not a2:
        notes.append("full trade is feasible (matching reaches type 0)")
    grid = np.linspace(0.0, 1.0, 1001)
    cvals = inst.c(grid)
    a3 = True
    for beta in betas:
        vals = (1.0 - beta) * cvals - grid
        if beta >= 1.0:
            vals = vals[1:]  # -theta vanishes only at the origin
        if not single_downward_crossing(vals, atol=1e-14):
            a3 = False
            notes.append(f"(1-beta)c - theta lacks a single downward crossing at beta={beta}")
    return AssumptionReport(prof.regime, a1, a2, a3, theta_lower, tuple(notes))
