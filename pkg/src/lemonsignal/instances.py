"""Built-in markets used by the CLI, the tests and the docs."""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from .matching import EscapeError, solve_g2
from .model import DiscreteMarket, MarketInstance, ScalarFn, ValidationError


def canonical() -> MarketInstance:
    """Uniform types, linear cost 1/4 + theta/2 (crossing at 1/2)."""
    return MarketInstance(ScalarFn.constant(1.0), ScalarFn.polynomial([0.25, 0.5]), name="CANON")


def gains_at_bottom() -> MarketInstance:
    """Uniform types, cost theta/2 + theta^2: efficient below 1/2."""
    return MarketInstance(
        ScalarFn.constant(1.0), ScalarFn.polynomial([0.0, 0.5, 1.0]), declared_regime="gains-at-bottom",
        name="gains-bottom",
    )


def three_crossings() -> MarketInstance:
    """Cost theta - (theta-0.2)(theta-0.45)(theta-0.7): crossings at 0.2, 0.45, 0.7."""
    r = np.poly([0.2, 0.45, 0.7])[::-1]  # ascending coefficients of the cubic
    coeffs = -r
    coeffs[1] += 1.0
    return MarketInstance(ScalarFn.constant(1.0), ScalarFn.polynomial(coeffs), name="three-crossings")


# two seller types: low quality 0 (cost 1/8), high quality 1 (cost 1/2), 3/4 low
TWO_TYPE_TYPES = (Fraction(0), Fraction(1))
TWO_TYPE_MASSES = (Fraction(3, 4), Fraction(1, 4))
TWO_TYPE_COSTS = (Fraction(1, 8), Fraction(1, 2))

# conditional signal probabilities P(s | type); rows are types
BIASED_SIGNAL = ((Fraction(7, 9), Fraction(2, 9)), (Fraction(1, 3), Fraction(2, 3)))
# the unbiased repair: the high types pooled at s1 are revealed instead
UNBIASED_SIGNAL = (
    (Fraction(7, 9), Fraction(2, 9), Fraction(0)),
    (Fraction(0), Fraction(2, 3), Fraction(1, 3)),
)
UNBIASED_MEANS = (Fraction(0), Fraction(1, 2), Fraction(1))


def two_type() -> DiscreteMarket:
    return DiscreteMarket(
        np.array(TWO_TYPE_TYPES, dtype=float), np.array(TWO_TYPE_MASSES, dtype=float),
        np.array(TWO_TYPE_COSTS, dtype=float), name="two-type",
    )


def joint_table(conditional, masses=TWO_TYPE_MASSES):
    """Joint masses P(type, s) from P(s | type), in exact arithmetic."""
    return [[m * p for p in row] for m, row in zip(masses, conditional)]


def signal_means(conditional, types=TWO_TYPE_TYPES, masses=TWO_TYPE_MASSES):
    """Posterior means and probabilities of each realization (exact)."""
    joint = joint_table(conditional, masses)
    out = []
    for j in range(len(joint[0])):
        tot = sum(row[j] for row in joint)
        mean = sum(t * row[j] for t, row in zip(types, joint)) / tot
        out.append((mean, tot))
    return out


BUILTIN = {
    "CANON": canonical,
    "canon": canonical,
    "gains-bottom": gains_at_bottom,
    "three-crossings": three_crossings,
    "two-type": two_type,
}


def random_gains_at_top(rng: np.random.Generator, max_tries: int = 100) -> MarketInstance:
    """Random cubic density and cubic cost with one crossing and gains at the top.

    The density is 1 plus zero-mean shape terms in u = theta - 1/2.  The
    cost slope is a random quadratic squeezed into [lo, hi] with
    0 < lo < hi < 1, so c - theta is strictly decreasing and crosses
    zero exactly once, at a uniformly drawn point.  Draws where full
    trade is feasible (the matching reaches type 0) are rejected.
    """
    P = np.polynomial.Polynomial
    u = P([-0.5, 1.0])
    grid = np.linspace(0.0, 1.0, 201)
    for _ in range(max_tries):
        a1, a2, a3 = rng.uniform(-0.8, 0.8, 3)
        dens = 1.0 + a1 * u + a2 * (u ** 2 - 1.0 / 12.0) + a3 * u ** 3
        crossing = rng.uniform(0.3, 0.8)
        raw = P(rng.uniform(-1.0, 1.0, 3))
        vals = raw(grid)
        lo, hi = rng.uniform(0.05, 0.4), rng.uniform(0.6, 0.95)
        slope = (raw - vals.min()) * ((hi - lo) / (np.ptp(vals) + 1e-12)) + lo
        cost = slope.integ()
        cost = cost - cost(crossing) + crossing
        try:
            inst = MarketInstance(ScalarFn.polynomial(dens.coef), ScalarFn.polynomial(cost.coef), name="random")
            if inst.crossings.regime != "gains-at-top":
                continue
            solve_g2(inst)
        except (ValidationError, EscapeError):
            continue
        return inst
    raise RuntimeError("no valid instance drawn")
