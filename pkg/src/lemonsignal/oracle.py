"""Finite-grid linear program for the disclosure problem.

Variables are masses pi(i, j) on (type i, mean x_j).  Constraints:

* row sums equal the prior masses,
* every mean column balances, sum_i (x_j - theta_i) pi(i, j) = 0,
* pi(i, j) is absent when min(theta_i, c_i) > x_j.

The mean grid is the union of types and costs, so revealed types and
cost-matched pools are exactly representable.  The LP is solved with the
in-house simplex (:mod:`lemonsignal.simplex`).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp

from . import simplex
from .model import DiscreteMarket, MarketInstance
from .verification import Objective

MAX_CELLS = 500
EXACT_MAX_VARS = 60
PM_TOL = 1e-12
SWAP_EPS = 1e-9


class SizeError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class LpProblem:
    market: DiscreteMarket
    x_grid: np.ndarray
    var_row: np.ndarray
    var_col: np.ndarray
    obj: np.ndarray
    A: sp.csr_matrix
    b: np.ndarray
    m_cols: np.ndarray  # mean column of each balance row
    objective: Objective
    exact_data: Optional[dict] = None

    @property
    def n_types(self) -> int:
        return self.market.types.size

    @property
    def n_vars(self) -> int:
        return self.var_row.size

    def reveal_var(self, i: int) -> int:
        j = self.col_of(self.market.types[i])
        hit = np.flatnonzero((self.var_row == i) & (self.var_col == j))
        return int(hit[0])

    def col_of(self, x: float) -> int:
        return int(np.argmin(np.abs(self.x_grid - x)))

    def table(self, values) -> np.ndarray:
        out = np.zeros((self.n_types, self.x_grid.size))
        np.add.at(out, (self.var_row, self.var_col), np.asarray(values, dtype=float))
        return out

    def objective_of(self, values) -> float:
        return float(self.obj @ np.asarray(values, dtype=float))

    def residuals(self, values) -> Dict[str, float]:
        v = np.asarray(values, dtype=float)
        r = self.A @ v - self.b
        k = self.n_types
        return {
            "bp": float(np.max(np.abs(r[:k]))),
            "m": float(np.max(np.abs(r[k:]))) if r.size > k else 0.0,
            "neg": float(max(0.0, -v.min())) if v.size else 0.0,
        }


@dataclass
class LpSolution:
    lp: LpProblem
    value: Union[float, Fraction]
    x: np.ndarray
    iterations: int
    method: str

    def table(self) -> np.ndarray:
        return self.lp.table(np.asarray(self.x, dtype=float))

    def to_csv(self, path: str, tol: float = 0.0):
        mk = self.lp.market
        with open(path, "w", newline="") as fh:
            fh.write("# schema=1\n")
            w = csv.writer(fh)
            w.writerow(["i", "j", "theta", "x", "mass"])
            for k in np.flatnonzero(np.abs(np.asarray(self.x, dtype=float)) > tol):
                i, j = int(self.lp.var_row[k]), int(self.lp.var_col[k])
                w.writerow([i, j, f"{mk.types[i]:.15g}", f"{self.lp.x_grid[j]:.15g}", f"{float(self.x[k]):.15g}"])


def _coefficients(objective: Objective, theta, cost, x):
    trade = cost <= x + PM_TOL
    if objective.kind == "volume":
        v = np.asarray(objective.alpha(theta), dtype=float) * np.ones_like(x)
    else:
        v = x - (1.0 - objective.beta) * cost
    return np.where(trade, v, 0.0)


def mean_grid(market: DiscreteMarket) -> np.ndarray:
    lo, hi = market.types[0], market.types[-1]
    pts = np.concatenate([market.types, market.costs[(market.costs >= lo) & (market.costs <= hi)]])
    pts = np.sort(pts)
    keep = np.concatenate([[True], np.diff(pts) > 1e-13])
    return pts[keep]


def build_lp(market: Union[DiscreteMarket, MarketInstance], objective: Objective, n: Optional[int] = None,
             x_grid: Optional[Sequence[float]] = None) -> LpProblem:
    """Assemble the LP on a finite market (or a uniform ``n``-cell discretization)."""
    if isinstance(market, MarketInstance):
        if n is None:
            raise ValueError("a continuum instance needs a cell count n")
        if n > MAX_CELLS:
            raise SizeError(f"n={n} exceeds desk scale ({MAX_CELLS} cells)")
        market = DiscreteMarket.from_instance(market, n)
    elif market.types.size > MAX_CELLS:
        raise SizeError(f"{market.types.size} types exceed desk scale ({MAX_CELLS})")
    grid = mean_grid(market) if x_grid is None else np.unique(np.asarray(x_grid, dtype=float))
    th, cs = market.types, market.costs
    ch = np.minimum(th, cs)
    ii, jj = np.meshgrid(np.arange(th.size), np.arange(grid.size), indexing="ij")
    allowed = ch[:, None] <= grid[None, :] + PM_TOL
    vr, vc = ii[allowed], jj[allowed]
    obj = _coefficients(objective, th[vr], cs[vr], grid[vc])
    k = th.size
    # balance rows: only columns with a nonzero coefficient somewhere
    coef = grid[vc] - th[vr]
    nz = np.abs(coef) > 0
    used = np.unique(vc[nz])
    row_of = -np.ones(grid.size, dtype=int)
    row_of[used] = np.arange(used.size) + k
    rows = np.concatenate([vr, row_of[vc[nz]]])
    cols = np.concatenate([np.arange(vr.size), np.flatnonzero(nz)])
    vals = np.concatenate([np.ones(vr.size), coef[nz]])
    A = sp.csr_matrix((vals, (rows, cols)), shape=(k + used.size, vr.size))
    b = np.concatenate([market.masses, np.zeros(used.size)])
    return LpProblem(market, grid, vr, vc, obj, A, b, used, objective)


def _exact_arrays(lp: LpProblem, exact_market=None):
    if exact_market is None:
        types = [Fraction(t) for t in lp.market.types]
        masses = [Fraction(m) for m in lp.market.masses]
        costs = [Fraction(c) for c in lp.market.costs]
    else:
        types, masses, costs = (list(map(Fraction, v)) for v in exact_market)
    grid = [Fraction(x) for x in lp.x_grid]
    nv, k = lp.n_vars, lp.n_types
    A = [[Fraction(0)] * nv for _ in range(lp.A.shape[0])]
    for v in range(nv):
        i, j = int(lp.var_row[v]), int(lp.var_col[v])
        A[i][v] = Fraction(1)
    for r, j in enumerate(lp.m_cols):
        for v in np.flatnonzero(lp.var_col == j):
            A[k + r][v] = grid[j] - types[int(lp.var_row[v])]
    c = []
    for v in range(nv):
        i, j = int(lp.var_row[v]), int(lp.var_col[v])
        if costs[i] > grid[j]:
            c.append(Fraction(0))
        elif lp.objective.kind == "volume":
            c.append(Fraction(float(lp.objective.alpha(float(types[i])))))
        else:
            c.append(grid[j] - (1 - Fraction(lp.objective.beta)) * costs[i])
    return A, masses + [Fraction(0)] * len(lp.m_cols), c


def solve_lp(lp: LpProblem, exact: Optional[bool] = None, exact_market=None) -> LpSolution:
    """Optimal value and a basic optimal solution.

    Small problems (or ``exact=True``) run in rational arithmetic;
    ``exact_market`` supplies (types, masses, costs) as exact rationals.
    """
    if exact is None:
        exact = lp.n_vars <= EXACT_MAX_VARS
    if exact:
        A, b, c = _exact_arrays(lp, exact_market)
        res = simplex.solve_exact(A, b, c)
        return LpSolution(lp, res.value, res.x, res.iterations, "exact")
    crash = {i: lp.reveal_var(i) for i in range(lp.n_types)}
    res = simplex.solve(lp.A, lp.b, lp.obj, crash=crash)
    return LpSolution(lp, res.value, res.x, res.iterations, "float")


# ---------------------------------------------------------------------------
# swap diagnostic


def swap_ratio(mean, theta_low, theta_high):
    """(mean - theta_low) / (mean - theta_high): high-type mass freed per low-type unit."""
    return (mean - theta_low) / (mean - theta_high)


@dataclass(frozen=True)
class Swap:
    col_a: int
    col_b: int
    row_1: int
    row_2: int
    absorber: int
    step: float
    absorbed: float
    gain: float


@dataclass
class SwapReport:
    patterns: int
    improving: List[Swap] = field(default_factory=list)

    @property
    def optimal_consistent(self) -> bool:
        return not self.improving


def _var_index(lp: LpProblem) -> Dict[tuple, int]:
    return {(int(i), int(j)): v for v, (i, j) in enumerate(zip(lp.var_row, lp.var_col))}


def nam_swap_check(sol: LpSolution, eps: float = SWAP_EPS, gain_tol: float = 1e-12) -> SwapReport:
    """Scan positive-assortative patterns and test the mass-shifting swap.

    Pattern: pooling columns a < b (both above the crossing) and inefficient
    rows 1 < 2 with pi(b, 2) > eps and pi(a, 1) > eps.  The swap moves
    ``s`` of type 1 from a to b and ``s * r_b`` of type 2 from b to a, with
    ``r_b = swap_ratio(x_b, theta_1, theta_2)``.  Column b stays balanced;
    column a is left with spare balance ``s (x_a - theta_2)(r_a - r_b) > 0``,
    which absorbs revealed non-trading mass of a type below x_a.  A
    swap that strictly raises the objective is reported.
    """
    lp = sol.lp
    mk = lp.market
    th, cs = mk.types, mk.costs
    grid = lp.x_grid
    tab = sol.table()
    idx = _var_index(lp)
    ineff = cs > th
    # revealed, non-trading inefficient mass available to absorb spare balance
    rev_col = np.array([lp.col_of(t) for t in th])
    spare = np.array([tab[i, rev_col[i]] if ineff[i] else 0.0 for i in range(th.size)])
    pos = [(i, j) for i, j in zip(*np.nonzero(tab > eps)) if ineff[i] and grid[j] > th[i]]
    report = SwapReport(0)
    for (i1, ja) in pos:
        for (i2, jb) in pos:
            if not (ja < jb and i1 < i2):
                continue
            xa, xb, t1, t2 = grid[ja], grid[jb], th[i1], th[i2]
            if xa <= t2 or (i1, jb) not in idx or (i2, ja) not in idx:
                continue
            report.patterns += 1
            rb = swap_ratio(xb, t1, t2)
            ra = swap_ratio(xa, t1, t2)
            free_per = (xa - t2) * (ra - rb)
            cands = [k for k in np.flatnonzero(spare > eps) if th[k] < xa and (k, ja) in idx]
            for k in cands:
                s = min(tab[i1, ja], tab[i2, jb] / rb, spare[k] * (xa - th[k]) / free_per)
                d = s * free_per / (xa - th[k])
                o = lambda i, j: lp.obj[idx[(i, j)]]  # noqa: E731
                gain = (s * (o(i1, jb) - o(i1, ja)) + s * rb * (o(i2, ja) - o(i2, jb))
                        + d * (o(k, ja) - o(k, rev_col[k])))
                if gain > gain_tol:
                    report.improving.append(Swap(int(ja), int(jb), int(i1), int(i2), int(k), float(s), float(d), float(gain)))
                    break
    return report


def apply_swap(sol: LpSolution, swap: Swap) -> np.ndarray:
    """Variable vector after performing ``swap`` (stays LP-feasible)."""
    lp = sol.lp
    idx = _var_index(lp)
    th = lp.market.types
    x = np.asarray(sol.x, dtype=float).copy()
    xb = lp.x_grid[swap.col_b]
    rb = swap_ratio(xb, th[swap.row_1], th[swap.row_2])
    s, d = swap.step, swap.absorbed
    x[idx[(swap.row_1, swap.col_a)]] -= s
    x[idx[(swap.row_1, swap.col_b)]] += s
    x[idx[(swap.row_2, swap.col_b)]] -= s * rb
    x[idx[(swap.row_2, swap.col_a)]] += s * rb
    rev = lp.col_of(th[swap.absorber])
    x[idx[(swap.absorber, rev)]] -= d
    x[idx[(swap.absorber, swap.col_a)]] += d
    return x


# ---------------------------------------------------------------------------
# refinement study


@dataclass(frozen=True)
class ConvergenceRow:
    n: int
    lp_value: float
    gap: float
    flagged: bool
    iterations: int


def compare(plan_value: float, lp_values: Dict[int, float], iterations: Optional[Dict[int, int]] = None) -> List[ConvergenceRow]:
    """LP minus plan value per grid size; flags LP wins beyond 5/n."""
    rows = []
    for n in sorted(lp_values):
        gap = float(lp_values[n]) - plan_value
        rows.append(ConvergenceRow(n, float(lp_values[n]), gap, gap > 5.0 / n, (iterations or {}).get(n, 0)))
    return rows


def refinement_study(inst: MarketInstance, objective: Objective, plan_value: float,
                     ns: Sequence[int] = (25, 50, 100, 200)) -> List[ConvergenceRow]:
    vals, its = {}, {}
    for n in ns:
        sol = solve_lp(build_lp(inst, objective, n), exact=False)
        vals[n], its[n] = float(sol.value), sol.iterations
    return compare(plan_value, vals, its)


# ---------------------------------------------------------------------------
# export


def _name(i, j):
    return f"p_{i}_{j}"


def export_lp(lp: LpProblem, path: str):
    """Write the LP in CPLEX LP text format."""
    A = lp.A.tocsr()
    with open(path, "w") as fh:
        fh.write("\\ schema=1\nMaximize\n obj:")
        terms = [f" {lp.obj[v]:+.17g} {_name(lp.var_row[v], lp.var_col[v])}" for v in range(lp.n_vars) if lp.obj[v] != 0]
        fh.write(_wrap(terms) if terms else " 0 " + _name(lp.var_row[0], lp.var_col[0]))
        fh.write("\nSubject To\n")
        for r in range(A.shape[0]):
            lo, hi = A.indptr[r], A.indptr[r + 1]
            label = f"bp_{r}" if r < lp.n_types else f"m_{lp.m_cols[r - lp.n_types]}"
            terms = [f" {A.data[k]:+.17g} {_name(lp.var_row[A.indices[k]], lp.var_col[A.indices[k]])}" for k in range(lo, hi)]
            fh.write(f" {label}:" + _wrap(terms) + f" = {lp.b[r]:.17g}\n")
        fh.write("Bounds\n")
        for v in range(lp.n_vars):
            fh.write(f" {_name(lp.var_row[v], lp.var_col[v])} >= 0\n")
        fh.write("End\n")


def _wrap(terms, width=8):
    lines = ["".join(terms[k:k + width]) for k in range(0, len(terms), width)]
    return "\n   ".join(lines)
