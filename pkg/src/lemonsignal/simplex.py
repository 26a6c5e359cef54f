"""Revised simplex with Bland's rule for  max c'x  s.t.  Ax = b, x >= 0.

Two arithmetic modes share the same pivoting rules:

* floating point, with an explicit basis inverse updated by eta steps and
  refactorized periodically;
* exact rationals (``fractions.Fraction``) on a dense tableau, for
  desk-size problems where the optimum should come out exactly.

Every row gets an artificial column.  A caller may pass a crash basis
(one structural column per row it covers); uncovered rows keep their
artificial.  Artificials never re-enter, and a basic artificial with a
nonzero entry in the pivot column leaves at step zero, so artificials
sitting at zero never become positive.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Optional, Sequence

import numpy as np
import scipy.sparse as sp


class InfeasibleError(RuntimeError):
    pass


class UnboundedError(RuntimeError):
    pass


@dataclass
class SimplexResult:
    value: float
    x: np.ndarray
    basis: List[int]
    iterations: int
    phase1_iterations: int


def _bland_leave(xb, w, basis, n_struct, tol):
    """Ratio test; ties go to the smallest basic index (Bland)."""
    art = (basis >= n_struct) & (np.abs(w) > tol)
    if np.any(art):
        cand = np.flatnonzero(art & (xb <= tol))
        if cand.size:
            return int(cand[np.argmin(basis[cand])])
    pos = w > tol
    if not np.any(pos):
        return -1
    ratios = np.full(w.shape, np.inf)
    ratios[pos] = xb[pos] / w[pos]
    best = ratios.min()
    ties = np.flatnonzero(ratios <= best + tol * max(1.0, abs(best)))
    return int(ties[np.argmin(basis[ties])])


def solve(A, b, c, crash: Optional[Dict[int, int]] = None, tol: float = 1e-11, max_iter: int = 500000,
          refactor_every: int = 64, pricing: str = "dantzig", stall: int = 1000) -> SimplexResult:
    """Floating-point revised simplex.

    ``crash`` maps row index -> structural column to start basic on that row.
    The crash basis must be primal feasible with the remaining rows held by
    artificials at value ``b[row]``.

    ``pricing="bland"`` always enters the lowest-index improving column.
    ``pricing="dantzig"`` enters the largest reduced cost, but drops to
    Bland's rule after ``stall`` consecutive degenerate pivots and stays
    there until the objective moves again, so cycling is still excluded.
    """
    if pricing not in ("bland", "dantzig"):
        raise ValueError(f"unknown pricing rule {pricing!r}")
    A = sp.csc_matrix(A, dtype=float)
    m, n = A.shape
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    if np.any(b < 0):
        raise ValueError("right-hand side must be nonnegative")
    Aa = sp.hstack([A, sp.identity(m, format="csc")], format="csc")
    basis = np.arange(n, n + m)
    if crash:
        for r, j in crash.items():
            basis[r] = j
    B = Aa[:, basis].toarray()
    Binv = np.linalg.inv(B)
    xb = Binv @ b
    if np.any(xb < -1e-9):
        raise ValueError("crash basis is not primal feasible")
    xb = np.maximum(xb, 0.0)

    def run(cost, allow, it0):
        nonlocal Binv, xb
        it = it0
        since = 0
        degenerate = 0
        AaT = Aa.T.tocsr()
        while True:
            if it >= max_iter:
                raise RuntimeError("simplex iteration limit reached")
            y = cost[basis] @ Binv
            d = cost - AaT @ y
            d[basis] = 0.0
            d[~allow] = 0.0
            enter = np.flatnonzero(d > tol)
            if enter.size == 0:
                return it
            if pricing == "bland" or degenerate >= stall:
                j = int(enter[0])
            else:
                j = int(enter[np.argmax(d[enter])])
            col = np.zeros(m)
            lo, hi = Aa.indptr[j], Aa.indptr[j + 1]
            col[Aa.indices[lo:hi]] = Aa.data[lo:hi]
            w = Binv @ col
            r = _bland_leave(xb, w, basis, n, tol)
            if r < 0:
                raise UnboundedError("objective unbounded")
            step = xb[r] / w[r]
            degenerate = degenerate + 1 if step <= tol else 0
            xb = xb - step * w
            xb[r] = step
            xb = np.maximum(xb, 0.0)
            piv = Binv[r] / w[r]
            Binv -= w[:, None] * piv[None, :]
            Binv[r] = piv
            basis[r] = j
            it += 1
            since += 1
            if since >= refactor_every:
                Binv = np.linalg.inv(Aa[:, basis].toarray())
                xb = np.maximum(Binv @ b, 0.0)
                since = 0

    allow = np.ones(n + m, dtype=bool)
    phase1 = 0
    if np.any(xb[basis >= n] > tol):
        cost1 = np.zeros(n + m)
        cost1[n:] = -1.0
        phase1 = run(cost1, allow, 0)
        if np.any(xb[basis >= n] > 1e-9):
            raise InfeasibleError("problem is infeasible")
    allow[n:] = False
    cost2 = np.concatenate([c, np.zeros(m)])
    total = run(cost2, allow, phase1)
    x = np.zeros(n + m)
    x[basis] = xb
    return SimplexResult(float(c @ x[:n]), x[:n], [int(j) for j in basis], total, phase1)


def solve_exact(A: Sequence[Sequence], b: Sequence, c: Sequence) -> SimplexResult:
    """Dense-tableau simplex over Fractions with Bland's rule (two phases)."""
    A = [[Fraction(v) for v in row] for row in A]
    b = [Fraction(v) for v in b]
    c = [Fraction(v) for v in c]
    m, n = len(A), len(c)
    for i in range(m):
        if b[i] < 0:
            A[i] = [-v for v in A[i]]
            b[i] = -b[i]
    # tableau rows: [A | I | b]
    T = [A[i] + [Fraction(int(i == k)) for k in range(m)] + [b[i]] for i in range(m)]
    basis = list(range(n, n + m))

    def pivot(r, j):
        pv = T[r][j]
        T[r] = [v / pv for v in T[r]]
        for i in range(m):
            if i != r and T[i][j] != 0:
                fct = T[i][j]
                T[i] = [vi - fct * vr for vi, vr in zip(T[i], T[r])]
        basis[r] = j

    def run(cost, allowed):
        it = 0
        while True:
            red = []
            for j in range(n + m):
                if j in basis or not allowed[j]:
                    red.append(Fraction(0))
                    continue
                red.append(cost[j] - sum(cost[basis[i]] * T[i][j] for i in range(m)))
            enter = next((j for j in range(n + m) if red[j] > 0), None)
            if enter is None:
                return it
            cands = []
            for i in range(m):
                if basis[i] >= n and T[i][enter] != 0 and T[i][-1] == 0:
                    cands.append((Fraction(0), basis[i], i))
            if not cands:
                for i in range(m):
                    if T[i][enter] > 0:
                        cands.append((T[i][-1] / T[i][enter], basis[i], i))
            if not cands:
                raise UnboundedError("objective unbounded")
            best = min(cands)
            pivot(best[2], enter)
            it += 1

    allowed = [True] * (n + m)
    p1 = run([Fraction(0)] * n + [Fraction(-1)] * m, allowed)
    if any(basis[i] >= n and T[i][-1] != 0 for i in range(m)):
        raise InfeasibleError("problem is infeasible")
    allowed = [True] * n + [False] * m
    p2 = run(c + [Fraction(0)] * m, allowed)
    x = [Fraction(0)] * n
    for i in range(m):
        if basis[i] < n:
            x[basis[i]] = T[i][-1]
    value = sum(ci * xi for ci, xi in zip(c, x))
    return SimplexResult(value, np.array(x, dtype=object), basis, p1 + p2, p1)
