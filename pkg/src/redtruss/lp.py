"""Dense bounded-variable revised simplex.

Solves ``max c^T y  s.t.  A y = b,  lo <= y <= hi`` where bounds may be
infinite.  Two-phase method with artificial variables, Dantzig pricing and a
switch to Bland's rule once a run of degenerate pivots exceeds a stall limit.

The numeric core is compiled with numba so that the many small limit-analysis
LPs of a worst-case scan stay cheap.  ``simplex_core`` is exposed for the
batch kernels in :mod:`redtruss.limit`.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

# Core status codes shared with the batch kernels.
OPTIMAL = 0
INFEASIBLE = 1
UNBOUNDED = 2
FAILED = 3

_REFACTOR_EVERY = 40
_PIV_TOL = 1e-9


class LpStatus(enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"


class LpError(RuntimeError):
    """Raised on malformed input or a numerical breakdown of the simplex."""


@dataclass(frozen=True)
class LpProblem:
    """``max objective^T y`` subject to ``A y = b`` and ``lower <= y <= upper``."""

    objective: np.ndarray
    A: np.ndarray
    b: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    @classmethod
    def build(cls, objective, A=None, b=None, lower=None, upper=None) -> "LpProblem":
        c = np.asarray(objective, dtype=float).ravel()
        n = c.size
        A = np.zeros((0, n)) if A is None else np.atleast_2d(np.asarray(A, dtype=float))
        b = np.zeros(A.shape[0]) if b is None else np.asarray(b, dtype=float).ravel()
        lo = np.zeros(n) if lower is None else np.asarray(lower, dtype=float).ravel()
        hi = np.full(n, np.inf) if upper is None else np.asarray(upper, dtype=float).ravel()
        return cls(c, A, b, lo, hi)

    def validate(self) -> None:
        n = self.objective.size
        if self.A.ndim != 2 or self.A.shape[1] != n:
            raise LpError(f"A has shape {self.A.shape}, expected (*, {n})")
        if self.b.size != self.A.shape[0]:
            raise LpError(f"b has {self.b.size} entries for {self.A.shape[0]} rows")
        if self.lower.size != n or self.upper.size != n:
            raise LpError("bound vectors do not match the number of variables")
        for name, arr in (("objective", self.objective), ("A", self.A), ("b", self.b)):
            if not np.all(np.isfinite(arr)):
                raise LpError(f"{name} contains non-finite entries")
        if np.any(np.isnan(self.lower)) or np.any(np.isnan(self.upper)):
            raise LpError("bounds contain NaN")


@dataclass
class LpSolution:
    status: LpStatus
    x: np.ndarray
    objective: float
    duals: np.ndarray = field(repr=False)
    reduced_costs: np.ndarray = field(repr=False)
    iterations: int = 0


def default_tolerances(b: np.ndarray, c: np.ndarray) -> tuple[float, float]:
    bn = float(np.max(np.abs(b))) if b.size else 0.0
    cn = float(np.max(np.abs(c))) if c.size else 0.0
    return 1e-9 * (1.0 + bn), 1e-9 * (1.0 + cn)


@njit(cache=True)
def _refactor(Ae, b, x, basis, Binv, m, N):
    Bm = np.empty((m, m))
    for i in range(m):
        Bm[:, i] = Ae[:, basis[i]]
    Binv[:, :] = np.linalg.inv(Bm)
    rhs = b.copy()
    is_basic = np.zeros(N, dtype=np.bool_)
    for i in range(m):
        is_basic[basis[i]] = True
    for j in range(N):
        if not is_basic[j] and x[j] != 0.0:
            rhs -= Ae[:, j] * x[j]
    xb = Binv @ rhs
    for i in range(m):
        x[basis[i]] = xb[i]


@njit(cache=True)
def _iterate(Ae, b, cost, lo, hi, x, state, basis, Binv, feas_tol, opt_tol,
             max_iter, stall_limit, iters):
    """Run simplex pivots for the given cost until optimal.

    state[j]: 0 basic, 1 at lower, 2 at upper, 3 free at zero, 4 fixed.
    Returns (status, iterations used so far).
    """
    m, N = Ae.shape
    bland = False
    degenerate_run = 0
    since_refactor = 0
    cB = np.empty(m)
    d = np.empty(N)
    while True:
        if iters >= max_iter:
            return FAILED, iters
        for i in range(m):
            cB[i] = cost[basis[i]]
        pi = cB @ Binv
        # pricing
        enter = -1
        best = 0.0
        direction = 0
        for j in range(N):
            s = state[j]
            if s == 0 or s == 4:
                continue
            dj = cost[j]
            for k in range(m):
                dj -= pi[k] * Ae[k, j]
            d[j] = dj
            dirj = 0
            if s == 1 and dj < -opt_tol:
                dirj = 1
            elif s == 2 and dj > opt_tol:
                dirj = -1
            elif s == 3 and abs(dj) > opt_tol:
                dirj = 1 if dj < 0 else -1
            if dirj != 0:
                if bland:
                    enter = j
                    direction = dirj
                    break
                if abs(dj) > best:
                    best = abs(dj)
                    enter = j
                    direction = dirj
        if enter < 0:
            if since_refactor > 0:
                _refactor(Ae, b, x, basis, Binv, m, N)
                since_refactor = 0
                continue
            return OPTIMAL, iters
        w = Binv @ Ae[:, enter]
        # ratio test; entering moves by t*direction, basic i changes by -t*direction*w[i]
        t_best = np.inf
        leave = -1
        leave_to_upper = False
        piv_best = 0.0
        if np.isfinite(lo[enter]) and np.isfinite(hi[enter]):
            t_best = hi[enter] - lo[enter]
        for i in range(m):
            delta = -direction * w[i]
            bi = basis[i]
            if delta < -_PIV_TOL:
                if not np.isfinite(lo[bi]):
                    continue
                t = (x[bi] - lo[bi]) / (-delta)
                to_upper = False
            elif delta > _PIV_TOL:
                if not np.isfinite(hi[bi]):
                    continue
                t = (hi[bi] - x[bi]) / delta
                to_upper = True
            else:
                continue
            if t < 0.0:
                t = 0.0
            better = False
            if t < t_best - 1e-12 * (1.0 + t_best if np.isfinite(t_best) else 1.0):
                better = True
            elif leave >= 0 and abs(t - t_best) <= 1e-12 * (1.0 + t_best):
                if bland:
                    better = bi < basis[leave]
                else:
                    better = abs(delta) > piv_best
            if better:
                t_best = t
                leave = i
                leave_to_upper = to_upper
                piv_best = abs(delta)
        if not np.isfinite(t_best):
            return UNBOUNDED, iters
        iters += 1
        if t_best <= feas_tol * 1e-3:
            degenerate_run += 1
            if degenerate_run > stall_limit:
                bland = True
        else:
            degenerate_run = 0
        step = direction * t_best
        for i in range(m):
            x[basis[i]] -= step * w[i]
        x[enter] += step
        if leave < 0:
            # bound flip of the entering variable
            state[enter] = 2 if direction > 0 else 1
            x[enter] = hi[enter] if direction > 0 else lo[enter]
            continue
        bl = basis[leave]
        x[bl] = hi[bl] if leave_to_upper else lo[bl]
        if lo[bl] == hi[bl]:
            state[bl] = 4
        else:
            state[bl] = 2 if leave_to_upper else 1
        state[enter] = 0
        basis[leave] = enter
        # eta update of the basis inverse
        piv = w[leave]
        row = Binv[leave, :] / piv
        for i in range(m):
            if i != leave and w[i] != 0.0:
                Binv[i, :] -= w[i] * row
        Binv[leave, :] = row
        since_refactor += 1
        if since_refactor >= _REFACTOR_EVERY:
            _refactor(Ae, b, x, basis, Binv, m, N)
            since_refactor = 0


@njit(cache=True)
def simplex_core(A, b, c, lo, hi, feas_tol, opt_tol, max_iter):
    """Two-phase bounded simplex for ``max c^T y``; returns (status, y, pi, iters).

    ``pi`` are the equality duals of the maximisation problem.
    """
    m, n = A.shape
    N = n + m
    Ae = np.zeros((m, N))
    Ae[:, :n] = A
    lo_e = np.empty(N)
    hi_e = np.empty(N)
    lo_e[:n] = lo
    hi_e[:n] = hi
    x = np.zeros(N)
    state = np.zeros(N, dtype=np.int64)
    for j in range(n):
        if lo[j] == hi[j]:
            x[j] = lo[j]
            state[j] = 4
        elif np.isfinite(lo[j]):
            x[j] = lo[j]
            state[j] = 1
        elif np.isfinite(hi[j]):
            x[j] = hi[j]
            state[j] = 2
        else:
            x[j] = 0.0
            state[j] = 3
    resid = b - A @ x[:n]
    basis = np.empty(m, dtype=np.int64)
    Binv = np.zeros((m, m))
    for i in range(m):
        sgn = 1.0 if resid[i] >= 0.0 else -1.0
        Ae[i, n + i] = sgn
        Binv[i, i] = sgn
        basis[i] = n + i
        x[n + i] = abs(resid[i])
        lo_e[n + i] = 0.0
        hi_e[n + i] = np.inf
    stall = 2 * N + 10
    cost = np.zeros(N)
    for i in range(m):
        cost[n + i] = 1.0
    status, iters = _iterate(Ae, b, cost, lo_e, hi_e, x, state, basis, Binv,
                             feas_tol, 1e-11, max_iter, stall, 0)
    pi = np.zeros(m)
    if status != OPTIMAL:
        return FAILED, x[:n].copy(), pi, iters
    infeas = 0.0
    for i in range(m):
        infeas += x[n + i]
    if infeas > feas_tol:
        return INFEASIBLE, x[:n].copy(), pi, iters
    for i in range(m):
        j = n + i
        hi_e[j] = 0.0
        if state[j] != 0:
            state[j] = 4
            x[j] = 0.0
    cost[:] = 0.0
    for j in range(n):
        cost[j] = -c[j]
    status, iters = _iterate(Ae, b, cost, lo_e, hi_e, x, state, basis, Binv,
                             feas_tol, opt_tol, max_iter, stall, iters)
    if status != OPTIMAL:
        return status, x[:n].copy(), pi, iters
    # final primal check against the original rows and bounds
    y = x[:n].copy()
    r = A @ y - b
    worst = 0.0
    for i in range(m):
        worst = max(worst, abs(r[i]))
    for j in range(n):
        worst = max(worst, lo[j] - y[j], y[j] - hi[j])
    for i in range(m):
        worst = max(worst, abs(x[n + i]))
    if worst > 10.0 * feas_tol:
        return FAILED, y, pi, iters
    cB = np.empty(m)
    for i in range(m):
        cB[i] = cost[basis[i]]
    pi = -(cB @ Binv)
    return OPTIMAL, y, pi, iters


def solve_lp(problem: LpProblem, max_iter: int = 50_000) -> LpSolution:
    """Solve ``problem`` and return a status-correct :class:`LpSolution`.

    Raises :class:`LpError` for dimension mismatches or when the simplex
    breaks down numerically; a wrong ``Optimal`` is never returned silently.
    """
    problem.validate()
    A, b, c = problem.A, problem.b, problem.objective
    feas_tol, opt_tol = default_tolerances(b, c)
    lo = problem.lower.astype(float)
    hi = problem.upper.astype(float)
    if np.any(lo > hi + feas_tol):
        n = c.size
        return LpSolution(LpStatus.INFEASIBLE, np.full(n, np.nan), float("nan"),
                          np.zeros(b.size), np.zeros(n))
    hi = np.maximum(hi, lo)
    status, y, pi, iters = simplex_core(
        np.ascontiguousarray(A), b.copy(), c.copy(), lo, hi, feas_tol, opt_tol, max_iter
    )
    if status == FAILED:
        raise LpError(f"simplex breakdown after {iters} iterations")
    if status == INFEASIBLE:
        return LpSolution(LpStatus.INFEASIBLE, y, float("nan"), pi, np.zeros_like(y), iters)
    if status == UNBOUNDED:
        return LpSolution(LpStatus.UNBOUNDED, y, float("inf"), pi, np.zeros_like(y), iters)
    return LpSolution(LpStatus.OPTIMAL, y, float(c @ y), pi, c - A.T @ pi, iters)


def dump_lp(problem: LpProblem, path: str | Path) -> None:
    """Write ``problem`` in a plain-text format for offline inspection.

    Sections ``OBJECTIVE``, ``A``, ``B``, ``LOWER`` and ``UPPER`` each hold
    whitespace separated rows printed with ``repr`` precision.
    """
    lines = [f"# max c^T y s.t. A y = b, lower <= y <= upper; m={problem.A.shape[0]} n={problem.objective.size}"]

    def row(v):
        return " ".join(repr(float(t)) for t in v)

    lines += ["OBJECTIVE", row(problem.objective), "A"]
    lines += [row(r) for r in problem.A]
    lines += ["B", row(problem.b), "LOWER", row(problem.lower), "UPPER", row(problem.upper)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
