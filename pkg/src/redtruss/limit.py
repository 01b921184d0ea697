"""Plastic limit analysis by the static (lower-bound) theorem and limit design."""

from __future__ import annotations

import enum
import weakref
from dataclasses import dataclass

import numpy as np
from numba import njit

from .lp import (FAILED, INFEASIBLE, OPTIMAL, UNBOUNDED, LpError, LpProblem,
                 LpStatus, default_tolerances, simplex_core, solve_lp)
from .model import Design, GroundStructure, ModelError

ZERO_AREA = 1e-12  # mm^2; smaller areas carry no force but stay in the LP
_MAX_ITER = 20_000


class LimitStatus(enum.Enum):
    OPTIMAL = "Optimal"
    MECHANISM_OR_OVERLOAD = "MechanismOrOverload"
    UNBOUNDED = "Unbounded"


@dataclass
class LimitResult:
    status: LimitStatus
    load_factor: float
    forces: np.ndarray  # N

    @property
    def f_value(self) -> float:
        return -self.load_factor


@dataclass(frozen=True)
class LimitLp:
    """Scaled limit-analysis LP data shared by every area vector of one structure.

    Variables are ``(lambda, q / scale)``; rows are nodal equilibrium divided
    by ``scale`` so that all entries are of order one.
    """

    A: np.ndarray
    b: np.ndarray
    scale: float
    yield_stress: float
    feas_tol: float
    opt_tol: float

    @classmethod
    def of(cls, gs: GroundStructure) -> "LimitLp":
        pr, pd = gs.reference_load, gs.dead_load
        scale = max(float(np.max(np.abs(pr), initial=0.0)), float(np.max(np.abs(pd), initial=0.0)), 1.0)
        A = np.hstack([-pr[:, None] / scale, gs.columns])
        b = pd / scale
        c = np.zeros(A.shape[1])
        c[0] = 1.0
        feas_tol, opt_tol = default_tolerances(b, c)
        return cls(np.ascontiguousarray(A), b, scale, gs.yield_stress, feas_tol, opt_tol)

    def capacities(self, areas: np.ndarray) -> np.ndarray:
        areas = np.asarray(areas, dtype=float)
        caps = self.yield_stress * areas / self.scale
        caps[areas < ZERO_AREA] = 0.0
        return caps


_CACHE: "weakref.WeakKeyDictionary[GroundStructure, LimitLp]" = weakref.WeakKeyDictionary()


def limit_lp(gs: GroundStructure) -> LimitLp:
    lp = _CACHE.get(gs)
    if lp is None:
        lp = _CACHE[gs] = LimitLp.of(gs)
    return lp


@njit(cache=True)
def _solve_caps(A, b, caps, feas_tol, opt_tol):
    n = A.shape[1]
    c = np.zeros(n)
    c[0] = 1.0
    lo = np.empty(n)
    hi = np.empty(n)
    lo[0] = -np.inf
    hi[0] = np.inf
    lo[1:] = -caps
    hi[1:] = caps
    return simplex_core(A, b, c, lo, hi, feas_tol, opt_tol, _MAX_ITER)


@njit(cache=True, nogil=True)
def scenario_load_factors(A, b, caps, damaged, gamma, feas_tol, opt_tol, early_exit):
    """Load factor of each damage scenario (rows of ``damaged``).

    Mechanisms give -inf, unbounded problems +inf, failures NaN.  With
    ``early_exit`` the scan stops after the first mechanism; the number of
    solved LPs is returned alongside.
    """
    k = damaged.shape[0]
    out = np.full(k, np.nan)
    solved = 0
    for s in range(k):
        cs = caps.copy()
        for j in range(damaged.shape[1]):
            cs[damaged[s, j]] *= gamma
        status, y, pi, it = _solve_caps(A, b, cs, feas_tol, opt_tol)
        solved += 1
        if status == OPTIMAL:
            out[s] = y[0]
        elif status == INFEASIBLE:
            out[s] = -np.inf
            if early_exit:
                break
        elif status == UNBOUNDED:
            out[s] = np.inf
        else:
            out[s] = np.nan
    return out, solved


def limit_load_factor(gs: GroundStructure, areas) -> LimitResult:
    """Largest lambda with ``sum q_i b_i = lambda p_r + p_d`` and ``|q_i| <= sigma_y x_i``.

    An infeasible LP (the dead load cannot be carried) is reported as
    ``MECHANISM_OR_OVERLOAD`` with ``load_factor = -inf``.
    """
    areas = np.asarray(areas, dtype=float)
    if areas.shape != (gs.n_members,):
        raise ModelError(f"expected {gs.n_members} areas, got {areas.size}")
    if np.any(areas < 0):
        raise ModelError("areas must be nonnegative")
    lp = limit_lp(gs)
    status, y, _, _ = _solve_caps(lp.A, lp.b, lp.capacities(areas), lp.feas_tol, lp.opt_tol)
    m = gs.n_members
    if status == OPTIMAL:
        return LimitResult(LimitStatus.OPTIMAL, float(y[0]), y[1:] * lp.scale)
    if status == INFEASIBLE:
        return LimitResult(LimitStatus.MECHANISM_OR_OVERLOAD, -np.inf, np.full(m, np.nan))
    if status == UNBOUNDED:
        return LimitResult(LimitStatus.UNBOUNDED, np.inf, np.full(m, np.nan))
    raise LpError("limit-analysis LP failed numerically")


@dataclass
class LimitDesign:
    design: Design
    load_factor: float
    forces: np.ndarray

    def surviving(self, tol: float = 1e-6) -> np.ndarray:
        """Indices of members whose area exceeds ``tol`` times the largest area."""
        a = self.design.areas
        return np.flatnonzero(a > tol * max(float(a.max()), 1.0))


def classical_limit_design(gs: GroundStructure, budget: float) -> LimitDesign:
    """Volume-constrained optimal plastic design as a single LP.

    With ``q = q+ - q-`` and ``x_i = (q+_i + q-_i) / sigma_y`` the stress
    constraints become the volume row ``sum c_i (q+_i + q-_i) / sigma_y <= V``.
    """
    if not budget > 0:
        raise ModelError("volume budget must be positive")
    m, d = gs.n_members, gs.n_dof
    pr, pd = gs.reference_load, gs.dead_load
    scale = max(float(np.max(np.abs(pr), initial=0.0)), float(np.max(np.abs(pd), initial=0.0)), 1.0)
    B = gs.columns
    vol_row = gs.lengths * scale / (gs.yield_stress * budget)
    # variables: lambda, q+ (m), q- (m), volume slack
    A = np.zeros((d + 1, 2 * m + 2))
    A[:d, 0] = -pr / scale
    A[:d, 1:m + 1] = B
    A[:d, m + 1:2 * m + 1] = -B
    A[d, 1:m + 1] = vol_row
    A[d, m + 1:2 * m + 1] = vol_row
    A[d, -1] = 1.0
    b = np.append(pd / scale, 1.0)
    c = np.zeros(2 * m + 2)
    c[0] = 1.0
    lower = np.zeros(2 * m + 2)
    lower[0] = -np.inf
    sol = solve_lp(LpProblem(c, A, b, lower, np.full(2 * m + 2, np.inf)))
    if sol.status is LpStatus.INFEASIBLE:
        raise LpError("limit design LP is infeasible: the dead load cannot be carried within the budget")
    if sol.status is LpStatus.UNBOUNDED:
        raise LpError("limit design LP is unbounded")
    qp_, qm_ = sol.x[1:m + 1], sol.x[m + 1:2 * m + 1]
    areas = (qp_ + qm_) * scale / gs.yield_stress
    return LimitDesign(Design(areas, budget), float(sol.x[0]), (qp_ - qm_) * scale)
