"""Primal active-set solver for the SQP direction subproblem.

    minimize    1/2 d^T B d + g^T d
    subject to  c^T d <= rhs,   d >= lb

with ``B`` symmetric positive definite.  Multipliers follow the convention
``B d + g + mu c - zeta = 0`` with ``mu, zeta >= 0``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class QpError(ValueError):
    pass


# B counts as positive definite when its eigenvalues satisfy
# lambda_min > PD_RTOL * lambda_max.  Beyond that the working-set solves lose
# all accuracy and the active-set loop can cycle.
PD_RTOL = 1e-12


def is_positive_definite(B: np.ndarray) -> bool:
    w = np.linalg.eigvalsh(B)
    return bool(w[-1] > 0 and w[0] > PD_RTOL * w[-1])


@dataclass
class QpResult:
    direction: np.ndarray
    mu: float
    zeta: np.ndarray
    objective: float
    iterations: int = 0


def _working_minimizer(B, g, c, rhs, lb, fixed, vol_active):
    """Minimiser with the working set held as equalities; returns (d, mu)."""
    sol = np.empty(g.size)
    sol[fixed] = lb[fixed]
    F = np.flatnonzero(~fixed)
    X = np.flatnonzero(fixed)
    if F.size == 0:
        return sol, 0.0
    r = -(g[F] + B[np.ix_(F, X)] @ lb[X])
    Bff = B[np.ix_(F, F)]
    if not vol_active:
        sol[F] = np.linalg.solve(Bff, r)
        return sol, 0.0
    n = F.size
    K = np.zeros((n + 1, n + 1))
    K[:n, :n] = Bff
    K[:n, n] = c[F]
    K[n, :n] = c[F]
    z = np.linalg.solve(K, np.append(r, rhs - c[X] @ lb[X]))
    sol[F] = z[:n]
    return sol, float(z[n])


def solve_qp(B, g, c, rhs: float, lb, max_iter: int = 500, tol: float = 1e-12) -> QpResult:
    """Solve the subproblem; ties in constraint selection go to the lowest index
    (the volume constraint counts as index ``m``)."""
    B = np.asarray(B, dtype=float)
    g = np.asarray(g, dtype=float).ravel()
    c = np.asarray(c, dtype=float).ravel()
    lb = np.asarray(lb, dtype=float).ravel()
    m = g.size
    if B.shape != (m, m) or c.size != m or lb.size != m:
        raise QpError("inconsistent QP dimensions")
    if not np.allclose(B, B.T, rtol=1e-10, atol=1e-12 * max(1.0, np.abs(B).max())):
        raise QpError("B is not symmetric")
    if not is_positive_definite(B):
        raise QpError("B is not positive definite")

    scale = max(1.0, float(np.abs(c).max()), abs(rhs))
    feas = 1e-12 * scale
    d = np.maximum(lb, 0.0)
    if c @ d > rhs + feas:
        d = lb.copy()
        if c @ d > rhs + feas:
            raise QpError("QP constraints are infeasible")
    fixed = d == lb
    vol_active = abs(c @ d - rhs) <= feas and not np.all(fixed)

    for it in range(1, max_iter + 1):
        target, mu = _working_minimizer(B, g, c, rhs, lb, fixed, vol_active)
        step = target - d
        if np.linalg.norm(step) <= tol * max(1.0, np.linalg.norm(d)):
            d = target
            zeta = np.zeros(m)
            grad = B @ d + g + mu * c
            zeta[fixed] = grad[fixed]
            # most negative multiplier leaves the working set
            cand = [(zeta[i], i) for i in np.flatnonzero(fixed)]
            if vol_active:
                cand.append((mu, m))
            worst = min(cand, default=(0.0, -1))
            if worst[0] >= -1e-12 * max(1.0, np.abs(g).max()):
                zeta = np.maximum(zeta, 0.0)
                mu = max(mu, 0.0)
                return QpResult(d, mu, zeta, float(0.5 * d @ B @ d + g @ d), it)
            lowest = min(v for v, _ in cand)
            idx = min(i for v, i in cand if v == lowest)
            if idx == m:
                vol_active = False
            else:
                fixed[idx] = False
            continue
        # step towards target, stopping at the first blocking constraint
        alpha = 1.0
        block = -1
        for i in range(m):
            if not fixed[i] and step[i] < 0:
                a = (lb[i] - d[i]) / step[i]
                if a < alpha:
                    alpha, block = a, i
        cs = c @ step
        if not vol_active and cs > 0:
            a = (rhs - c @ d) / cs
            if a < alpha:
                alpha, block = a, m
        alpha = max(alpha, 0.0)
        d = d + alpha * step
        if block == m:
            vol_active = not np.all(fixed)
        elif block >= 0:
            fixed[block] = True
            d[block] = lb[block]
    raise QpError(f"active-set iteration limit ({max_iter}) reached")
