"""Derivative-free SQP for the worst-case redundancy problem.

The objective ``f(x) = -worst-case load factor`` is minimised over
``{x : c^T x <= V, x >= 0}`` using stencil gradients on the volume
hyperplane, an implicit-filtering radius schedule, Armijo backtracking and a
damped BFGS approximation of the Lagrangian Hessian.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable

import numpy as np

from .dfo import REPAIR_EPS, kernel_basis, sample_set, stencil_gradient
from .model import Design, GroundStructure
from .qp import QpError, is_positive_definite, solve_qp
from .worstcase import WorstCaseObjective, WorstCaseResult, worst_case

log = logging.getLogger(__name__)

RADIUS_BELOW_MIN = "radius_below_min"
DIRECTION_BELOW_EPS = "direction_norm_below_eps"
ITERATION_LIMIT = "iteration_limit"
TIME_LIMIT = "time_limit"

# denominators of the r r^T term: s^T s and s^T r
BFGS_MODES = ("step-norm", "conventional")


class SqpError(RuntimeError):
    """Optimizer failure; ``qp_solves`` counts the QPs solved before it."""

    def __init__(self, message: str, qp_solves: int = 0):
        super().__init__(message)
        self.qp_solves = qp_solves


@dataclass(frozen=True)
class SqpConfig:
    radius: float = 100.0  # mm^2
    radius_min: float = 1e-4  # mm^2
    eps_direction: float = 5e-4  # mm^2
    rho: float = 0.75
    eta: float = 0.01
    beta: float = 0.8
    tau_max: int = 50
    repair_eps: float = REPAIR_EPS
    b0_scale: float = 1.0
    bfgs_denominator: str = "step-norm"
    max_iterations: int = 100_000
    threads: int = 1
    # Wall-clock cap in seconds; None runs to the algorithm's own stopping
    # tests.  Hitting it makes the run depend on machine speed.
    max_seconds: float | None = None

    def validate(self) -> None:
        if not 0 < self.radius_min < self.radius:
            raise ValueError("need 0 < radius_min < radius")
        for name in ("rho", "eta", "beta"):
            if not 0 < getattr(self, name) < 1:
                raise ValueError(f"{name} must lie in (0, 1)")
        if self.tau_max < 0:
            raise ValueError("tau_max must be nonnegative")
        if not self.eps_direction > 0 or not self.b0_scale > 0 or not self.repair_eps > 0:
            raise ValueError("eps_direction, b0_scale and repair_eps must be positive")
        if self.bfgs_denominator not in BFGS_MODES:
            raise ValueError(f"bfgs_denominator must be one of {BFGS_MODES}")
        if self.threads < 1:
            raise ValueError("threads must be at least 1")
        if self.max_seconds is not None and not self.max_seconds > 0:
            raise ValueError("max_seconds must be positive")

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class IterationRecord:
    k: int
    r: float
    f: float
    d_norm: float
    step: float
    stencil_failure: bool
    line_search_failure: bool
    lp_count: int

    CSV_HEADER = "k,r,f,d_norm,step,lp_count"

    def csv_row(self) -> str:
        return f"{self.k},{self.r:.6g},{self.f:.10g},{self.d_norm:.6g},{self.step:.6g},{self.lp_count}"


@dataclass
class SqpState:
    k: int
    x: np.ndarray
    B: np.ndarray
    r: float
    mu: float
    zeta: np.ndarray
    f: float
    qp_solves: int = 0
    evaluations: int = 0


@dataclass
class SqpResult:
    design: Design
    worst: WorstCaseResult
    trace: list[IterationRecord]
    termination: str
    iterations: int
    radius: float
    qp_solves: int
    evaluations: int
    lp_count: int
    bfgs_skips: int
    bfgs_denominator: str
    wall_time: float = field(default=0.0, compare=False)
    # QPs solved by an earlier run that aborted before the fallback took over
    aborted_qp_solves: int = 0

    def trace_csv(self) -> str:
        return "\n".join([IterationRecord.CSV_HEADER] + [rec.csv_row() for rec in self.trace]) + "\n"


def armijo_search(f: Callable, x, d, grad, eta: float, beta: float, tau_max: int,
                  f_x: float | None = None) -> tuple[float | None, int]:
    """Backtracking with ``f(x + beta^tau d) <= f(x) + eta beta^tau grad^T d``.

    Returns ``(beta^tau, trials)`` for the smallest admissible ``tau`` in
    ``0..tau_max`` or ``(None, trials)`` if every trial is rejected.
    """
    x = np.asarray(x, dtype=float)
    d = np.asarray(d, dtype=float)
    fx = f(x) if f_x is None else f_x
    slope = float(np.dot(grad, d))
    step = 1.0
    for tau in range(tau_max + 1):
        trial = f(x + step * d)
        if trial <= fx + eta * step * slope:
            return step, tau + 1
        step *= beta
    return None, tau_max + 1


def damped_bfgs(B, s, y, mode: str = "step-norm") -> tuple[np.ndarray, bool]:
    """Damped BFGS update; returns ``(B_new, skipped)``.

    ``mode="step-norm"`` divides the ``r r^T`` term by ``s^T s``; ``"conventional"``
    divides by ``s^T r``.  The conventional update is positive definite in
    exact arithmetic, but when ``s^T B s`` is tiny and ``y`` is not, the new
    matrix can be so ill-conditioned that it fails the QP's definiteness test
    (``qp.PD_RTOL``); such an update is skipped as well.
    """
    B = np.asarray(B, dtype=float)
    s = np.asarray(s, dtype=float)
    y = np.asarray(y, dtype=float)
    Bs = B @ s
    sBs = float(s @ Bs)
    if sBs < 1e-14:
        return B.copy(), True
    ys = float(y @ s)
    theta = 1.0 if ys >= 0.2 * sBs else 0.8 * sBs / (sBs - ys)
    r = theta * y + (1.0 - theta) * Bs
    if mode == "step-norm":
        denom = float(s @ s)
    elif mode == "conventional":
        denom = float(s @ r)
    else:
        raise ValueError(f"unknown BFGS mode {mode!r}")
    B_new = B - np.outer(Bs, Bs) / sBs + np.outer(r, r) / denom
    B_new = 0.5 * (B_new + B_new.T)
    if mode == "conventional" and not is_positive_definite(B_new):
        return B.copy(), True
    return B_new, False


def _mapper(threads: int):
    if threads <= 1:
        return map, None
    pool = ThreadPoolExecutor(max_workers=threads)
    return pool.map, pool


def run(gs: GroundStructure, alpha: int, x0: Design, cfg: SqpConfig = SqpConfig(),
        gamma: float = 0.0, objective: Callable | None = None,
        on_iteration: Callable[[IterationRecord], None] | None = None) -> SqpResult:
    """Run the derivative-free SQP from ``x0`` and return the final design.

    ``objective`` defaults to the cached worst-case f-value for ``alpha`` and
    ``gamma``; any callable ``f(x)`` with the same meaning may be supplied.
    """
    cfg.validate()
    started = time.perf_counter()
    x0.check(gs)
    f = objective if objective is not None else WorstCaseObjective(gs, alpha, gamma)
    c = gs.lengths
    budget = float(x0.volume_budget)
    basis = kernel_basis(c)
    m = c.size
    B0 = cfg.b0_scale * np.eye(m)

    x = x0.areas.copy()
    fx = f(x)
    if not math.isfinite(fx):
        raise SqpError(f"initial design is unstable at alpha={alpha}: worst-case load factor is -inf")
    state = SqpState(0, x, B0.copy(), cfg.radius, 0.0, np.zeros(m), fx, 0, 1)
    trace: list[IterationRecord] = []
    pending = None
    skips = 0
    termination = ITERATION_LIMIT
    map_fn, pool = _mapper(cfg.threads)

    def lp_count():
        return getattr(f, "lp_count", 0)

    def record(d_norm=np.nan, step=np.nan, stencil=False, ls=False):
        rec = IterationRecord(state.k, state.r, state.f, d_norm, step, stencil, ls, lp_count())
        trace.append(rec)
        if on_iteration is not None:
            on_iteration(rec)

    try:
        for _ in range(cfg.max_iterations):
            if state.r < cfg.radius_min:
                termination = RADIUS_BELOW_MIN
                break
            if cfg.max_seconds is not None and time.perf_counter() - started > cfg.max_seconds:
                termination = TIME_LIMIT
                break
            sample = sample_set(state.x, state.r, basis, budget, cfg.repair_eps)
            sample.evaluate(f, state.f, map_fn)
            state.evaluations += len(sample.points)
            grad = stencil_gradient(sample).gradient
            if pending is not None:
                s, grad_lag_old, mu_new, zeta_new = pending
                y = (grad + mu_new * c - zeta_new) - grad_lag_old
                state.B, skipped = damped_bfgs(state.B, s, y, cfg.bfgs_denominator)
                skips += skipped
                pending = None
            if sample.best_value >= state.f:
                state.r *= cfg.rho
                record(stencil=True)
                continue
            try:
                qp = solve_qp(state.B, grad, c, budget - c @ state.x, -state.x)
            except QpError as exc:
                raise SqpError(f"direction subproblem failed at k={state.k}: {exc}",
                               state.qp_solves) from exc
            state.qp_solves += 1
            d = qp.direction
            d_norm = float(np.linalg.norm(d))
            if d_norm < cfg.eps_direction:
                termination = DIRECTION_BELOW_EPS
                record(d_norm=d_norm)
                break
            step, trials = armijo_search(f, state.x, d, grad, cfg.eta, cfg.beta, cfg.tau_max, state.f)
            state.evaluations += trials
            if step is None:
                state.B = B0.copy()
                state.r *= cfg.rho
                record(d_norm=d_norm, ls=True)
                continue
            x_new = np.maximum(state.x + step * d, 0.0)
            grad_lag = grad + state.mu * c - state.zeta
            pending = (x_new - state.x, grad_lag, qp.mu, qp.zeta)
            record(d_norm=d_norm, step=step)
            state.x = x_new
            state.f = f(x_new)
            state.mu, state.zeta = qp.mu, qp.zeta
            state.k += 1
    finally:
        if pool is not None:
            pool.shutdown()

    design = Design(state.x, budget)
    worst = worst_case(gs, state.x, alpha, gamma) if objective is None else None
    return SqpResult(
        design=design,
        worst=worst,
        trace=trace,
        termination=termination,
        iterations=state.k,
        radius=state.r,
        qp_solves=state.qp_solves,
        evaluations=getattr(f, "evaluations", state.evaluations),
        lp_count=lp_count(),
        bfgs_skips=skips,
        bfgs_denominator=cfg.bfgs_denominator,
        wall_time=time.perf_counter() - started,
    )


def run_with_fallback(gs: GroundStructure, alpha: int, x0: Design, cfg: SqpConfig = SqpConfig(),
                      gamma: float = 0.0, **kwargs) -> SqpResult:
    """``run`` in the configured BFGS mode, retrying with the conventional
    denominator if the Hessian approximation loses positive definiteness."""
    try:
        return run(gs, alpha, x0, cfg, gamma, **kwargs)
    except SqpError as exc:
        if cfg.bfgs_denominator == "conventional" or "positive definite" not in str(exc):
            raise
        log.warning("BFGS matrix lost positive definiteness (%s); rerunning with the conventional update", exc)
        res = run(gs, alpha, x0, replace(cfg, bfgs_denominator="conventional"), gamma, **kwargs)
        res.aborted_qp_solves = exc.qp_solves
        return res
