"""Worst-case load factor over damage scenarios and strong redundancy.

The worst case over "at most alpha damaged members" is attained with exactly
alpha damaged members because the load factor is monotone in the areas, so
:func:`worst_case` enumerates only those.  :func:`worst_case_oracle` scans
every scenario with up to alpha damaged members and is kept for validation.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
import threading
from dataclasses import dataclass, field
from math import comb
from pathlib import Path

import numpy as np

from .limit import limit_lp, scenario_load_factors
from .lp import LpError
from .model import DamageScenario, GroundStructure, ModelError

TIE_RTOL = 1e-6
TIE_ATOL = 1e-9


def is_tied(value: float, worst: float, rtol: float = TIE_RTOL, atol: float = TIE_ATOL) -> bool:
    if math.isinf(worst):
        return value == worst
    return value <= worst + max(rtol * abs(worst), atol)


@dataclass
class WorstCaseResult:
    worst_lambda: float
    minimizers: list[DamageScenario]
    table: list[tuple[tuple[int, ...], float]] = field(repr=False)
    lp_count: int = 0

    @property
    def f_value(self) -> float:
        return -self.worst_lambda

    @property
    def multiplicity(self) -> int:
        return len(self.minimizers)

    def to_csv(self, path: str | Path | None = None) -> str:
        """Scenario table as CSV with columns damaged_member_ids, lambda, is_worst."""
        worst = {s.damaged for s in self.minimizers}
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["damaged_member_ids", "lambda", "is_worst"])
        for damaged, lam in self.table:
            writer.writerow([" ".join(map(str, damaged)), f"{lam:.12g}", int(damaged in worst)])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text


def _scenarios(m: int, k: int) -> np.ndarray:
    if k == 0:
        return np.zeros((1, 0), dtype=np.int64)
    return np.array(list(itertools.combinations(range(m), k)), dtype=np.int64).reshape(-1, k)


def _evaluate(gs: GroundStructure, areas, damaged: np.ndarray, gamma: float, early_exit: bool):
    areas = np.asarray(areas, dtype=float)
    if areas.shape != (gs.n_members,):
        raise ModelError(f"expected {gs.n_members} areas, got {areas.size}")
    if not 0.0 <= gamma < 1.0:
        raise ModelError("damage degree must lie in [0, 1)")
    lp = limit_lp(gs)
    lams, solved = scenario_load_factors(lp.A, lp.b, lp.capacities(areas), damaged, float(gamma),
                                         lp.feas_tol, lp.opt_tol, early_exit)
    if np.any(np.isnan(lams[:solved])):
        raise LpError("limit-analysis LP failed numerically during the scenario scan")
    return lams[:solved], solved


def _assemble(gs, damaged, lams, gamma, solved) -> WorstCaseResult:
    worst = float(np.min(lams))
    table = [(tuple(int(i) for i in row), float(v)) for row, v in zip(damaged[:len(lams)], lams)]
    minimizers = [DamageScenario(d, gs.n_members, gamma) for d, v in table if is_tied(v, worst)]
    return WorstCaseResult(worst, minimizers, table, solved)


def worst_case_value(gs: GroundStructure, areas, alpha: int, gamma: float = 0.0) -> tuple[float, int]:
    """Worst-case load factor and LP count, without building the scenario table."""
    _check_alpha(gs, alpha)
    lams, solved = _evaluate(gs, areas, _scenarios(gs.n_members, alpha), gamma, True)
    return float(np.min(lams)), solved


def worst_case(gs: GroundStructure, areas, alpha: int, gamma: float = 0.0) -> WorstCaseResult:
    """Minimum load factor over all scenarios with exactly ``alpha`` damaged members.

    Scenarios are scanned in lexicographic order and the scan stops at the
    first mechanism, whose load factor is -inf.
    """
    _check_alpha(gs, alpha)
    damaged = _scenarios(gs.n_members, alpha)
    lams, solved = _evaluate(gs, areas, damaged, gamma, True)
    return _assemble(gs, damaged, lams, gamma, solved)


def worst_case_oracle(gs: GroundStructure, areas, alpha: int, gamma: float = 0.0) -> WorstCaseResult:
    """Full scan over every scenario with at most ``alpha`` damaged members."""
    _check_alpha(gs, alpha)
    m = gs.n_members
    damaged_sets = []
    lam_parts = []
    total = 0
    for k in range(alpha + 1):
        damaged = _scenarios(m, k)
        lams, solved = _evaluate(gs, areas, damaged, gamma, False)
        total += solved
        damaged_sets.extend(tuple(int(i) for i in row) for row in damaged)
        lam_parts.append(lams)
    lams = np.concatenate(lam_parts)
    worst = float(np.min(lams))
    table = list(zip(damaged_sets, (float(v) for v in lams)))
    minimizers = [DamageScenario(d, m, gamma) for d, v in table if is_tied(v, worst)]
    return WorstCaseResult(worst, minimizers, table, total)


def _check_alpha(gs: GroundStructure, alpha: int) -> None:
    if int(alpha) != alpha or alpha < 0:
        raise ModelError("alpha must be a nonnegative integer")
    if alpha > gs.n_members:
        raise ModelError(f"alpha={alpha} exceeds the number of members ({gs.n_members})")


def scenario_count(m: int, alpha: int) -> int:
    return comb(m, alpha)


class NominalViolation:
    """Returned by :func:`strong_redundancy` when the intact design already fails."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "NominalViolation"


NOMINAL_VIOLATION = NominalViolation()


def strong_redundancy(gs: GroundStructure, areas, h_c: float, gamma: float = 0.0,
                      rtol: float = 1e-9) -> int | NominalViolation:
    """Largest alpha whose worst-case f-value (= -lambda) stays within ``h_c``.

    ``f <= h_c`` is tested with a relative tolerance ``rtol`` so that a design
    checked against its own nominal value passes at alpha = 0.
    """
    slack = rtol * max(1.0, abs(h_c)) if math.isfinite(h_c) else 0.0
    alpha = 0
    while alpha <= gs.n_members:
        # stepping alpha up from 0 covers every level below the current one
        result = worst_case(gs, areas, alpha, gamma)
        if not result.f_value <= h_c + slack:
            return NOMINAL_VIOLATION if alpha == 0 else alpha - 1
        alpha += 1
    return gs.n_members


class WorstCaseObjective:
    """``f(x) = -worst-case load factor`` with caching and evaluation counters.

    The cache is keyed on the exact bytes of the area vector; it is guarded by
    a lock so concurrent evaluations may share one instance.
    """

    def __init__(self, gs: GroundStructure, alpha: int, gamma: float = 0.0):
        _check_alpha(gs, alpha)
        self.gs = gs
        self.alpha = int(alpha)
        self.gamma = float(gamma)
        self.evaluations = 0
        self.lp_count = 0
        self.cache_hits = 0
        self._cache: dict[bytes, float] = {}
        self._lock = threading.Lock()

    def __call__(self, x) -> float:
        x = np.ascontiguousarray(x, dtype=float)
        key = x.tobytes()
        with self._lock:
            if key in self._cache:
                self.cache_hits += 1
                return self._cache[key]
        lam, solved = worst_case_value(self.gs, x, self.alpha, self.gamma)
        f = -lam
        with self._lock:
            self._cache.setdefault(key, f)
            self.evaluations += 1
            self.lp_count += solved
        return f

    def result(self, x) -> WorstCaseResult:
        return worst_case(self.gs, x, self.alpha, self.gamma)
