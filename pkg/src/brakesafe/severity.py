"""Severity analysis of braking interruptions.

Maps the duration of a single braking interruption to the worst impact
speed it can cause, inverts that map for the severity-class boundaries, and
turns the resulting durations into severity-bounded interruption patterns.
"""

from __future__ import annotations

import math
from concurrent.futures import Executor
from dataclasses import dataclass
from functools import partial
from typing import Optional

import numpy as np
from scipy.optimize import minimize_scalar

from .patterns import CountPattern, ErrorSequence, is_subset
from .scenario import (
    InjectionSpec,
    ScenarioParams,
    derive_geometry,
    impact_metric,
    simulate,
)


class InfeasibleError(ValueError):
    """Requested impact speed cannot be reached by any interruption."""


@dataclass(frozen=True)
class ImpactSeverityBounds:
    """Upper ``v_impact`` bounds (m/s) of classes S0, S1, S2; ``v_cap`` closes S3."""

    v_s0: float = 5.3
    v_s1: float = 7.8
    v_s2: float = 10.3
    v_cap: float = 15.0

    def __post_init__(self):
        if not 0 < self.v_s0 < self.v_s1 < self.v_s2 < self.v_cap:
            raise ValueError(
                f"need 0 < v_s0 < v_s1 < v_s2 < v_cap, got "
                f"({self.v_s0}, {self.v_s1}, {self.v_s2}, {self.v_cap})"
            )

    def classify(self, v_impact: Optional[float]) -> Optional[str]:
        """Severity class of a crash, ``None`` when there was no contact."""
        if v_impact is None:
            return None
        if v_impact <= self.v_s0:
            return "S0"
        if v_impact <= self.v_s1:
            return "S1"
        if v_impact <= self.v_s2:
            return "S2"
        return "S3"


@dataclass(frozen=True)
class SeverityTauTable:
    tau_contact: float
    tau_s0: float
    tau_s1: float
    tau_s2: float
    tau_max: float
    k_contact: int
    k_s0: int
    k_s1: int
    k_s2: int

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class SeverityPatternTable:
    p_nocrash: CountPattern
    p_s0_3: CountPattern
    p_s1_3: CountPattern
    p_s2_3: CountPattern
    p_s3: CountPattern

    def rows(self) -> list[tuple[str, CountPattern]]:
        return [
            ("nocrash", self.p_nocrash),
            ("S0..3", self.p_s0_3),
            ("S1..3", self.p_s1_3),
            ("S2..3", self.p_s2_3),
            ("S3", self.p_s3),
        ]

    def hazardous_rows(self) -> list[tuple[str, CountPattern]]:
        return self.rows()[1:]

    def chain_ok(self) -> bool:
        return (is_subset(self.p_s3, self.p_s2_3) and is_subset(self.p_s2_3, self.p_s1_3)
                and is_subset(self.p_s1_3, self.p_s0_3))


def steps_in(tau: float, delta_t: float) -> int:
    """``k(tau) = floor(tau / delta_t)``."""
    return int(math.floor(tau / delta_t + 1e-9))


def worst_single_interruption(params: ScenarioParams, duration: float, grid: int = 50,
                              xatol: float = 1e-3, executor: Optional[Executor] = None,
                              extra_starts=()) -> tuple[float, float]:
    """Worst placement of one interruption of ``duration`` seconds.

    Returns ``(metric, start)`` where ``metric`` is the impact speed when the
    best placement collides and a negative closest-gap equivalent otherwise.
    A coarse grid over start times is refined locally around the best grid
    points, since the landscape can have several local maxima.
    """
    geom = derive_geometry(params)
    horizon = max(geom.t_max, params.delta_t)
    starts = sorted(set(np.linspace(0.0, horizon, grid).tolist()) | set(extra_starts))

    metric = partial(_placement_metric, params, geom, duration)

    if executor is not None:
        values = list(executor.map(metric, starts))
    else:
        values = [metric(st) for st in starts]

    best_val, best_start = max(zip(values, starts))
    best_val, best_start = float(best_val), float(best_start)
    order = np.argsort(values)[::-1]
    refined = set()
    for idx in order[:3]:
        lo = starts[max(idx - 1, 0)]
        hi = starts[min(idx + 1, len(starts) - 1)]
        if (lo, hi) in refined or hi <= lo:
            continue
        refined.add((lo, hi))
        res = minimize_scalar(lambda x: -metric(x), bounds=(lo, hi), method="bounded",
                              options={"xatol": xatol})
        if -res.fun > best_val:
            best_val, best_start = float(-res.fun), float(res.x)
    return best_val, best_start


def _placement_metric(params, geom, duration, start):
    return impact_metric(params, geom, [(start, start + duration)])


def min_ubi_duration(v_target: float, params: ScenarioParams, tol: float = 1e-3,
                     lo: float = 0.0, executor: Optional[Executor] = None) -> float:
    """Shortest single interruption whose worst placement reaches ``v_target``.

    Bisection on the duration; each probe maximises the impact speed over the
    interruption start time.  ``lo`` may be a known lower bound (for instance
    the result for a smaller target).
    """
    if v_target < 0:
        raise ValueError("v_target must be >= 0")
    if v_target > params.v_max:
        raise InfeasibleError(f"v_impact={v_target} exceeds v_max={params.v_max}")
    geom = derive_geometry(params)
    hi = geom.s_pov / params.v_max + params.delta_t
    if worst_single_interruption(params, hi, executor=executor)[0] < v_target:
        raise InfeasibleError(f"no interruption up to {hi:.3f}s reaches v_impact={v_target}")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if worst_single_interruption(params, mid, executor=executor)[0] >= v_target:
            hi = mid
        else:
            lo = mid
    return hi


def severity_tau_table(params: ScenarioParams, bounds: ImpactSeverityBounds = ImpactSeverityBounds(),
                       tol: float = 1e-3, executor: Optional[Executor] = None) -> SeverityTauTable:
    geom = derive_geometry(params)
    taus = []
    lo = 0.0
    for v in (0.0, bounds.v_s0, bounds.v_s1, bounds.v_s2):
        tau = min_ubi_duration(v, params, tol, lo=lo, executor=executor)
        taus.append(tau)
        lo = max(0.0, tau - tol)
    tau_max = geom.s_pov / params.v_max
    ks = [steps_in(tau, params.delta_t) for tau in taus]
    return SeverityTauTable(*taus, tau_max, *ks)


def severity_patterns(tt: SeverityTauTable, n_max: int) -> SeverityPatternTable:
    return SeverityPatternTable(
        p_nocrash=CountPattern(0, max(tt.k_contact - 1, 0), n_max),
        p_s0_3=CountPattern(tt.k_contact, n_max, n_max),
        p_s1_3=CountPattern(tt.k_s0 + 1, n_max, n_max),
        p_s2_3=CountPattern(tt.k_s1 + 1, n_max, n_max),
        p_s3=CountPattern(tt.k_s2 + 1, n_max, n_max),
    )


@dataclass(frozen=True)
class DominanceResult:
    v_multi: Optional[float]
    v_single_max: Optional[float]
    ok: bool


def dominance_check(rho: ErrorSequence, params: ScenarioParams,
                    full_search: bool = False) -> DominanceResult:
    """Compare a multi-interval injection with single intervals of equal total duration.

    By default the search over single-interval start times stops at the first
    start that reaches the multi-interval impact speed, so ``v_single_max`` is
    then the best value found so far.  ``full_search=True`` maximises over all
    starts.
    """
    traj = simulate(params, InjectionSpec(rho))
    if not traj.outcome.collided:
        return DominanceResult(None, None, True)
    v_multi = float(traj.outcome.v_impact)
    duration = len(rho) * params.delta_t
    geom = derive_geometry(params)
    grid_starts = [k * params.delta_t for k in range(geom.n_max)]
    if not full_search:
        first = rho.steps[0] * params.delta_t
        best = -math.inf
        for st in [first] + grid_starts:
            best = max(best, _placement_metric(params, geom, duration, st))
            if best >= v_multi - 1e-6:
                return DominanceResult(v_multi, best, True)
    best, _ = worst_single_interruption(params, duration, extra_starts=grid_starts)
    best = float(best)
    return DominanceResult(v_multi, best, best >= v_multi - 1e-6)
