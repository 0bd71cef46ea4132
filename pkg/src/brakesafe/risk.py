"""Risk arithmetic: exposure products, HEP rate bounds and acceptance checks.

Rates carry an explicit exposure unit (``per-km``, ``per-h``, ``per-event``,
or any other tag the user chooses).  Units are never converted; combining
rates with different tags raises ``UnitMismatchError``.
"""

from __future__ import annotations

import enum
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Mapping, Optional, Sequence

import numpy as np
from scipy.stats import binomtest

from .dsm import DsmConfig, simulate_dsm
from .scenario import ScenarioParams, derive_geometry
from .severity import ImpactSeverityBounds

SEVERITY_CLASSES = ("S0", "S1", "S2", "S3")


class UnitMismatchError(ValueError):
    """Rates with different exposure units were combined."""


def _check_prob(name: str, p: float) -> float:
    p = float(p)
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {p}")
    return p


@dataclass(frozen=True)
class Rate:
    """Events per unit of exposure, e.g. ``Rate(2.0, "per-1000km")``."""

    value: float
    unit: str

    def __post_init__(self):
        if not self.value >= 0.0:
            raise ValueError(f"rate must be >= 0, got {self.value}")
        if not self.unit:
            raise ValueError("rate needs a unit tag")

    def __add__(self, other: "Rate") -> "Rate":
        if not isinstance(other, Rate):
            return NotImplemented
        if other.unit != self.unit:
            raise UnitMismatchError(f"cannot add {self.unit} and {other.unit}")
        return Rate(self.value + other.value, self.unit)

    def scaled(self, p: float) -> "Rate":
        return Rate(self.value * p, self.unit)

    def __str__(self) -> str:
        return f"{self.value:.6g} {self.unit}"


class Quadrant(str, enum.Enum):
    """Scenario-condition classes by relevance to DAS inputs and to the hazardous behavior."""

    Q1 = "Q1"  # input-relevant only
    Q2 = "Q2"  # input-relevant and HB-sensitive
    Q3 = "Q3"  # HB-sensitive only
    Q4 = "Q4"  # neither

    @classmethod
    def classify(cls, input_relevant: bool, hb_sensitive: bool) -> "Quadrant":
        if input_relevant:
            return cls.Q2 if hb_sensitive else cls.Q1
        return cls.Q3 if hb_sensitive else cls.Q4


@dataclass(frozen=True)
class ScenarioCondition:
    id: str
    quadrant: Quadrant
    occurrence_rate: Rate

    def __post_init__(self):
        object.__setattr__(self, "quadrant", Quadrant(self.quadrant))


@dataclass(frozen=True)
class AcceptanceCriterion:
    label: str
    max_rate: Rate


@dataclass(frozen=True)
class PartitionRate:
    id: str
    rate: Rate


def hazard_prob(p_hb_given_hbsc: float, p_hbsc: float) -> float:
    """Probability of harm from a hazardous behavior occurring under its sensitive condition."""
    return _check_prob("p_hb_given_hbsc", p_hb_given_hbsc) * _check_prob("p_hbsc", p_hbsc)


def hep_rate_bound(p_fn: float, n_max: int, k_min: int) -> float:
    """Probability of at least ``k_min`` FNs among ``n_max`` i.i.d. frames.

    Binomial upper tail summed from log-space terms, stable for small ``p_fn``
    and large horizons.
    """
    p = _check_prob("p_fn", p_fn)
    if not 0 <= k_min <= n_max:
        raise ValueError(f"need 0 <= k_min <= n_max, got k_min={k_min}, n_max={n_max}")
    if k_min == 0 or p == 1.0:
        return 1.0
    if p == 0.0:
        return 0.0
    lp, lq = math.log(p), math.log1p(-p)
    logs = [math.log(math.comb(n_max, j)) + j * lp + (n_max - j) * lq
            for j in range(k_min, n_max + 1)]
    top = max(logs)
    return min(1.0, math.exp(top) * math.fsum(math.exp(x - top) for x in logs))


def pattern_occurrence_rate(p_pattern_given_cond: float, lambda_cond: Rate) -> Rate:
    """Rate of a pattern occurring: its probability per condition times the condition rate."""
    return lambda_cond.scaled(_check_prob("p_pattern_given_cond", p_pattern_given_cond))


@dataclass
class RiskReport:
    partitions: list[PartitionRate]
    residual: Rate
    aggregate: Rate
    criteria: list[AcceptanceCriterion]
    passed: dict[str, bool]
    mc_intervals: dict[str, tuple[float, float]] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(self.passed.values())

    def as_dict(self) -> dict:
        return {
            "unit": self.aggregate.unit,
            "partitions": [{"id": p.id, "rate": p.rate.value} for p in self.partitions],
            "residual": self.residual.value,
            "aggregate": self.aggregate.value,
            "criteria": [
                {"label": c.label, "max_rate": c.max_rate.value, "pass": self.passed[c.label]}
                for c in self.criteria
            ],
            "ok": self.ok,
        }

    def as_text(self) -> str:
        lines = [f"{p.id}: {p.rate}" for p in self.partitions]
        lines.append(f"residual: {self.residual}")
        lines.append(f"aggregate: {self.aggregate}")
        for c in self.criteria:
            verdict = "PASS" if self.passed[c.label] else "FAIL"
            lines.append(f"{c.label}: {self.aggregate.value:.6g} <= {c.max_rate.value:.6g} {verdict}")
        return "\n".join(lines) + "\n"


def aggregate_and_check(partition_rates: Sequence[PartitionRate | Rate], residual: Rate,
                        criteria: Iterable[AcceptanceCriterion]) -> RiskReport:
    """Sum partition rates and the residual; compare against every criterion."""
    parts = [p if isinstance(p, PartitionRate) else PartitionRate(f"partition-{i}", p)
             for i, p in enumerate(partition_rates)]
    criteria = list(criteria)
    total = residual
    for p in parts:
        total = total + p.rate
    # exact summation, independent of partition order
    total = Rate(math.fsum([residual.value] + [p.rate.value for p in parts]), total.unit)
    passed = {}
    for c in criteria:
        if c.max_rate.unit != total.unit:
            raise UnitMismatchError(f"criterion {c.label} in {c.max_rate.unit}, rates in {total.unit}")
        passed[c.label] = total.value <= c.max_rate.value
    return RiskReport(parts, residual, total, criteria, passed)


def wilson_interval(successes: int, trials: int, confidence: float = 0.95) -> tuple[float, float]:
    ci = binomtest(int(successes), int(trials)).proportion_ci(confidence_level=confidence,
                                                               method="wilson")
    return float(ci.low), float(ci.high)


@dataclass
class McResult:
    trials: int
    counts: dict[str, int]
    seed: int

    def estimate(self, key: str = "crash") -> float:
        return self.counts[key] / self.trials

    def interval(self, key: str = "crash") -> tuple[float, float]:
        return wilson_interval(self.counts[key], self.trials)

    def sigma(self, key: str = "crash") -> float:
        p = self.estimate(key)
        return math.sqrt(p * (1.0 - p) / self.trials)

    def as_dict(self) -> dict:
        out = {"trials": self.trials, "seed": self.seed, "classes": {}}
        for key in self.counts:
            lo, hi = self.interval(key)
            out["classes"][key] = {"count": self.counts[key], "estimate": self.estimate(key),
                                   "ci95": [lo, hi]}
        return out


def _empty_counts() -> dict[str, int]:
    return {"crash": 0, **{s: 0 for s in SEVERITY_CLASSES}}


def _mc_chunk(args) -> dict[str, int]:
    params, config, bounds, runs = args
    geom = derive_geometry(params)
    counts = _empty_counts()
    for run in runs:
        o = simulate_dsm(params, geom, config, run=run).outcome
        if o.collided:
            counts["crash"] += 1
            counts[bounds.classify(o.v_impact)] += 1
    return counts


def monte_carlo_crash_prob(params: ScenarioParams, dsm_config: DsmConfig,
                           severity_bounds: ImpactSeverityBounds = ImpactSeverityBounds(),
                           trials: int = 1000, seed: int = 0, jobs: int = 1,
                           progress: Optional[Callable[[int, int], None]] = None) -> McResult:
    """Crash and severity-class frequencies of independent DSM runs.

    Run ``i`` draws its detector noise from stream ``(seed, i)``, so the tally
    does not depend on ``jobs`` or on chunking.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    config = replace(dsm_config, seed=seed)
    chunk = max(1, min(1000, trials // max(1, 4 * jobs) or 1))
    tasks = [(params, config, severity_bounds, range(a, min(a + chunk, trials)))
             for a in range(0, trials, chunk)]
    counts = _empty_counts()
    done = 0

    def absorb(c, n):
        nonlocal done
        for k, v in c.items():
            counts[k] += v  # integer tallies are exact
        done += n
        if progress:
            progress(done, trials)

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for task, c in zip(tasks, pool.map(_mc_chunk, tasks)):
                absorb(c, len(task[3]))
    else:
        for task in tasks:
            absorb(_mc_chunk(task), len(task[3]))
    return McResult(trials, counts, seed)


def stderr_progress(done: int, total: int) -> None:
    print(f"\r{done}/{total} runs", end="\n" if done == total else "", file=sys.stderr, flush=True)


def mc_fn_count_frequency(p_fn: float, n_max: int, k_min: int, trials: int, seed: int = 0,
                          chunk: int = 100_000) -> tuple[int, int]:
    """Count trials with at least ``k_min`` Bernoulli(``p_fn``) FNs among ``n_max`` frames.

    Returns ``(hits, trials)``.
    """
    rng = np.random.default_rng(seed)
    hits = 0
    left = trials
    while left:
        m = min(chunk, left)
        fn = (rng.random((m, n_max)) < p_fn).sum(axis=1)
        hits += int(np.count_nonzero(fn >= k_min))
        left -= m
    return hits, trials


def partitions_from_spec(spec: Mapping) -> tuple[list[PartitionRate], Rate, list[AcceptanceCriterion]]:
    """Read a risk spec (parsed JSON).

    ``{"unit": "per-h", "residual": 1e-9,
       "partitions": [{"id": "rain", "rate": 2e-9} |
                      {"id": "fog", "p_fn": 0.05, "n_max": 150, "k_min": 19, "lambda": 1e-3}],
       "criteria": [{"label": "S1..3", "max_rate": 1e-8}]}``
    """
    unit = spec["unit"]
    parts = []
    for i, p in enumerate(spec.get("partitions", ())):
        pid = p.get("id", f"partition-{i}")
        if "rate" in p:
            parts.append(PartitionRate(pid, Rate(float(p["rate"]), p.get("unit", unit))))
        else:
            prob = hep_rate_bound(float(p["p_fn"]), int(p["n_max"]), int(p["k_min"]))
            lam = Rate(float(p["lambda"]), p.get("unit", unit))
            parts.append(PartitionRate(pid, pattern_occurrence_rate(prob, lam)))
    residual = Rate(float(spec.get("residual", 0.0)), unit)
    criteria = [AcceptanceCriterion(c["label"], Rate(float(c["max_rate"]), c.get("unit", unit)))
                for c in spec.get("criteria", ())]
    return parts, residual, criteria
