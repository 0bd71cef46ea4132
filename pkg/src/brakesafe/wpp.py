"""Weakest-precondition patterns from braking interruptions back to detector FNs.

Through the policy, an FN at the tracker output at step k produces exactly a
braking interruption at step k, so the tracker FN pattern equals the
interruption pattern.  The keep-alive tracker can only remove FNs, never add
them, so a detector FN pattern with the same lower bound and no upper bound
over-approximates the set of detector sequences that can cause it.

Both claims are stated here and checked by simulation in ``verify_wpp``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Optional, Union

from .dsm import ConfigKind, DetectorModel, DsmConfig, TrackerConfig, simulate_dsm
from .patterns import CountPattern, ErrorSequence, contains, sample
from .scenario import ScenarioParams, derive_geometry
from .severity import SeverityPatternTable

TAB3 = "tab3"
TAB5 = "tab5"


@dataclass(frozen=True)
class HepRow:
    label: str
    ubi_pattern: CountPattern
    tracker_pattern: CountPattern
    detector_pattern: CountPattern


@dataclass
class HepTable:
    rows: list[HepRow] = field(default_factory=list)

    def as_dicts(self) -> list[dict]:
        return [
            {
                "severity": r.label,
                "ubi": str(r.ubi_pattern),
                "tracker_fn": str(r.tracker_pattern),
                "detector_fn": str(r.detector_pattern),
            }
            for r in self.rows
        ]


def wpp_policy(ubi: CountPattern) -> CountPattern:
    """Tracker-output FN pattern causing exactly the interruption pattern ``ubi``."""
    return CountPattern(ubi.k_min, ubi.k_max, ubi.n_max)


def wpp_tracker_overapprox(tracker_p: CountPattern) -> CountPattern:
    """Detector FN pattern containing every detector sequence that can yield ``tracker_p``."""
    return CountPattern(tracker_p.k_min, tracker_p.n_max, tracker_p.n_max)


def build_hep_table(spt: Union[SeverityPatternTable, Iterable[tuple[str, CountPattern]], None],
                    convention: str = TAB3) -> HepTable:
    """One row per hazardous severity range.

    ``convention="tab5"`` lowers the detector ``k_min`` of the rows after the
    first by one (thresholds ``k_S0, k_S1, k_S2`` instead of ``k + 1``).
    """
    if convention not in (TAB3, TAB5):
        raise ValueError(f"unknown convention {convention!r}")
    if spt is None:
        return HepTable()
    rows = spt.hazardous_rows() if isinstance(spt, SeverityPatternTable) else list(spt)
    table = HepTable()
    for i, (label, ubi) in enumerate(rows):
        tracker = wpp_policy(ubi)
        detector = wpp_tracker_overapprox(tracker)
        if convention == TAB5 and i > 0 and detector.k_min > 0:
            detector = CountPattern(detector.k_min - 1, detector.k_max, detector.n_max)
        table.rows.append(HepRow(label, ubi, tracker, detector))
    return table


@dataclass
class WppReport:
    pattern: CountPattern
    sequences_checked: int = 0
    identity_violations: list[str] = field(default_factory=list)
    soundness_checked: int = 0
    soundness_violations: list[str] = field(default_factory=list)
    max_abs_accel_diff: float = 0.0

    @property
    def ok(self) -> bool:
        return not self.identity_violations and not self.soundness_violations

    def as_dict(self) -> dict:
        return {
            "pattern": str(self.pattern),
            "sequences_checked": self.sequences_checked,
            "identity_violations": self.identity_violations,
            "max_abs_accel_diff": self.max_abs_accel_diff,
            "soundness_checked": self.soundness_checked,
            "soundness_violations": self.soundness_violations,
            "ok": self.ok,
        }


def _all_sequences(n_max: int, pattern: CountPattern):
    for size in range(pattern.k_min, pattern.k_max + 1):
        for steps in itertools.combinations(range(n_max), size):
            yield ErrorSequence(steps, n_max)


def identity_gap(params: ScenarioParams, rho: ErrorSequence,
                 detector: DetectorModel = DetectorModel()) -> float:
    """Largest acceleration difference between tracker-FN and interruption injection."""
    geom = derive_geometry(params)
    a = simulate_dsm(params, geom, DsmConfig(ConfigKind.C_PA, rho, detector=detector))
    b = simulate_dsm(params, geom, DsmConfig(ConfigKind.C_PTILDE_D, rho, detector=detector))
    if len(a.samples) != len(b.samples):
        return float("inf")
    gap = 0.0
    for ra, rb in zip(a.samples, b.samples):
        if abs(ra[0] - rb[0]) > 1e-9:
            return float("inf")
        gap = max(gap, abs(ra[3] - rb[3]))
    return gap


def verify_wpp(params: ScenarioParams, pattern: CountPattern, trials: int = 1000, seed: int = 0,
               exhaustive: Optional[bool] = None, c_values: Iterable[int] = (0, 1, 2, 3),
               detector: DetectorModel = DetectorModel(), tol: float = 1e-9,
               severity_above: Optional[float] = None) -> WppReport:
    """Check the identity and over-approximation claims by simulation.

    (a) For sequences in ``pattern``, FN injection at the tracker output and
        interruption injection give the same acceleration trace.
    (b) For detector FN sequences with fewer than ``pattern.k_min`` FNs, the
        real tracker never produces an FN sequence inside ``pattern``, for every
        keep-alive ``c`` in ``c_values``.  With ``severity_above`` set, such
        runs must also not crash faster than that impact speed (use a
        negative value to forbid any contact).

    Exhaustive enumeration is used when ``n_max <= 10`` unless disabled.
    """
    n_max = pattern.n_max
    geom = derive_geometry(params)
    if geom.n_max != n_max:
        raise ValueError(f"pattern horizon {n_max} != scenario n_max {geom.n_max}")
    if exhaustive is None:
        exhaustive = n_max <= 10
    report = WppReport(pattern)

    seqs = list(_all_sequences(n_max, pattern)) if exhaustive else sample(pattern, seed, trials)
    for rho in seqs:
        gap = identity_gap(params, rho, detector)
        report.sequences_checked += 1
        report.max_abs_accel_diff = max(report.max_abs_accel_diff, gap)
        if gap > tol:
            report.identity_violations.append(f"{rho}: max |da| = {gap:.3g}")

    if pattern.k_min == 0:
        return report
    below = CountPattern(0, pattern.k_min - 1, n_max)
    fewer = list(_all_sequences(n_max, below)) if exhaustive else sample(below, seed + 1, trials)
    for c in c_values:
        for rho in fewer:
            traj = simulate_dsm(params, geom, DsmConfig(ConfigKind.C_PHAT_D, rho, detector=detector,
                                                        tracker=TrackerConfig(c)))
            report.soundness_checked += 1
            out = ErrorSequence(traj.tracker_fn_steps, n_max)
            if contains(pattern, out):
                report.soundness_violations.append(
                    f"c={c} detector {rho} gave tracker FNs {out} inside {pattern}")
            elif len(out) > len(rho):
                report.soundness_violations.append(
                    f"c={c} tracker FNs {out} exceed detector FNs {rho}")
            o = traj.outcome
            if severity_above is not None and o.collided and o.v_impact > severity_above:
                report.soundness_violations.append(
                    f"c={c} detector {rho} crashed at {o.v_impact:.3f} m/s")
    return report
