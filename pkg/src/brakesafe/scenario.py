"""High-level scenario model: braking for a stationary vehicle ahead.

The subject vehicle starts at ``s = 0`` with speed ``v_init`` and must stop
``delta_s_stand`` behind a stationary vehicle at ``s_pov``.  The driving
policy applies the braking required to stop at that standstill distance
when it lies within ``[a_b_min, a_b_max)``, accelerates towards ``v_max``
when less braking is needed, and brakes at ``a_b_max`` otherwise.

Two hazardous behaviors can be injected:

* unintended braking interruption (UBI): during the injected time steps the
  policy output is replaced by ``max_acc`` (accelerate up to ``v_max``);
* unintended insufficient braking (UIB): the required braking is scaled by
  ``1 - eta`` before the policy case analysis.

Integration holds the acceleration constant over sub-steps of
``delta_t / substeps_per_step`` and advances the kinematics exactly.  Sub-steps
are split at injection boundaries, at ``v = 0``, at ``v = v_max`` and at the
moment of contact, so crash time and impact speed are exact for the held
acceleration.
"""

from __future__ import annotations

import csv
import io
import json
import math
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

from .patterns import ErrorSequence

EPS_T = 1e-12
# relative slack on the a_b_min case boundary; the nominal run sits exactly on it
A_REQ_RTOL = 1e-9


class ParameterError(ValueError):
    """Invalid scenario parameters or injection."""


class DomainError(ValueError):
    """Function evaluated outside its domain."""


class SimulationDivergence(RuntimeError):
    """The closed loop did not terminate within the hard time cap."""


@dataclass(frozen=True)
class ScenarioParams:
    """Kinematic and policy constants; defaults are the running braking example."""

    v_init: float = 15.0
    v_max: float = 15.0
    a_b_min: float = 1.0
    a_b_max: float = 8.0
    a_max: float = 1.0
    delta_s_stand: float = 5.0
    delta_t: float = 0.1
    substeps_per_step: int = 10

    def __post_init__(self):
        positive = ("v_max", "a_b_min", "a_b_max", "a_max", "delta_s_stand", "delta_t")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be > 0, got {getattr(self, name)}")
        if self.v_init < 0:
            raise ParameterError(f"v_init must be >= 0, got {self.v_init}")
        if self.a_b_min > self.a_b_max:
            raise ParameterError("a_b_min must not exceed a_b_max")
        if self.v_init > self.v_max:
            raise ParameterError("v_init must not exceed v_max")
        if int(self.substeps_per_step) != self.substeps_per_step or self.substeps_per_step < 1:
            raise ParameterError("substeps_per_step must be an integer >= 1")

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioParams":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ParameterError(f"unknown scenario field(s): {', '.join(sorted(unknown))}")
        return cls(**data)


@dataclass(frozen=True)
class ScenarioGeometry:
    s_stop: float
    s_pov: float
    t_max: float
    n_max: int


def derive_geometry(params: ScenarioParams) -> ScenarioGeometry:
    if params.a_b_min == 0:
        raise ParameterError("a_b_min must be non-zero")
    s_stop = params.v_init**2 / (2.0 * params.a_b_min)
    t_max = params.v_init / params.a_b_min
    # round() guards against 15/0.1 = 150.00000000000003
    ratio = t_max / params.delta_t
    n_max = int(math.ceil(round(ratio, 9)))
    return ScenarioGeometry(s_stop, s_stop + params.delta_s_stand, t_max, n_max)


def required_braking(d: float, s_dot: float, delta_s_stand: float) -> float:
    """Deceleration needed to stop ``delta_s_stand`` short of an obstacle at ``d``."""
    if d <= delta_s_stand:
        raise DomainError(f"d={d} must exceed delta_s_stand={delta_s_stand}")
    return s_dot * s_dot / (2.0 * (d - delta_s_stand))


def policy(d: float, s_dot: float, params: ScenarioParams, eta: float = 0.0,
           speed_factor: float = 1.0) -> float:
    """Driving policy acceleration (negative means braking).

    ``eta`` scales the required braking by ``1 - eta`` (insufficient
    braking); ``speed_factor`` scales the speed used in the required-braking
    formula (odometry underestimate).
    """
    p = params
    if d <= p.delta_s_stand:
        return 0.0 if s_dot <= 0.0 else -p.a_b_max
    v_est = s_dot * speed_factor
    a_req = (1.0 - eta) * v_est * v_est / (2.0 * (d - p.delta_s_stand))
    if a_req < p.a_b_min * (1.0 - A_REQ_RTOL):
        return 0.0 if s_dot >= p.v_max else p.a_max
    if a_req < p.a_b_max:
        return -a_req
    # a_req == a_b_max is assigned to the full-braking branch
    return -p.a_b_max


def max_acc(s_dot: float, params: ScenarioParams) -> float:
    return params.a_max if s_dot < params.v_max else 0.0


def step_index(t: float, delta_t: float) -> int:
    # tolerate t = k*dt computed with rounding error just below the grid point
    return int(math.floor(t / delta_t + 1e-9))


def injection_switch(t: float, h: float, h_prime: float, rho, delta_t: float) -> float:
    """Return ``h`` when the current step ``floor(t/dt)`` is in ``rho``, else ``h_prime``."""
    return h if step_index(t, delta_t) in rho else h_prime


EtaSignal = Union[float, Sequence[float]]


@dataclass(frozen=True)
class InjectionSpec:
    """Hazardous behavior injected into one run.

    ``ubi_steps`` are grid-aligned interruption steps; ``ubi_intervals`` are
    additional interruptions given as continuous ``[start, end)`` times.
    ``eta_braking`` is either a constant or one value per time step (steps
    beyond the given values use 0).
    """

    ubi_steps: ErrorSequence = field(default_factory=ErrorSequence)
    eta_braking: EtaSignal = 0.0
    ubi_intervals: tuple[tuple[float, float], ...] = ()

    def validate(self, geom: ScenarioGeometry) -> None:
        if self.ubi_steps.steps and self.ubi_steps.steps[-1] >= geom.n_max:
            raise ParameterError(f"UBI step {self.ubi_steps.steps[-1]} >= n_max={geom.n_max}")
        values = [self.eta_braking] if isinstance(self.eta_braking, (int, float)) else self.eta_braking
        for v in values:
            if not 0.0 <= v <= 1.0:
                raise ParameterError(f"eta values must lie in [0, 1], got {v}")
        for a, b in self.ubi_intervals:
            if not 0.0 <= a <= b:
                raise ParameterError(f"bad UBI interval ({a}, {b})")

    def eta_at(self, k: int) -> float:
        if isinstance(self.eta_braking, (int, float)):
            return float(self.eta_braking)
        return float(self.eta_braking[k]) if 0 <= k < len(self.eta_braking) else 0.0


@dataclass(frozen=True)
class CrashOutcome:
    collided: bool
    v_impact: Optional[float]
    t_c: Optional[float]


@dataclass
class Trajectory:
    """Samples ``(t, s, v, a, d)``; ``a`` is the acceleration held from ``t`` on."""

    samples: list[tuple[float, float, float, float, float]]
    outcome: CrashOutcome
    final_overshoot: float
    detector_fn_steps: tuple[int, ...] = ()
    tracker_fn_steps: tuple[int, ...] = ()

    @property
    def accelerations(self) -> list[float]:
        return [row[3] for row in self.samples]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "s", "v", "a", "d"])
        for row in self.samples:
            w.writerow([f"{x:.6g}" for x in row])
        return buf.getvalue()

    def outcome_dict(self) -> dict:
        o = self.outcome
        return {
            "collided": o.collided,
            "v_impact": o.v_impact,
            "t_c": o.t_c,
            "overshoot": self.final_overshoot,
        }

    def outcome_json(self) -> str:
        return json.dumps(self.outcome_dict(), sort_keys=True)


def crash_check(samples: Sequence[tuple], s_pov: Optional[float] = None) -> CrashOutcome:
    """First contact (``d <= 0``) with linear interpolation between samples.

    Samples are ``(t, s, v, ...)``; ``d`` is taken as ``s_pov - s`` when
    ``s_pov`` is given, else from the fifth column.
    """
    if not samples:
        raise ValueError("empty trajectory")

    def gap(row):
        return s_pov - row[1] if s_pov is not None else row[4]

    prev = None
    for row in samples:
        d = gap(row)
        if d <= 0.0:
            if prev is None or gap(prev) <= 0.0:
                return CrashOutcome(True, float(row[2]), float(row[0]))
            d0 = gap(prev)
            w = d0 / (d0 - d)
            t_c = prev[0] + w * (row[0] - prev[0])
            v_c = prev[2] + w * (row[2] - prev[2])
            return CrashOutcome(True, float(v_c), float(t_c))
        prev = row
    return CrashOutcome(False, None, None)


@dataclass
class StepInput:
    """Per-step inputs to the policy, supplied by an injection configuration."""

    ubi: bool = False
    d_override: Optional[float] = None
    eta: float = 0.0
    speed_factor: float = 1.0
    r_max: float = math.inf


StepHook = Callable[[int, float, float, float], StepInput]


@dataclass
class _RunResult:
    samples: list
    collided: bool
    t_c: Optional[float]
    v_impact: Optional[float]
    s_max: float
    d_min: float
    settled: bool


def _solve_time_to_distance(v: float, a: float, dist: float, tau: float) -> Optional[float]:
    """Smallest ``x`` in ``[0, tau]`` with ``v*x + a*x^2/2 = dist`` (dist >= 0)."""
    if dist <= 0.0:
        return 0.0
    if abs(a) < 1e-15:
        if v <= 0.0:
            return None
        x = dist / v
        return x if x <= tau else None
    disc = v * v + 2.0 * a * dist
    if disc < 0.0:
        return None
    root = math.sqrt(disc)
    # numerically stable form of (-v + root) / a
    x = 2.0 * dist / (v + root) if v + root > 0 else (-v + root) / a
    return x if 0.0 <= x <= tau * (1 + 1e-12) else None


def integrate(
    params: ScenarioParams,
    geom: ScenarioGeometry,
    step_hook: StepHook,
    intervals: Sequence[tuple[float, float]] = (),
    pending: Callable[[int], bool] = lambda k: False,
    early_exit: bool = False,
    record: bool = True,
) -> _RunResult:
    """Closed-loop integration shared by the high-level and detailed models.

    ``step_hook(k, t, s, v)`` is called at the start of every time step and
    returns the policy inputs for that step.  ``pending(k)`` reports whether
    any injection remains at or after step ``k`` (a stopped vehicle is only
    considered finished once nothing is pending).  With ``early_exit`` the
    run ends as soon as the vehicle brakes at exactly its required level with
    nothing pending, since it is then certain to stop at ``s_stop``.
    """
    p = params
    dt = p.delta_t
    n_sub = int(p.substeps_per_step)
    h = dt / n_sub
    s_pov = geom.s_pov
    v_max = p.v_max
    t_cap = 2.0 * geom.t_max + dt

    ivals = sorted((float(a), float(b)) for a, b in intervals if b > a)
    bounds = sorted({x for iv in ivals for x in iv})

    t, s, v = 0.0, 0.0, float(p.v_init)
    sub_i = 0
    k = -1
    inp = StepInput()
    samples = []
    s_max = 0.0
    d_min = s_pov
    iv_i = 0

    while True:
        if t > t_cap:
            raise SimulationDivergence(f"no termination by t={t_cap:.3f}s")
        k_now = sub_i // n_sub
        if k_now != k:
            k = k_now
            inp = step_hook(k, t, s, v)
        t_grid = (sub_i + 1) * h
        t_end = t_grid
        bi = bisect_right(bounds, t + EPS_T)
        if bi < len(bounds) and bounds[bi] < t_end - EPS_T:
            t_end = bounds[bi]

        mid = 0.5 * (t + t_end)
        while iv_i < len(ivals) and ivals[iv_i][1] <= mid:
            iv_i += 1
        in_interval = iv_i < len(ivals) and ivals[iv_i][0] <= mid < ivals[iv_i][1]
        ubi = inp.ubi or in_interval

        d = s_pov - s
        if ubi:
            a = p.a_max if v < v_max else 0.0
        else:
            if inp.d_override is not None:
                d_seen = inp.d_override
            else:
                d_seen = d if d < inp.r_max else inp.r_max
            a = policy(d_seen, v, p, inp.eta, inp.speed_factor)

        if v == 0.0 and a <= 0.0:
            a = 0.0
            if not pending(k) and iv_i >= len(ivals):
                if record:
                    samples.append((t, s, v, a, d))
                return _RunResult(samples, False, None, None, s_max, d_min, False)

        if (early_exit and not ubi and inp.eta == 0.0 and inp.speed_factor == 1.0
                and inp.d_override is None and a < 0.0 and -a >= p.a_b_min
                and -a < p.a_b_max and d > p.delta_s_stand
                and not pending(k + 1) and iv_i >= len(ivals)):
            return _RunResult(samples, False, None, None, max(s_max, geom.s_stop),
                              min(d_min, p.delta_s_stand), True)

        tau = t_end - t
        split = False
        if a < 0.0 and v + a * tau < 0.0:
            tau = v / -a
            split = True
        elif a > 0.0 and v < v_max and v + a * tau > v_max:
            tau = (v_max - v) / a
            split = True

        x_c = _solve_time_to_distance(v, a, d, tau)
        if x_c is not None:
            t_c = t + x_c
            v_c = max(0.0, v + a * x_c)
            if record:
                samples.append((t, s, v, a, d))
                samples.append((t_c, s_pov, v_c, a, 0.0))
            return _RunResult(samples, True, t_c, v_c, s_pov, 0.0, False)

        if record:
            samples.append((t, s, v, a, d))
        s_new = s + v * tau + 0.5 * a * tau * tau
        v_new = v + a * tau
        if split:
            v_new = 0.0 if a < 0.0 else v_max
            t_new = t + tau
            if t_new >= t_grid - EPS_T:
                t_new = t_grid
                sub_i += 1
        else:
            t_new = t_end if t_end < t_grid else t_grid
            if t_end >= t_grid:
                sub_i += 1
        if v_new < 0.0:
            v_new = 0.0
        t, s, v = t_new, s_new, v_new
        if s > s_max:
            s_max = s
        if s_pov - s < d_min:
            d_min = s_pov - s


def simulate(params: ScenarioParams, injection: Optional[InjectionSpec] = None) -> Trajectory:
    """Simulate the high-level model with the given UBI / UIB injection."""
    geom = derive_geometry(params)
    injection = injection or InjectionSpec(ErrorSequence((), geom.n_max))
    injection.validate(geom)
    rho = injection.ubi_steps
    last = rho.steps[-1] if rho.steps else -1

    def hook(k, t, s, v):
        return StepInput(ubi=k in rho, eta=injection.eta_at(k))

    run = integrate(params, geom, hook, injection.ubi_intervals, pending=lambda k: k <= last)
    return _to_trajectory(run, geom)


def _to_trajectory(run: _RunResult, geom: ScenarioGeometry) -> Trajectory:
    outcome = crash_check(run.samples) if run.samples else CrashOutcome(False, None, None)
    if run.collided:
        outcome = CrashOutcome(True, run.v_impact, run.t_c)
    overshoot = max(0.0, run.s_max - geom.s_stop)
    return Trajectory(run.samples, outcome, overshoot)


def impact_metric(params: ScenarioParams, geom: ScenarioGeometry,
                  intervals: Sequence[tuple[float, float]]) -> float:
    """Signed severity of a UBI run: ``v_impact`` on contact, else a negative
    closing-speed equivalent ``-sqrt(2*a_b_max*d_min)`` of the closest gap.

    Continuous across the contact boundary, which makes it suitable for
    searching over interruption placement.
    """
    run = integrate(params, geom, _NO_STEP_INPUT, intervals, early_exit=True, record=False)
    if run.collided:
        return run.v_impact
    return -math.sqrt(2.0 * params.a_b_max * max(run.d_min, 0.0))


_DEFAULT_INPUT = StepInput()


def _NO_STEP_INPUT(k, t, s, v):
    return _DEFAULT_INPUT
