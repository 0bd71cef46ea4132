"""Detailed scenario model: detector, keep-alive tracker and odometry.

The policy of the high-level model is fed by a perception chain instead of
ground truth.  A range-limited detector reports ``r_max`` when it sees
nothing; a missed detection of an object in range is a false negative (FN).
The tracker keeps a track alive until the last ``c + 1`` detector outputs
are all ``r_max`` and otherwise passes the range-limited ground-truth
distance through.  Odometry may underestimate speed by a constant factor.

Four configurations select where errors are injected:

``C_DSM``       the stochastic chain, no injection
``C_Pa``        ground truth to the policy, braking interruptions at its output
``C_Ptilde_d``  FN (``r_max``) injected at the tracker output
``C_Phat_d``    FN injected at the detector output, feeding the real tracker

Detector and tracker run on the ``delta_t`` grid; the policy sees the
tracker decision held over each step and the continuous ground truth while
the track is alive.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .patterns import ConsecutivePattern, CountPattern, ErrorSequence, sample
from .scenario import (
    ParameterError,
    ScenarioGeometry,
    ScenarioParams,
    StepInput,
    Trajectory,
    _to_trajectory,
    derive_geometry,
    integrate,
)


@dataclass(frozen=True)
class DetectorModel:
    r_max: float = 200.0
    p_fn: float = 0.0
    sigma_d: float = 0.0

    def __post_init__(self):
        if not self.r_max > 0:
            raise ParameterError("r_max must be > 0")
        if not 0.0 <= self.p_fn <= 1.0:
            raise ParameterError("p_fn must lie in [0, 1]")
        if self.sigma_d < 0:
            raise ParameterError("sigma_d must be >= 0")


@dataclass(frozen=True)
class TrackerConfig:
    c: int = 0

    def __post_init__(self):
        if int(self.c) != self.c or self.c < 0:
            raise ParameterError("keep-alive count c must be a non-negative integer")


@dataclass(frozen=True)
class OdometryModel:
    eta_speed: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.eta_speed < 1.0:
            raise ParameterError("eta_speed must lie in [0, 1)")


class ConfigKind(str, enum.Enum):
    C_DSM = "C_DSM"
    C_PA = "C_Pa"
    C_PTILDE_D = "C_Ptilde_d"
    C_PHAT_D = "C_Phat_d"


Injected = Union[ErrorSequence, CountPattern, ConsecutivePattern, None]


@dataclass(frozen=True)
class DsmConfig:
    kind: ConfigKind = ConfigKind.C_DSM
    injected: Injected = None
    detector: DetectorModel = field(default_factory=DetectorModel)
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    odometry: OdometryModel = field(default_factory=OdometryModel)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", ConfigKind(self.kind))
        if self.kind is ConfigKind.C_DSM and self.injected is not None:
            raise ParameterError("C_DSM takes no injected sequence")

    def injected_sequence(self, n_max: int) -> ErrorSequence:
        """The concrete sequence to inject; a pattern is sampled once with ``seed``."""
        inj = self.injected
        if inj is None:
            return ErrorSequence((), n_max)
        if isinstance(inj, ErrorSequence):
            return inj
        return sample(inj, self.seed, 1)[0]


def range_limit(d: float, r_max: float) -> float:
    if d < 0:
        warnings.warn(f"negative distance {d} clamped to 0", RuntimeWarning, stacklevel=2)
        return 0.0
    return d if d < r_max else r_max


def _detect(d_bar: float, model: DetectorModel, u: float, z: float) -> float:
    if d_bar >= model.r_max:
        return model.r_max
    if u < model.p_fn:
        return model.r_max
    if model.sigma_d > 0.0:
        return min(max(d_bar + model.sigma_d * z, 0.0), model.r_max)
    return d_bar


def detector_sample(d_bar: float, model: DetectorModel, rng: np.random.Generator) -> float:
    """One detector frame: FN with probability ``p_fn``, else noisy range estimate."""
    u = rng.random()
    z = rng.standard_normal() if model.sigma_d > 0.0 else 0.0
    return _detect(d_bar, model, u, z)


def tracker_step(history: Sequence[float], d_bar: float, cfg: TrackerConfig,
                 r_max: float) -> float:
    """Keep-alive tracker; ``history`` holds the latest ``c + 1`` detector outputs."""
    if len(history) != cfg.c + 1:
        raise ValueError(f"history must hold c+1={cfg.c + 1} values, got {len(history)}")
    return r_max if all(x >= r_max for x in history) else d_bar


def tracker_fn_steps(detector_fn: Sequence[int], c: int, n: int) -> list[int]:
    """Steps at which the tracker output is ``r_max`` for a detector FN step set
    (object assumed in range throughout, history before step 0 counts as FN)."""
    fn = set(detector_fn)
    return [k for k in range(n) if all((j < 0) or (j in fn) for j in range(k - c, k + 1))]


def frame_noise(seed: int, run: int, n_frames: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-frame uniforms and normals keyed by ``(seed, run)``; frame ``k`` always
    gets element ``k`` regardless of how far a run gets."""
    rng = np.random.Generator(np.random.Philox(key=[int(seed) & (2**64 - 1), int(run)]))
    return rng.random(n_frames), rng.standard_normal(n_frames)


def simulate_dsm(params: ScenarioParams, geometry: Optional[ScenarioGeometry] = None,
                 config: DsmConfig = DsmConfig(), run: int = 0) -> Trajectory:
    """Closed-loop run of the detailed model under one injection configuration.

    ``run`` selects an independent random stream for Monte Carlo batches.
    """
    geom = geometry or derive_geometry(params)
    det, trk, odo = config.detector, config.tracker, config.odometry
    kind = config.kind
    r_max = det.r_max
    rho = config.injected_sequence(geom.n_max)
    if rho.steps and rho.steps[-1] >= geom.n_max:
        raise ParameterError(f"injected step {rho.steps[-1]} >= n_max={geom.n_max}")
    last = rho.steps[-1] if rho.steps else -1
    n_frames = int(math.ceil(2.0 * geom.t_max / params.delta_t)) + 2
    if kind is ConfigKind.C_DSM:
        u, z = frame_noise(config.seed, run, n_frames)
    speed_factor = 1.0 - odo.eta_speed if kind is ConfigKind.C_DSM else 1.0

    # detector outputs of the latest c+1 frames, newest last; r_max before step 0
    window = [r_max] * (trk.c + 1)
    det_fn: list[int] = []
    trk_fn: list[int] = []

    def hook(k, t, s, v):
        d = geom.s_pov - s
        d_bar = range_limit(max(d, 0.0), r_max)
        if kind is ConfigKind.C_PA:
            return StepInput(ubi=k in rho, r_max=r_max)
        if kind is ConfigKind.C_PTILDE_D:
            if k in rho:
                if d_bar < r_max:
                    trk_fn.append(k)
                return StepInput(d_override=r_max, r_max=r_max)
            return StepInput(r_max=r_max)
        if kind is ConfigKind.C_PHAT_D:
            d_hat = r_max if k in rho else d_bar
        else:
            d_hat = _detect(d_bar, det, u[k], z[k]) if k < n_frames else d_bar
        if d_hat >= r_max and d_bar < r_max:
            det_fn.append(k)
        window.append(d_hat)
        del window[0]
        if tracker_step(window, d_bar, trk, r_max) >= r_max:
            if d_bar < r_max:
                trk_fn.append(k)
            return StepInput(d_override=r_max, r_max=r_max, speed_factor=speed_factor)
        return StepInput(r_max=r_max, speed_factor=speed_factor)

    if kind is ConfigKind.C_DSM:
        pending = _never
    else:
        def pending(k):
            return k <= last

    result = integrate(params, geom, hook, pending=pending)
    traj = _to_trajectory(result, geom)
    traj.detector_fn_steps = tuple(det_fn)
    traj.tracker_fn_steps = tuple(trk_fn)
    return traj


def _never(k):
    return False


def bernoulli_fn_sequence(p_fn: float, n_max: int, seed: int, run: int = 0) -> ErrorSequence:
    """Per-frame i.i.d. FN sequence drawn from the same stream as ``simulate_dsm``."""
    u, _ = frame_noise(seed, run, n_max)
    return ErrorSequence(np.flatnonzero(u < p_fn).tolist(), n_max)
