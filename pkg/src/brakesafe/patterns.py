"""Error sequences and the pattern forms used to specify classes of them.

An error sequence is the set of discrete time steps (out of a horizon of
``n_max`` steps) at which some hazardous behavior or element error occurs.
Patterns describe sets of such sequences:

* ``CountPattern`` - between ``k_min`` and ``k_max`` occurrences anywhere
  within the horizon.
* ``ConsecutivePattern`` - a single run of consecutive occurrences whose
  length lies in ``[k_min, k_max]``, optionally anchored at step 0.
* ``MagnitudePattern`` - continuous error signals bounded by ``eta_hat``.

Textual forms accepted by the CLI and config files::

    count(19,150,150)
    consec(5,5,150,anchored)
    {26..45,66..87}@150
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np


class PatternError(ValueError):
    """Raised for malformed sequences, patterns or pattern text."""


PATTERN_SYNTAX = (
    "count(kmin,kmax,nmax) | consec(kmin,kmax,nmax[,anchored]) | "
    "{a..b,c,...}@nmax"
)


@dataclass(frozen=True)
class ErrorSequence:
    """Sorted set of error time steps within a horizon of ``n_max`` steps."""

    steps: tuple[int, ...]
    n_max: int

    def __init__(self, steps: Iterable[int] = (), n_max: int = 0):
        ordered = tuple(sorted({int(k) for k in steps}))
        if n_max < 0:
            raise PatternError(f"n_max must be non-negative, got {n_max}")
        if ordered and (ordered[0] < 0 or ordered[-1] >= n_max):
            raise PatternError(
                f"steps must lie in [0, {n_max}), got {ordered[0]}..{ordered[-1]}"
            )
        object.__setattr__(self, "steps", ordered)
        object.__setattr__(self, "n_max", int(n_max))

    @classmethod
    def from_runs(cls, runs: Iterable[tuple[int, int]], n_max: int) -> "ErrorSequence":
        """Build from inclusive ``(first, last)`` step ranges."""
        steps: set[int] = set()
        for first, last in runs:
            if last < first:
                raise PatternError(f"empty run {first}..{last}")
            steps.update(range(first, last + 1))
        return cls(steps, n_max)

    @classmethod
    def parse(cls, text: str) -> "ErrorSequence":
        """Parse ``{26..45,66..87}@150``."""
        m = re.fullmatch(r"\s*\{([^}]*)\}\s*@\s*(\d+)\s*", text)
        if not m:
            raise PatternError(f"bad sequence literal {text!r}; expected {PATTERN_SYNTAX}")
        body, n_max = m.group(1).strip(), int(m.group(2))
        runs = []
        if body:
            for item in body.split(","):
                item = item.strip()
                rm = re.fullmatch(r"(\d+)(?:\s*\.\.\s*(\d+))?", item)
                if not rm:
                    raise PatternError(f"bad sequence item {item!r} in {text!r}")
                first = int(rm.group(1))
                last = int(rm.group(2)) if rm.group(2) is not None else first
                runs.append((first, last))
        return cls.from_runs(runs, n_max)

    def __len__(self) -> int:
        return len(self.steps)

    def __contains__(self, k: object) -> bool:
        return k in self._lookup

    def __iter__(self):
        return iter(self.steps)

    @property
    def _lookup(self) -> frozenset[int]:
        cached = self.__dict__.get("_set")
        if cached is None:
            cached = frozenset(self.steps)
            object.__setattr__(self, "_set", cached)
        return cached

    def runs(self) -> list[tuple[int, int]]:
        """Maximal runs of consecutive steps as inclusive ``(first, last)``."""
        out: list[tuple[int, int]] = []
        for k in self.steps:
            if out and k == out[-1][1] + 1:
                out[-1] = (out[-1][0], k)
            else:
                out.append((k, k))
        return out

    def intervals(self, delta_t: float) -> list[tuple[float, float]]:
        """Half-open time intervals ``[first*dt, (last+1)*dt)`` covered by the runs."""
        return [(a * delta_t, (b + 1) * delta_t) for a, b in self.runs()]

    def __str__(self) -> str:
        parts = [f"{a}..{b}" if b > a else str(a) for a, b in self.runs()]
        return "{" + ",".join(parts) + "}@" + str(self.n_max)


@dataclass(frozen=True)
class CountPattern:
    """All sequences with ``k_min <= |rho| <= k_max`` within ``n_max`` steps."""

    k_min: int
    k_max: int
    n_max: int

    def __post_init__(self):
        if not 0 <= self.k_min <= self.k_max <= self.n_max:
            raise PatternError(
                f"need 0 <= k_min <= k_max <= n_max, got "
                f"({self.k_min}, {self.k_max}, {self.n_max})"
            )

    def __str__(self) -> str:
        return f"count({self.k_min},{self.k_max},{self.n_max})"


@dataclass(frozen=True)
class ConsecutivePattern:
    """A single run of ``k_min..k_max`` consecutive steps, optionally starting at 0."""

    k_min: int
    k_max: int
    n_max: int
    anchored_at_start: bool = False

    def __post_init__(self):
        if not 0 <= self.k_min <= self.k_max <= self.n_max:
            raise PatternError(
                f"need 0 <= k_min <= k_max <= n_max, got "
                f"({self.k_min}, {self.k_max}, {self.n_max})"
            )

    def __str__(self) -> str:
        tail = ",anchored" if self.anchored_at_start else ""
        return f"consec({self.k_min},{self.k_max},{self.n_max}{tail})"


@dataclass(frozen=True)
class MagnitudePattern:
    """Error signals over ``[0, t_max]`` with values in ``[0, eta_hat]``."""

    eta_hat: float
    t_max: float

    def __post_init__(self):
        if not 0.0 < self.eta_hat <= 1.0:
            raise PatternError(f"eta_hat must lie in (0, 1], got {self.eta_hat}")

    def contains(self, signal: Union[float, Sequence[float]]) -> bool:
        values = np.atleast_1d(np.asarray(signal, dtype=float))
        return bool(np.all((values >= 0.0) & (values <= self.eta_hat)))


StepPattern = Union[CountPattern, ConsecutivePattern]


def _check_horizon(p: StepPattern, rho: ErrorSequence) -> None:
    if rho.n_max != p.n_max:
        raise PatternError(f"horizon mismatch: sequence n_max={rho.n_max}, pattern n_max={p.n_max}")


def contains(p: StepPattern, rho: ErrorSequence) -> bool:
    """Membership of ``rho`` in pattern ``p``."""
    _check_horizon(p, rho)
    size = len(rho)
    if isinstance(p, CountPattern):
        return p.k_min <= size <= p.k_max
    if size == 0:
        return p.k_min == 0
    runs = rho.runs()
    if len(runs) != 1:
        return False
    if p.anchored_at_start and runs[0][0] != 0:
        return False
    return p.k_min <= size <= p.k_max


def cardinality(p: CountPattern) -> int:
    """Number of sequences in ``p`` (exact integer)."""
    return sum(math.comb(p.n_max, j) for j in range(p.k_min, p.k_max + 1))


def is_subset(p1: CountPattern, p2: CountPattern) -> bool:
    if p1.n_max != p2.n_max:
        raise PatternError(f"horizon mismatch: {p1.n_max} vs {p2.n_max}")
    return p1.k_min >= p2.k_min and p1.k_max <= p2.k_max


def sample(p: StepPattern, seed: int, count: int) -> list[ErrorSequence]:
    """Draw ``count`` members of ``p``: size uniform, then positions uniform.

    Deterministic for a fixed ``seed``.
    """
    if p.k_min > p.n_max:
        raise PatternError(f"pattern {p} is empty")
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        size = int(rng.integers(p.k_min, p.k_max + 1))
        if isinstance(p, CountPattern):
            steps = rng.choice(p.n_max, size=size, replace=False) if size else ()
        elif size == 0:
            steps = ()
        else:
            start = 0 if p.anchored_at_start else int(rng.integers(0, p.n_max - size + 1))
            steps = range(start, start + size)
        out.append(ErrorSequence(steps, p.n_max))
    return out


def parse_pattern(text: str) -> Union[StepPattern, ErrorSequence]:
    """Parse any of the textual pattern / sequence forms."""
    s = text.strip()
    if s.startswith("{"):
        return ErrorSequence.parse(s)
    m = re.fullmatch(r"(count|consec)\s*\(([^)]*)\)", s)
    if not m:
        raise PatternError(f"bad pattern {text!r}; expected {PATTERN_SYNTAX}")
    args = [a.strip() for a in m.group(2).split(",")]
    anchored = False
    if m.group(1) == "consec" and len(args) == 4:
        if args[3] not in ("anchored", "true", "1"):
            raise PatternError(f"bad anchor flag {args[3]!r} in {text!r}")
        anchored = True
        args = args[:3]
    if len(args) != 3 or not all(a.isdigit() for a in args):
        raise PatternError(f"bad pattern arguments in {text!r}; expected {PATTERN_SYNTAX}")
    k_min, k_max, n_max = (int(a) for a in args)
    if m.group(1) == "count":
        return CountPattern(k_min, k_max, n_max)
    return ConsecutivePattern(k_min, k_max, n_max, anchored)
