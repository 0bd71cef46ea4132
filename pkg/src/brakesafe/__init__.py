"""Safety analysis of a braking scenario under injected hazardous behavior and error patterns."""

from .patterns import (
    ConsecutivePattern,
    CountPattern,
    ErrorSequence,
    MagnitudePattern,
    PatternError,
    cardinality,
    contains,
    is_subset,
    parse_pattern,
    sample,
)
from .scenario import (
    InjectionSpec,
    ParameterError,
    ScenarioParams,
    Trajectory,
    derive_geometry,
    policy,
    required_braking,
    simulate,
)

__version__ = "0.1.0"

__all__ = [
    "ConsecutivePattern",
    "CountPattern",
    "ErrorSequence",
    "InjectionSpec",
    "MagnitudePattern",
    "ParameterError",
    "PatternError",
    "ScenarioParams",
    "Trajectory",
    "cardinality",
    "contains",
    "derive_geometry",
    "is_subset",
    "parse_pattern",
    "policy",
    "required_braking",
    "sample",
    "simulate",
]
