"""Max-min beamforming for a UAV-mounted movable antenna array.

Joint optimization of UAV height, antenna positions, and complex antenna
weights toward secondary users under per-primary-user interference caps,
via alternating convex-surrogate subproblems, plus benchmark experiment
runners that emit plot-ready data files.
"""

from .scenario import (
    AntennaConfig,
    ConstraintViolation,
    InfeasibleScenarioError,
    Scenario,
    ScenarioError,
    beam_pattern,
    beamforming_gain,
    gain_double_sum,
    max_pu_gain,
    min_su_gain,
    steering_angle,
    steering_vector,
    validate_config,
)

__all__ = [
    "AntennaConfig",
    "ConstraintViolation",
    "InfeasibleScenarioError",
    "Scenario",
    "ScenarioError",
    "beam_pattern",
    "beamforming_gain",
    "gain_double_sum",
    "max_pu_gain",
    "min_su_gain",
    "steering_angle",
    "steering_vector",
    "validate_config",
]

__version__ = "0.1.0"
