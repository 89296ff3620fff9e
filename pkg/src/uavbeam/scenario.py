"""Problem instances, array geometry, and exact beamforming-gain evaluation.

A UAV hovers over the origin of the ground axis at height ``h`` and carries
``N`` antennas that slide along a line segment of length ``aperture``.
Ground users sit on the same axis: primary users (PUs) must see a gain no
larger than ``interference_cap``, secondary users (SUs) receive the max-min
gain objective.  All gains are linear power gains, all angles radians.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

#: absolute feasibility slack applied to every constraint check; solvers
#: return interior-tolerance solutions, so exact-boundary checks would fail
FEASIBILITY_TOL = 1e-6


class ScenarioError(ValueError):
    """A scenario or config field violates its invariant."""


class InfeasibleScenarioError(ScenarioError):
    """No antenna layout can satisfy the spacing limit within the aperture."""


@dataclass(frozen=True)
class Scenario:
    """Immutable spectrum-sharing problem instance.

    Ground coordinates are signed offsets (meters) from the hover point along
    the array axis and may be negative.  Defaults reproduce the reference
    simulation setup used throughout the test suite.
    """

    pu_positions: tuple[float, ...] = (-56.71, 17.32)
    su_positions: tuple[float, ...] = (-11.91, 5.77)
    wavelength: float = 0.1
    aperture: float = 0.4
    min_spacing: float = 0.05
    min_height: float = 10.0
    interference_cap: float = 0.1
    num_antennas: int = 8
    tolerance: float = 1e-3

    def __post_init__(self):
        object.__setattr__(self, "pu_positions",
                           tuple(float(p) for p in self.pu_positions))
        object.__setattr__(self, "su_positions",
                           tuple(float(s) for s in self.su_positions))
        for name in ("wavelength", "aperture", "min_spacing", "min_height",
                     "interference_cap", "tolerance"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and value > 0
                    and math.isfinite(value)):
                raise ScenarioError(f"{name} must be strictly positive")
            object.__setattr__(self, name, float(value))
        n = self.num_antennas
        if not (isinstance(n, int) or (isinstance(n, float) and n.is_integer())):
            raise ScenarioError("num_antennas must be a positive integer")
        if int(n) < 1:
            raise ScenarioError("num_antennas must be a positive integer")
        object.__setattr__(self, "num_antennas", int(n))
        if len(self.su_positions) < 1:
            raise ScenarioError("su_positions must contain at least one user")
        if (self.num_antennas - 1) * self.min_spacing > self.aperture:
            raise InfeasibleScenarioError(
                "aperture too small: (num_antennas - 1) * min_spacing exceeds it")

    @property
    def num_pu(self) -> int:
        return len(self.pu_positions)

    @property
    def num_su(self) -> int:
        return len(self.su_positions)


@dataclass(frozen=True, eq=False)
class AntennaConfig:
    """A candidate solution: antenna positions, complex weights, UAV height."""

    apv: np.ndarray
    awv: np.ndarray
    height: float

    def __post_init__(self):
        apv = np.asarray(self.apv, dtype=float).copy()
        awv = np.asarray(self.awv, dtype=complex).copy()
        if apv.ndim != 1 or apv.size < 1:
            raise ScenarioError("apv must be a nonempty 1-D position vector")
        if awv.shape != apv.shape:
            raise ScenarioError("awv and apv must have equal length")
        if not np.all(np.isfinite(apv)) or not np.all(np.isfinite(awv)):
            raise ScenarioError("apv/awv entries must be finite")
        apv.setflags(write=False)
        awv.setflags(write=False)
        object.__setattr__(self, "apv", apv)
        object.__setattr__(self, "awv", awv)
        object.__setattr__(self, "height", float(self.height))

    @property
    def num_antennas(self) -> int:
        return self.apv.size


def steering_angle(ground_x: float, h: float) -> float:
    """Steering angle toward a ground user at signed offset ``ground_x``.

    Measured from the array axis, so a user directly below maps to pi/2.
    The leading minus on the coordinate is the fixed sign convention of the
    model: positive offsets map to angles above pi/2.
    """
    if not h > 0:
        raise ScenarioError("height must be strictly positive")
    u = -ground_x / math.hypot(h, ground_x)
    return math.acos(min(1.0, max(-1.0, u)))


def steering_vector(apv: Sequence[float], angle: float,
                    wavelength: float) -> np.ndarray:
    """Per-antenna unit-modulus phase response toward a far-field angle."""
    x = np.asarray(apv, dtype=float)
    if x.size < 1:
        raise ScenarioError("apv must be nonempty")
    if not wavelength > 0:
        raise ScenarioError("wavelength must be strictly positive")
    return np.exp(1j * (2.0 * np.pi / wavelength) * x * math.cos(angle))


def beamforming_gain(awv: Sequence[complex], apv: Sequence[float],
                     angle: float, wavelength: float) -> float:
    """Array power gain |w^H a(x, angle)|^2 toward one angle."""
    w = np.asarray(awv, dtype=complex)
    x = np.asarray(apv, dtype=float)
    if w.shape != x.shape or w.ndim != 1:
        raise ScenarioError("awv and apv must be 1-D with equal length")
    a = steering_vector(x, angle, wavelength)
    return float(np.abs(np.vdot(w, a)) ** 2)


def gain_double_sum(awv: Sequence[complex], apv: Sequence[float],
                    angle: float, wavelength: float) -> float:
    """Gain evaluated as the expanded pairwise cosine sum.

    Equivalent to :func:`beamforming_gain` to floating-point accuracy; this
    form exposes the per-pair amplitude products and phase differences that
    the surrogate builders operate on.
    """
    w = np.asarray(awv, dtype=complex)
    x = np.asarray(apv, dtype=float)
    if w.shape != x.shape or w.ndim != 1:
        raise ScenarioError("awv and apv must be 1-D with equal length")
    amp = np.abs(w)
    phase = np.angle(w)      # angle(0) == 0, so zero weights need no casing
    kappa = np.outer(amp, amp)
    chi = (2.0 * np.pi / wavelength) * (x[:, None] - x[None, :])
    varpi = phase[:, None] - phase[None, :]
    return float(np.sum(kappa * np.cos(chi * math.cos(angle) - varpi)))


def beam_pattern(config: AntennaConfig, angles: Sequence[float],
                 wavelength: float) -> np.ndarray:
    """Gain sampled over a grid of angles (radians)."""
    grid = np.asarray(angles, dtype=float)
    if grid.size < 1:
        raise ScenarioError("angle grid must be nonempty")
    k = 2.0 * np.pi / wavelength
    response = np.exp(1j * k * np.cos(grid)[:, None] * config.apv[None, :])
    return np.abs(response @ np.conj(config.awv)) ** 2


def su_angles(scenario: Scenario, h: float) -> np.ndarray:
    return np.array([steering_angle(s, h) for s in scenario.su_positions])


def pu_angles(scenario: Scenario, h: float) -> np.ndarray:
    return np.array([steering_angle(p, h) for p in scenario.pu_positions])


def su_gains(scenario: Scenario, config: AntennaConfig) -> np.ndarray:
    """Exact gain toward every secondary user."""
    return np.array([
        beamforming_gain(config.awv, config.apv, ang, scenario.wavelength)
        for ang in su_angles(scenario, config.height)
    ])


def pu_gains(scenario: Scenario, config: AntennaConfig) -> np.ndarray:
    """Exact gain toward every primary user (empty array when K = 0)."""
    return np.array([
        beamforming_gain(config.awv, config.apv, ang, scenario.wavelength)
        for ang in pu_angles(scenario, config.height)
    ])


def min_su_gain(scenario: Scenario, config: AntennaConfig) -> float:
    """The true max-min objective value of a config."""
    return float(np.min(su_gains(scenario, config)))


def max_pu_gain(scenario: Scenario, config: AntennaConfig) -> float:
    g = pu_gains(scenario, config)
    return float(np.max(g)) if g.size else 0.0


@dataclass(frozen=True)
class ConstraintViolation:
    """One violated constraint: family name, offending index, excess amount."""

    constraint: str
    index: int | None
    residual: float


def validate_config(scenario: Scenario, config: AntennaConfig,
                    tol: float = FEASIBILITY_TOL) -> list[ConstraintViolation]:
    """Report every constraint the config violates beyond ``tol``.

    Families checked: adjacent spacing, aperture box, weight power budget,
    minimum height, and the per-PU interference cap.  An empty report means
    the config is feasible within the slack.
    """
    out: list[ConstraintViolation] = []
    x = config.apv
    d0 = scenario.min_spacing
    half = scenario.aperture / 2.0
    for n in range(1, x.size):
        gap = x[n] - x[n - 1]
        if d0 - gap > tol:
            out.append(ConstraintViolation("spacing", n, float(d0 - gap)))
    for n in range(x.size):
        if x[n] - half > tol:
            out.append(ConstraintViolation("box_high", n, float(x[n] - half)))
        if -half - x[n] > tol:
            out.append(ConstraintViolation("box_low", n, float(-half - x[n])))
    power = float(np.linalg.norm(config.awv))
    if power - 1.0 > tol:
        out.append(ConstraintViolation("power", None, power - 1.0))
    if scenario.min_height - config.height > tol:
        out.append(ConstraintViolation(
            "height", None, float(scenario.min_height - config.height)))
    if config.height > 0:  # angles undefined otherwise; height already flagged
        for k, gain in enumerate(pu_gains(scenario, config)):
            excess = float(gain) - scenario.interference_cap
            if excess > tol:
                out.append(ConstraintViolation("interference", k, excess))
    return out
