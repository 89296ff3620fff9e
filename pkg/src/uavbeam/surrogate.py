"""Convex surrogate constraint builders for the three alternating blocks.

Every builder replaces the exact gain (a pairwise cosine sum) near an
expansion point with a quadratic or linear function whose curvature is a
bound on the true curvature, so the resulting constraint is convex:

* height block: per-pair second-order Taylor in ``h`` with the curvature
  replaced by the Cauchy-Schwarz bound sqrt(g'^4 + g''^2);
* weight block: first-order Taylor in ``w`` (the gain is convex in ``w``,
  so the linearization is a global under-estimator);
* position block: per-pair second-order Taylor in the pair phase with
  curvature bound 1 (|cos''| <= 1), a true global bound in ``x``.

All coefficients are assembled by one generic routine (value, slope,
bounded curvature at the expansion point), parameterized only by the bound
direction, rather than transcribing each published coefficient list.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .scenario import ScenarioError, steering_vector

#: relative tolerance for the semi-definiteness certificates
EIG_TOL = 1e-9


class SurrogateError(ScenarioError):
    """A surrogate builder received inputs violating its contract."""


@dataclass(frozen=True)
class ScalarQuadratic:
    """q(h) = a*h^2 + b*h + c."""

    a: float
    b: float
    c: float

    def evaluate(self, h):
        return (self.a * h + self.b) * h + self.c

    def derivative(self, h):
        return 2.0 * self.a * h + self.b

    __call__ = evaluate


@dataclass(frozen=True, eq=False)
class VectorQuadratic:
    """q(x) = 0.5 * x^T A x + b^T x + c with symmetric A."""

    A: np.ndarray
    b: np.ndarray
    c: float

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float).copy()
        b = np.asarray(self.b, dtype=float).copy()
        if A.ndim != 2 or A.shape[0] != A.shape[1] or b.shape != (A.shape[0],):
            raise SurrogateError("quadratic dimensions are inconsistent")
        scale = max(1.0, float(np.abs(A).max()) if A.size else 1.0)
        asym = float(np.abs(A - A.T).max()) if A.size else 0.0
        if asym > 1e-12 * scale:
            raise SurrogateError("quadratic matrix must be symmetric")
        A.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", float(self.c))

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ self.A @ x + self.b @ x + self.c)

    def gradient(self, x):
        return self.A @ np.asarray(x, dtype=float) + self.b

    __call__ = evaluate


@dataclass(frozen=True, eq=False)
class ExpansionPoint:
    """The iterate a surrogate is built around; exactly one block's variable."""

    kind: Literal["height", "apv", "awv"]
    h_i: float | None = None
    x_i: np.ndarray | None = None
    w_i: np.ndarray | None = None

    def __post_init__(self):
        fields = {"height": "h_i", "apv": "x_i", "awv": "w_i"}
        if self.kind not in fields:
            raise SurrogateError(f"unknown expansion kind {self.kind!r}")
        for kind, name in fields.items():
            value = getattr(self, name)
            if (value is not None) != (kind == self.kind):
                raise SurrogateError(
                    f"expansion point of kind {self.kind!r} must set exactly "
                    f"the field {fields[self.kind]!r}")
        if self.kind == "height":
            object.__setattr__(self, "h_i", float(self.h_i))
        elif self.kind == "apv":
            x = np.asarray(self.x_i, dtype=float).copy()
            x.setflags(write=False)
            object.__setattr__(self, "x_i", x)
        else:
            w = np.asarray(self.w_i, dtype=complex).copy()
            w.setflags(write=False)
            object.__setattr__(self, "w_i", w)

    @classmethod
    def height(cls, h):
        return cls(kind="height", h_i=h)

    @classmethod
    def apv(cls, x):
        return cls(kind="apv", x_i=x)

    @classmethod
    def awv(cls, w):
        return cls(kind="awv", w_i=w)


def eig_tolerance(A: np.ndarray) -> float:
    """Semi-definiteness slack scaled by the matrix's largest entry."""
    scale = float(np.abs(A).max()) if A.size else 0.0
    return EIG_TOL * max(1.0, scale)


def max_eigenvalue(A: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(np.asarray(A, dtype=float)).max())


def min_eigenvalue(A: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(np.asarray(A, dtype=float)).min())


def gamma_derivatives(chi_nm: float, s_or_p: float, h: float):
    """First and second h-derivatives of the pair phase toward one user.

    The pair phase is chi * cos(angle(h)) with cos(angle(h)) =
    -s / sqrt(h^2 + s^2); the constant weight-phase offset drops out.
    """
    if not h > 0:
        raise SurrogateError("height must be strictly positive")
    z = h * h + s_or_p * s_or_p
    first = chi_nm * s_or_p * h / z ** 1.5
    second = chi_nm * s_or_p * (s_or_p * s_or_p - 2.0 * h * h) / z ** 2.5
    return first, second


def _pair_tables(w: Sequence[complex], x: Sequence[float], wavelength: float):
    w = np.asarray(w, dtype=complex)
    x = np.asarray(x, dtype=float)
    if w.shape != x.shape or w.ndim != 1 or w.size < 1:
        raise SurrogateError("weight and position vectors must be 1-D with equal length")
    amp = np.abs(w)
    phase = np.angle(w)
    kappa = np.outer(amp, amp)
    chi = (2.0 * np.pi / wavelength) * (x[:, None] - x[None, :])
    varpi = phase[:, None] - phase[None, :]
    return amp, kappa, chi, varpi


def _height_surrogate(w, x, ground, h_i, wavelength, sign: float) -> ScalarQuadratic:
    if not h_i > 0:
        raise SurrogateError("expansion height must be strictly positive")
    _, kappa, chi, varpi = _pair_tables(w, x, wavelength)
    cos_angle = -ground / np.hypot(h_i, ground)
    gamma = chi * cos_angle - varpi
    z = h_i * h_i + ground * ground
    d1 = chi * ground * h_i / z ** 1.5
    d2 = chi * ground * (ground * ground - 2.0 * h_i * h_i) / z ** 2.5
    psi = np.sqrt(d1 ** 4 + d2 ** 2)
    value = np.cos(gamma)
    slope = -np.sin(gamma) * d1
    curv = sign * psi
    a = float(np.sum(kappa * curv) / 2.0)
    b = float(np.sum(kappa * (slope - curv * h_i)))
    c = float(np.sum(kappa * (value - slope * h_i + 0.5 * curv * h_i * h_i)))
    return ScalarQuadratic(a, b, c)


def height_lower_surrogate(w, x, su_ground: float, h_i: float,
                           wavelength: float) -> ScalarQuadratic:
    """Concave quadratic under-estimator of the SU gain as a function of h.

    Tangent with matching slope at ``h_i``; the quadratic coefficient is
    nonpositive.  The under-estimation is only certified near ``h_i`` (the
    curvature bound is evaluated at the expansion point), which is why the
    alternating loop pairs this with a height trust region.
    """
    q = _height_surrogate(w, x, su_ground, h_i, wavelength, sign=-1.0)
    if q.a > 0:
        raise SurrogateError("lower height surrogate lost concavity")
    return q


def height_upper_surrogate(w, x, pu_ground: float, h_i: float,
                           wavelength: float) -> ScalarQuadratic:
    """Convex quadratic over-estimator of the PU gain as a function of h."""
    q = _height_surrogate(w, x, pu_ground, h_i, wavelength, sign=1.0)
    if q.a < 0:
        raise SurrogateError("upper height surrogate lost convexity")
    return q


def awv_linear_surrogate(w_i, x, angle: float, wavelength: float):
    """Global linear under-estimator of the gain as a function of w.

    Returns ``(coeff, offset)`` such that the surrogate at ``w`` is
    ``2 * Re(coeff^H w) + offset``.  Tangent at ``w_i`` and below the true
    gain everywhere because the gain is convex in ``w``.
    """
    w_i = np.asarray(w_i, dtype=complex)
    x = np.asarray(x, dtype=float)
    if w_i.shape != x.shape or w_i.ndim != 1:
        raise SurrogateError("weight and position vectors must be 1-D with equal length")
    alpha = steering_vector(x, angle, wavelength)
    s = np.vdot(alpha, w_i)          # alpha^H w_i
    return alpha * s, -float(abs(s) ** 2)


def evaluate_awv_surrogate(coeff, offset, w) -> float:
    """Value of an AWV linearization at a candidate weight vector."""
    return 2.0 * float(np.real(np.vdot(coeff, np.asarray(w, dtype=complex)))) + offset


def _position_surrogate(w, x_i, spatial_freq, sign: float) -> VectorQuadratic:
    amp, kappa, _, varpi = _pair_tables(w, x_i, 1.0)  # wavelength unused here
    x_i = np.asarray(x_i, dtype=float)
    ell0 = spatial_freq * (x_i[:, None] - x_i[None, :]) - varpi
    s0 = float(np.sum(kappa * np.cos(ell0)))
    grad = -2.0 * spatial_freq * np.sum(kappa * np.sin(ell0), axis=1)
    coupling = amp.sum() * np.diag(amp) - np.outer(amp, amp)  # PSD by Cauchy-Schwarz
    A = 2.0 * sign * spatial_freq ** 2 * coupling
    A = 0.5 * (A + A.T)
    b = grad - A @ x_i
    c = s0 - grad @ x_i + 0.5 * x_i @ A @ x_i
    quad = VectorQuadratic(A, b, float(c))
    tol = eig_tolerance(A)
    if sign < 0 and max_eigenvalue(A) > tol:
        raise SurrogateError("lower position surrogate matrix is not NSD")
    if sign > 0 and min_eigenvalue(A) < -tol:
        raise SurrogateError("upper position surrogate matrix is not PSD")
    return quad


def position_lower_surrogate(w, x_i, spatial_freq: float) -> VectorQuadratic:
    """Concave quadratic global under-estimator of the gain in x.

    ``spatial_freq`` is (2*pi/wavelength) * cos(angle) toward the target
    user.  Curvature bound |cos''| <= 1 makes the bound hold everywhere,
    not just near ``x_i``.
    """
    return _position_surrogate(w, x_i, spatial_freq, sign=-1.0)


def position_upper_surrogate(w, x_i, pu_spatial_freq: float) -> VectorQuadratic:
    """Convex quadratic global over-estimator of the gain in x."""
    return _position_surrogate(w, x_i, pu_spatial_freq, sign=1.0)


def position_nonneg_surrogate(w, x_i, pu_spatial_freq: float) -> VectorQuadratic:
    """Under-estimator of a PU gain, used as the q(x) >= 0 side constraint.

    Identical construction to :func:`position_lower_surrogate` with the PU
    spatial frequency; keeping it as its own entry point mirrors its
    distinct role (the relaxed cap constraint alone cannot keep the true
    PU gain nonnegative).
    """
    return _position_surrogate(w, x_i, pu_spatial_freq, sign=-1.0)
