"""Convex subproblem solvers for the three alternating blocks.

The height block is one scalar variable, so it is solved exactly: the convex
cap constraints carve out a single interval and a ternary search maximizes
the concave piecewise-quadratic objective on it.  The weight and position
blocks share one primal-dual interior-point routine over the epigraph form
(linear objective, affine + convex-quadratic constraints), with a phase-I
pass when the expansion point sits on the feasible set's boundary.

Every solution carries certificate data: signed constraint residuals and a
KKT residual computed from the returned multipliers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .scenario import (
    AntennaConfig,
    Scenario,
    ScenarioError,
    pu_angles,
    su_angles,
    steering_vector,
)
from .surrogate import (
    ScalarQuadratic,
    VectorQuadratic,
    awv_linear_surrogate,
    eig_tolerance,
    min_eigenvalue,
    position_lower_surrogate,
    position_nonneg_surrogate,
    position_upper_surrogate,
)

STATUS_OPTIMAL = "optimal"
STATUS_INFEASIBLE = "infeasible"
STATUS_MAX_ITER = "max_iter"

#: stationarity / total complementarity targets for the interior-point solver
DUAL_TOL = 1e-9
GAP_TOL = 5e-8
#: feasibility tolerance certified on returned solutions
FEAS_TOL = 1e-6
#: Newton step budget per interior-point phase
MAX_NEWTON_STEPS = 100

_TERNARY_ITERS = 200


class SolverContractError(ScenarioError):
    """A subproblem violates the convexity/sign contract of its solver."""


@dataclass(frozen=True, eq=False)
class SubproblemSolution:
    """Optimizer output of one convex subproblem with certificate residuals."""

    variables: np.ndarray
    delta: float
    status: str
    kkt_residual: float
    constraint_residuals: np.ndarray
    multipliers: np.ndarray | None = None
    newton_steps: int = 0
    raw: np.ndarray | None = None


# --------------------------------------------------------------------------
# height subproblem (exact 1-D)
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class HeightSubproblem:
    """Max-min of concave quadratics in h under convex quadratic caps."""

    lower_quads: tuple[ScalarQuadratic, ...]
    upper_quads: tuple[ScalarQuadratic, ...]
    h_min: float
    h_max: float
    cap: float
    trust_center: float | None = None
    trust_radius: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "lower_quads", tuple(self.lower_quads))
        object.__setattr__(self, "upper_quads", tuple(self.upper_quads))
        if not self.lower_quads:
            raise SolverContractError(
                "height subproblem needs at least one objective quadratic")
        if self.h_min > self.h_max:
            raise SolverContractError("empty height box")
        for q in self.lower_quads:
            if q.a > 1e-9:
                raise SolverContractError("objective quadratics must be concave")
        for q in self.upper_quads:
            if q.a < -1e-9:
                raise SolverContractError("cap quadratics must be convex")


def feasible_interval(quad: ScalarQuadratic, cap: float, h_min: float,
                      h_max: float) -> list[tuple[float, float]]:
    """Sublevel set {h in [h_min, h_max] : quad(h) <= cap} of a convex quadratic.

    Convexity makes the set a single closed interval (possibly empty);
    returned as a list of zero or one (lo, hi) pairs.
    """
    if quad.a < -1e-9:
        raise SolverContractError("feasible_interval requires a convex quadratic")
    a, b, c = quad.a, quad.b, quad.c - cap
    if a <= 1e-14:  # affine within working precision
        if abs(b) <= 1e-14:
            return [(h_min, h_max)] if c <= 0 else []
        root = -c / b
        lo, hi = (h_min, min(h_max, root)) if b > 0 else (max(h_min, root), h_max)
    else:
        disc = b * b - 4.0 * a * c
        if disc < 0:
            return []
        sq = math.sqrt(disc)
        lo = max(h_min, (-b - sq) / (2.0 * a))
        hi = min(h_max, (-b + sq) / (2.0 * a))
    return [(lo, hi)] if lo <= hi else []


def solve_height(problem: HeightSubproblem) -> SubproblemSolution:
    """Maximize min of the objective quadratics over the feasible interval.

    Exact to the ternary-search bracket width; ties break toward the
    smallest optimal h.  Returns status "infeasible" when the cap sublevel
    sets and the box/trust region have empty intersection.
    """
    lo, hi = problem.h_min, problem.h_max
    if problem.trust_center is not None and problem.trust_radius is not None:
        lo = max(lo, problem.trust_center - problem.trust_radius)
        hi = min(hi, problem.trust_center + problem.trust_radius)
    feasible = lo <= hi
    for quad in problem.upper_quads:
        if not feasible:
            break
        iv = feasible_interval(quad, problem.cap, lo, hi)
        if not iv:
            feasible = False
        else:
            lo, hi = iv[0]
    if not feasible:
        return SubproblemSolution(
            variables=np.array([]), delta=-np.inf, status=STATUS_INFEASIBLE,
            kkt_residual=np.inf, constraint_residuals=np.array([]))

    def objective(h):
        return min(q.evaluate(h) for q in problem.lower_quads)

    a, b = lo, hi
    for _ in range(_TERNARY_ITERS):
        third = (b - a) / 3.0
        m1, m2 = a + third, b - third
        if objective(m1) >= objective(m2):  # ">=" drifts ties leftward
            b = m2
        else:
            a = m1

    # exact refinement: the optimum of a piecewise-quadratic concave
    # envelope lies at a quad vertex, a pairwise crossing, or an endpoint
    candidates = [lo, hi, a]
    quads = problem.lower_quads
    for q in quads:
        if q.a < -1e-14:
            candidates.append(-q.b / (2.0 * q.a))
    for i in range(len(quads)):
        for j in range(i + 1, len(quads)):
            da = quads[i].a - quads[j].a
            db = quads[i].b - quads[j].b
            dc = quads[i].c - quads[j].c
            if abs(da) <= 1e-14:
                if abs(db) > 1e-14:
                    candidates.append(-dc / db)
            else:
                disc = db * db - 4.0 * da * dc
                if disc >= 0.0:
                    sq = math.sqrt(disc)
                    candidates.append((-db - sq) / (2.0 * da))
                    candidates.append((-db + sq) / (2.0 * da))
    candidates = [h for h in candidates if lo <= h <= hi]
    best = max(objective(h) for h in candidates)
    h_star = min(h for h in candidates if objective(h) == best)
    delta = objective(h_star)
    residuals = [delta - q.evaluate(h_star) for q in problem.lower_quads]
    residuals += [q.evaluate(h_star) - problem.cap for q in problem.upper_quads]
    residuals += [problem.h_min - h_star, h_star - problem.h_max]
    if problem.trust_center is not None and problem.trust_radius is not None:
        residuals.append(abs(h_star - problem.trust_center) - problem.trust_radius)
    return SubproblemSolution(
        variables=np.array([h_star]), delta=float(delta), status=STATUS_OPTIMAL,
        kkt_residual=float(b - a), constraint_residuals=np.array(residuals))


# --------------------------------------------------------------------------
# conic subproblems (shared primal-dual interior point)
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class QuadConstraint:
    """One inequality 0.5 v^T P v + q^T v + r <= 0 (P omitted for affine)."""

    label: str
    q: np.ndarray
    r: float
    P: np.ndarray | None = None

    def value(self, v: np.ndarray) -> float:
        out = float(self.q @ v) + self.r
        if self.P is not None:
            out += 0.5 * float(v @ self.P @ v)
        return out

    def grad(self, v: np.ndarray) -> np.ndarray:
        if self.P is None:
            return self.q
        return self.q + self.P @ v


@dataclass(frozen=True, eq=False)
class ConicSubproblem:
    """Epigraph-form convex program: minimize objective^T v s.t. constraints.

    The last entry of ``v`` is the epigraph variable (the max-min level);
    ``start`` must be strictly feasible when given, and ``fallback`` is the
    expansion-point vector returned verbatim on numeric failure.
    """

    objective: np.ndarray
    constraints: tuple[QuadConstraint, ...]
    start: np.ndarray | None
    fallback: np.ndarray
    kind: str = "generic"
    num_antennas: int = 0

    def __post_init__(self):
        object.__setattr__(self, "constraints", tuple(self.constraints))
        object.__setattr__(self, "objective",
                           np.asarray(self.objective, dtype=float))
        n = self.objective.size
        for con in self.constraints:
            if con.q.shape != (n,):
                raise SolverContractError(f"constraint {con.label}: bad dimension")
            if con.P is not None:
                if con.P.shape != (n, n):
                    raise SolverContractError(f"constraint {con.label}: bad matrix")
                if min_eigenvalue(con.P) < -eig_tolerance(con.P):
                    raise SolverContractError(
                        f"constraint {con.label}: quadratic part is not PSD")

    @property
    def dimension(self) -> int:
        return self.objective.size


def _constraint_values(cons, v):
    return np.array([c.value(v) for c in cons])


def _pdipm(objective, cons, v0, mu=10.0, max_steps=MAX_NEWTON_STEPS,
           stop_early=None):
    """Feasible-start primal-dual interior point on quadratic constraints.

    Returns (v, lam, steps, converged).  ``stop_early(v)`` may end the run
    as soon as the iterate satisfies an external goal (phase-I use).
    """
    n = objective.size
    m = len(cons)
    v = np.asarray(v0, dtype=float).copy()
    f = _constraint_values(cons, v)
    if np.any(f >= 0):
        return v, np.ones(m), 0, False
    lam = 1.0 / np.maximum(-f, 1e-8)
    taken = 0
    while True:
        if stop_early is not None and stop_early(v):
            return v, lam, taken, True
        grads = np.stack([c.grad(v) for c in cons])
        r_dual = objective + grads.T @ lam
        eta_hat = float(-f @ lam)
        if np.max(np.abs(r_dual)) <= DUAL_TOL and eta_hat <= GAP_TOL:
            return v, lam, taken, True
        if taken >= max_steps:
            return v, lam, taken, False
        taken += 1
        t = mu * m / eta_hat

        H = np.zeros((n, n))
        for c, li in zip(cons, lam):
            if c.P is not None:
                H += li * c.P
        M = H + grads.T @ ((lam / (-f))[:, None] * grads)
        rhs = -objective + (grads / (t * f[:, None])).sum(axis=0)
        dv = None
        for ridge in (0.0, 1e-12, 1e-8):
            try:
                dv = np.linalg.solve(
                    M + ridge * max(1.0, np.trace(M) / n) * np.eye(n), rhs)
            except np.linalg.LinAlgError:
                continue
            if np.all(np.isfinite(dv)):
                break
            dv = None
        if dv is None:
            return v, lam, taken, False
        dlam = -lam - 1.0 / (t * f) - (lam / f) * (grads @ dv)

        # largest step keeping lam positive, then backtrack into the interior
        s = 1.0
        neg = dlam < 0
        if np.any(neg):
            s = min(1.0, 0.99 * float(np.min(-lam[neg] / dlam[neg])))
        ok = False
        for _ in range(60):
            if np.all(_constraint_values(cons, v + s * dv) < 0):
                ok = True
                break
            s *= 0.5
        if not ok:
            return v, lam, taken, False

        def residual_norm(vv, ll):
            ff = _constraint_values(cons, vv)
            gg = np.stack([c.grad(vv) for c in cons])
            rd = objective + gg.T @ ll
            rc = -ll * ff - 1.0 / t
            return math.sqrt(float(rd @ rd + rc @ rc))

        norm0 = residual_norm(v, lam)
        ok = False
        for _ in range(60):
            v_new = v + s * dv
            lam_new = lam + s * dlam
            if residual_norm(v_new, lam_new) <= (1.0 - 0.01 * s) * norm0:
                ok = True
                break
            s *= 0.5
            if s < 1e-14:
                break
        if not ok:
            return v, lam, taken, False
        v, lam = v_new, lam_new
        f = _constraint_values(cons, v)


def _phase_one(problem: ConicSubproblem) -> np.ndarray | None:
    """Strictly feasible start via worst-violation minimization.

    Runs on the non-epigraph constraints only (the epigraph rows are always
    satisfiable by lowering the level variable), over (reduced vars, slack).
    """
    n = problem.dimension
    hard = [c for c in problem.constraints if c.q[-1] == 0.0]
    epis = [c for c in problem.constraints if c.q[-1] != 0.0]
    if not hard:
        return problem.fallback.astype(float)
    cons1 = []
    for c in hard:
        q1 = np.append(c.q[:-1], -1.0)
        P1 = None
        if c.P is not None:
            P1 = np.zeros((n, n))
            P1[: n - 1, : n - 1] = c.P[: n - 1, : n - 1]
        cons1.append(QuadConstraint(label=c.label, q=q1, r=c.r, P=P1))
    x_any = problem.fallback[:-1].astype(float)

    def worst(x):
        v = np.append(x, 0.0)
        return float(np.max(_constraint_values(hard, v)))

    u0 = np.append(x_any, worst(x_any) + 1.0)
    obj = np.zeros(n)
    obj[-1] = 1.0
    u, _, _, ok = _pdipm(obj, cons1, u0,
                         stop_early=lambda u: worst(u[:-1]) <= -1e-9)
    if not (ok and worst(u[:-1]) <= -1e-9):
        return None
    x = u[:-1]
    if epis:
        # epigraph rows have coefficient +1 on the level variable
        levels = [-(c.q[:-1] @ x) - c.r - (
            0.5 * float(np.append(x, 0.0) @ c.P @ np.append(x, 0.0))
            if c.P is not None else 0.0) for c in epis]
        level = min(levels)
        delta0 = level - max(1.0, 0.1 * abs(level))
    else:
        delta0 = 0.0
    return np.append(x, delta0)


def kkt_residual(problem: ConicSubproblem, candidate) -> float:
    """Max of stationarity, primal/dual feasibility, and complementarity.

    ``candidate`` is a :class:`SubproblemSolution` (or a ``(v, lam)`` pair)
    whose multipliers certify the point.
    """
    if isinstance(candidate, SubproblemSolution):
        v, lam = candidate.raw, candidate.multipliers
    else:
        v, lam = candidate
    if v is None or lam is None:
        return np.inf
    v = np.asarray(v, dtype=float)
    lam = np.asarray(lam, dtype=float)
    cons = problem.constraints
    f = _constraint_values(cons, v)
    grads = np.stack([c.grad(v) for c in cons])
    stationarity = float(np.max(np.abs(problem.objective + grads.T @ lam)))
    primal = float(max(0.0, np.max(f)))
    dual = float(max(0.0, -np.min(lam)))
    comp = float(np.max(np.abs(lam * f)))
    return max(stationarity, primal, dual, comp)


def _solve_conic(problem: ConicSubproblem) -> SubproblemSolution:
    start = problem.start
    if start is not None:
        if np.any(_constraint_values(problem.constraints, start) >= 0):
            start = None
    if start is None:
        start = _phase_one(problem)
    if start is None:
        v = problem.fallback
        return SubproblemSolution(
            variables=v[:-1], delta=float(v[-1]), status=STATUS_MAX_ITER,
            kkt_residual=np.inf,
            constraint_residuals=_constraint_values(problem.constraints, v),
            raw=v)
    v, lam, steps, ok = _pdipm(problem.objective, problem.constraints, start)
    residuals = _constraint_values(problem.constraints, v)
    kkt = kkt_residual(problem, (v, lam))
    good = ok and kkt <= 1e-7 and float(residuals.max()) <= FEAS_TOL
    if not good:
        v = problem.fallback
        return SubproblemSolution(
            variables=v[:-1], delta=float(v[-1]), status=STATUS_MAX_ITER,
            kkt_residual=float(kkt),
            constraint_residuals=_constraint_values(problem.constraints, v),
            multipliers=lam, newton_steps=steps, raw=v)
    return SubproblemSolution(
        variables=v[:-1], delta=float(v[-1]), status=STATUS_OPTIMAL,
        kkt_residual=float(kkt), constraint_residuals=residuals,
        multipliers=lam, newton_steps=steps, raw=v)


# --------------------------------------------------------------------------
# problem builders
# --------------------------------------------------------------------------

def _interleave(w: np.ndarray) -> np.ndarray:
    """Fixed complex-to-real convention: [Re w1, Im w1, Re w2, Im w2, ...]."""
    z = np.empty(2 * w.size)
    z[0::2] = w.real
    z[1::2] = w.imag
    return z


def _deinterleave(z: np.ndarray) -> np.ndarray:
    return z[0::2] + 1j * z[1::2]


def build_awv_subproblem(scenario: Scenario, config: AntennaConfig) -> ConicSubproblem:
    """Epigraph program for the weight block at the config's (x, h, w)."""
    n = config.num_antennas
    dim = 2 * n + 1
    lam_w = scenario.wavelength
    w_i = config.awv
    x = config.apv
    objective = np.zeros(dim)
    objective[-1] = -1.0

    cons = []
    su_vals = []
    z_i = _interleave(w_i)
    for angle in su_angles(scenario, config.height):
        coeff, offset = awv_linear_surrogate(w_i, x, angle, lam_w)
        g = np.zeros(dim)
        g[0:2 * n:2] = 2.0 * coeff.real
        g[1:2 * n:2] = 2.0 * coeff.imag
        q = -g
        q[-1] = 1.0
        cons.append(QuadConstraint(label="su_gain", q=q, r=-offset))
        su_vals.append(float(g[:-1] @ z_i) + offset)
    for angle in pu_angles(scenario, config.height):
        alpha = steering_vector(x, angle, lam_w)
        rows = np.zeros((2, dim))
        rows[0, 0:2 * n:2] = alpha.real
        rows[0, 1:2 * n:2] = alpha.imag
        rows[1, 0:2 * n:2] = alpha.imag
        rows[1, 1:2 * n:2] = -alpha.real
        cons.append(QuadConstraint(label="pu_cap", q=np.zeros(dim),
                                   r=-scenario.interference_cap,
                                   P=2.0 * rows.T @ rows))
    P_pow = np.zeros((dim, dim))
    P_pow[:2 * n, :2 * n] = 2.0 * np.eye(2 * n)
    cons.append(QuadConstraint(label="power", q=np.zeros(dim), r=-1.0, P=P_pow))

    fallback = np.append(z_i, min(su_vals))
    start = None
    z0 = 0.9 * z_i
    hard_ok = all(
        c.value(np.append(z0, 0.0)) < -1e-12
        for c in cons if c.label != "su_gain")
    if hard_ok:
        su_at_start = [-(float(c.q[:-1] @ z0) + c.r)
                       for c in cons if c.label == "su_gain"]
        delta0 = min(su_at_start) - max(1.0, 0.1 * abs(min(su_at_start)))
        start = np.append(z0, delta0)
    return ConicSubproblem(objective=objective, constraints=tuple(cons),
                           start=start, fallback=fallback, kind="awv",
                           num_antennas=n)


def solve_awv(problem: ConicSubproblem) -> SubproblemSolution:
    """Solve the weight block; variables come back as the complex weights."""
    sol = _solve_conic(problem)
    return SubproblemSolution(
        variables=_deinterleave(sol.variables), delta=sol.delta,
        status=sol.status, kkt_residual=sol.kkt_residual,
        constraint_residuals=sol.constraint_residuals,
        multipliers=sol.multipliers, newton_steps=sol.newton_steps,
        raw=sol.raw)


def _pad_quad(quad: VectorQuadratic, dim: int, delta_coeff: float,
              negate: bool, offset: float, label: str) -> QuadConstraint:
    n = quad.b.size
    sign = -1.0 if negate else 1.0
    P = np.zeros((dim, dim))
    P[:n, :n] = sign * quad.A
    q = np.zeros(dim)
    q[:n] = sign * quad.b
    q[-1] = delta_coeff
    return QuadConstraint(label=label, q=q, r=sign * quad.c + offset, P=P)


def build_apv_subproblem(scenario: Scenario, config: AntennaConfig) -> ConicSubproblem:
    """Epigraph program for the position block at the config's (w, h, x)."""
    n = config.num_antennas
    dim = n + 1
    k0 = 2.0 * np.pi / scenario.wavelength
    w = config.awv
    x_i = config.apv
    half = scenario.aperture / 2.0
    d0 = scenario.min_spacing
    objective = np.zeros(dim)
    objective[-1] = -1.0

    lowers = [position_lower_surrogate(w, x_i, k0 * math.cos(a))
              for a in su_angles(scenario, config.height)]
    uppers = []
    nonnegs = []
    for a in pu_angles(scenario, config.height):
        freq = k0 * math.cos(a)
        uppers.append(position_upper_surrogate(w, x_i, freq))
        nonnegs.append(position_nonneg_surrogate(w, x_i, freq))

    cons = []
    for quad in lowers:      # delta - q(x) <= 0
        cons.append(_pad_quad(quad, dim, delta_coeff=1.0, negate=True,
                              offset=0.0, label="su_gain"))
    for quad in uppers:      # q(x) - cap <= 0
        cons.append(_pad_quad(quad, dim, delta_coeff=0.0, negate=False,
                              offset=-scenario.interference_cap, label="pu_cap"))
    for quad in nonnegs:     # -q(x) <= 0
        cons.append(_pad_quad(quad, dim, delta_coeff=0.0, negate=True,
                              offset=0.0, label="pu_nonneg"))
    for idx in range(1, n):  # d0 + x_{idx-1} - x_idx <= 0
        q = np.zeros(dim)
        q[idx - 1] = 1.0
        q[idx] = -1.0
        cons.append(QuadConstraint(label="spacing", q=q, r=d0))
    for idx in range(n):
        hiq = np.zeros(dim)
        hiq[idx] = 1.0
        cons.append(QuadConstraint(label="box_high", q=hiq, r=-half))
        loq = np.zeros(dim)
        loq[idx] = -1.0
        cons.append(QuadConstraint(label="box_low", q=loq, r=-half))

    fallback = np.append(x_i, min(q.evaluate(x_i) for q in lowers))

    # strictly feasible start: blend from a well-spread interior layout
    # toward the expansion point until every margin is strictly positive
    if n == 1:
        spread = np.zeros(1)
    else:
        s_widest = 2.0 * half / (n - 1)
        spread = (np.arange(n) - (n - 1) / 2.0) * (0.5 * (d0 + s_widest))

    def margins_at(x):
        out = [half - float(np.abs(x).max())]
        if n > 1:
            out.append(float(np.min(np.diff(x))) - d0)
        out += [scenario.interference_cap - q.evaluate(x) for q in uppers]
        out += [q.evaluate(x) for q in nonnegs]
        return min(out)

    best_x, best_margin = None, 0.0
    for t in (1.0, 0.5, 0.25, 0.1, 0.05, 0.02, 0.01, 3e-3, 1e-3, 1e-4, 1e-5):
        x_t = x_i + t * (spread - x_i)
        margin = margins_at(x_t)
        if margin > 1e-6:
            best_x, best_margin = x_t, margin
            break
        if margin > best_margin:
            best_x, best_margin = x_t, margin
    start = None
    if best_x is not None and best_margin > 1e-9:
        delta0 = min(q.evaluate(best_x) for q in lowers)
        start = np.append(best_x, delta0 - max(1.0, 0.1 * abs(delta0)))
    return ConicSubproblem(objective=objective, constraints=tuple(cons),
                           start=start, fallback=fallback, kind="apv",
                           num_antennas=n)


def solve_apv(problem: ConicSubproblem) -> SubproblemSolution:
    """Solve the position block; variables are the antenna positions."""
    return _solve_conic(problem)


def default_height_cap(scenario: Scenario) -> float:
    """Finite search ceiling for the height variable."""
    reach = [abs(p) for p in scenario.pu_positions]
    reach += [abs(s) for s in scenario.su_positions]
    reach.append(scenario.min_height)
    return 20.0 * max(reach)
