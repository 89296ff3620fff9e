"""Subproblem solvers: exact height search and certified conic solves.

Oracles: a dense grid search for the 1-D height problem, and multi-start
SLSQP local ascent (scipy) on the identical epigraph program for the
weight/position blocks.
"""

import math

import numpy as np
import pytest
from scipy.optimize import minimize

from uavbeam.qcqp import (
    ConicSubproblem,
    HeightSubproblem,
    QuadConstraint,
    SolverContractError,
    build_apv_subproblem,
    build_awv_subproblem,
    feasible_interval,
    kkt_residual,
    solve_apv,
    solve_awv,
    solve_height,
)
from uavbeam.scenario import (
    AntennaConfig,
    Scenario,
    steering_angle,
    steering_vector,
)
from uavbeam.surrogate import ScalarQuadratic

from conftest import random_weights


# ---------------------------------------------------------------- oracles

def grid_search_height(problem, points=10 ** 6):
    """Dense-grid oracle for the height subproblem."""
    lo, hi = problem.h_min, problem.h_max
    if problem.trust_center is not None and problem.trust_radius is not None:
        lo = max(lo, problem.trust_center - problem.trust_radius)
        hi = min(hi, problem.trust_center + problem.trust_radius)
    if lo > hi:
        return None
    grid = np.linspace(lo, hi, points)
    mask = np.ones(points, dtype=bool)
    for q in problem.upper_quads:
        mask &= q.evaluate(grid) <= problem.cap
    if not mask.any():
        return None
    vals = np.full(points, np.inf)
    for q in problem.lower_quads:
        vals = np.minimum(vals, q.evaluate(grid))
    vals[~mask] = -np.inf
    return float(vals.max())


def slsqp_best_delta(problem, rng, n_starts=8):
    """Multi-start local ascent on the identical convex program."""
    n = problem.dimension
    cons = [{"type": "ineq",
             "fun": lambda v, c=c: -c.value(v),
             "jac": lambda v, c=c: -c.grad(v)} for c in problem.constraints]
    best = None
    starts = [problem.fallback.astype(float)]
    for _ in range(n_starts - 1):
        v0 = problem.fallback + rng.normal(0.0, 0.05, n)
        v0[-1] = problem.fallback[-1] - rng.uniform(0.0, 1.0)
        starts.append(v0)
    for v0 in starts:
        res = minimize(lambda v: -v[-1], v0,
                       jac=lambda v: -np.eye(n)[-1],
                       method="SLSQP", constraints=cons,
                       options={"maxiter": 300, "ftol": 1e-12})
        if not res.success:
            continue
        worst = max(c.value(res.x) for c in problem.constraints)
        if worst <= 1e-7:
            best = res.x[-1] if best is None else max(best, res.x[-1])
    return best


def random_height_instance(rng):
    n_low = int(rng.integers(1, 5))
    n_up = int(rng.integers(0, 5))
    h_min = float(rng.uniform(5.0, 12.0))
    h_max = h_min + float(rng.uniform(1.0, 3.0))
    cap = float(rng.uniform(0.1, 2.0))
    lowers = []
    for _ in range(n_low):
        a = -float(rng.uniform(0.01, 0.3))
        vertex = float(rng.uniform(h_min - 1.0, h_max + 1.0))
        peak = float(rng.uniform(0.0, 8.0))
        lowers.append(ScalarQuadratic(a, -2.0 * a * vertex,
                                      a * vertex ** 2 + peak))
    uppers = []
    for _ in range(n_up):
        a = float(rng.uniform(0.0, 0.25))
        vertex = float(rng.uniform(h_min - 1.0, h_max + 1.0))
        base = float(rng.uniform(-0.5, cap + 0.5))
        uppers.append(ScalarQuadratic(a, -2.0 * a * vertex,
                                      a * vertex ** 2 + base))
    trust_c = trust_r = None
    if rng.random() < 0.3:
        trust_c = float(rng.uniform(h_min, h_max))
        trust_r = float(rng.uniform(0.3, 1.5))
    return HeightSubproblem(lower_quads=tuple(lowers), upper_quads=tuple(uppers),
                            h_min=h_min, h_max=h_max, cap=cap,
                            trust_center=trust_c, trust_radius=trust_r)


def random_small_problem(rng, kind):
    """A conic subproblem built from a random feasible scenario iterate."""
    n = int(rng.integers(1, 5))
    n_su = int(rng.integers(1, 4))
    n_pu = int(rng.integers(0, 3))
    d0 = 0.05
    aperture = max(n, 2) * d0 * float(rng.uniform(1.0, 1.6))
    sc = Scenario(
        pu_positions=tuple(rng.uniform(-50, 50, n_pu)),
        su_positions=tuple(rng.uniform(-50, 50, n_su)),
        wavelength=0.1, aperture=aperture, min_spacing=d0, min_height=5.0,
        interference_cap=float(rng.uniform(0.05, 0.5)),
        num_antennas=n, tolerance=1e-3)
    slack = aperture - (n - 1) * d0
    gaps = d0 + rng.uniform(0.0, slack / max(n - 1, 1), max(n - 1, 0))
    x = np.concatenate([[0.0], np.cumsum(gaps)]) if n > 1 else np.zeros(1)
    x = x - x.mean()
    x = np.clip(x, -aperture / 2, aperture / 2)
    w = random_weights(rng, n)
    w = w / max(np.linalg.norm(w), 1e-9) * rng.uniform(0.3, 0.95)
    cfg = AntennaConfig(apv=x, awv=w, height=float(rng.uniform(6.0, 30.0)))
    gains = [abs(np.vdot(w, steering_vector(x, steering_angle(p, cfg.height),
                                            0.1))) ** 2
             for p in sc.pu_positions]
    if gains and max(gains) > sc.interference_cap:
        w = w * math.sqrt(0.95 * sc.interference_cap / max(gains))
        cfg = AntennaConfig(apv=x, awv=w, height=cfg.height)
    builder = build_awv_subproblem if kind == "awv" else build_apv_subproblem
    return builder(sc, cfg)


# ------------------------------------------------------------------- tests

class TestFeasibleInterval:
    def test_parabola_roots(self):
        iv = feasible_interval(ScalarQuadratic(1.0, 0.0, 0.0), 4.0, 0.0, 10.0)
        assert iv == [(0.0, 2.0)]

    def test_constant_below_cap(self):
        iv = feasible_interval(ScalarQuadratic(0.0, 0.0, 1.0), 2.0, 3.0, 7.0)
        assert iv == [(3.0, 7.0)]

    def test_constant_above_cap(self):
        assert feasible_interval(ScalarQuadratic(0.0, 0.0, 3.0), 2.0, 0.0, 1.0) == []

    def test_concave_rejected(self):
        with pytest.raises(SolverContractError):
            feasible_interval(ScalarQuadratic(-1.0, 0.0, 0.0), 1.0, 0.0, 1.0)


class TestSolveHeight:
    def test_interior_vertex(self):
        quad = ScalarQuadratic(-1.0, 24.0, -136.0)  # -(h-12)^2 + 8
        prob = HeightSubproblem(lower_quads=(quad,), upper_quads=(),
                                h_min=10.0, h_max=20.0, cap=1.0)
        sol = solve_height(prob)
        assert sol.status == "optimal"
        assert sol.variables[0] == pytest.approx(12.0, abs=1e-8)
        assert sol.delta == pytest.approx(8.0, abs=1e-10)

    def test_cap_pushes_to_boundary(self):
        quad = ScalarQuadratic(-1.0, 24.0, -136.0)
        # cap constraint (h - 14 <= 0 flipped): require h >= 14 via -h + 14 <= 0
        cap = ScalarQuadratic(0.0, -1.0, 14.0)
        prob = HeightSubproblem(lower_quads=(quad,), upper_quads=(cap,),
                                h_min=10.0, h_max=20.0, cap=0.0)
        sol = solve_height(prob)
        assert sol.variables[0] == pytest.approx(14.0, abs=1e-8)
        assert sol.delta == pytest.approx(4.0, abs=1e-7)

    def test_infeasible_caps(self):
        quad = ScalarQuadratic(-0.1, 0.0, 5.0)
        cap = ScalarQuadratic(0.0, 0.0, 3.0)  # constant 3 > cap 1
        prob = HeightSubproblem(lower_quads=(quad,), upper_quads=(cap,),
                                h_min=10.0, h_max=20.0, cap=1.0)
        assert solve_height(prob).status == "infeasible"

    def test_grid_oracle_100_instances(self, rng):
        agree = 0
        for _ in range(100):
            prob = random_height_instance(rng)
            oracle = grid_search_height(prob)
            sol = solve_height(prob)
            if oracle is None:
                assert sol.status == "infeasible"
            else:
                assert sol.status == "optimal"
                assert sol.delta == pytest.approx(oracle, abs=1e-4)
                agree += 1
        assert agree >= 50  # distribution sanity: mostly feasible draws

    def test_smallest_optimal_height_tie_break(self):
        # flat objective: every h optimal; solver must return the left end
        quad = ScalarQuadratic(0.0, 0.0, 3.0)
        prob = HeightSubproblem(lower_quads=(quad,), upper_quads=(),
                                h_min=10.0, h_max=20.0, cap=1.0)
        sol = solve_height(prob)
        assert sol.variables[0] == pytest.approx(10.0, abs=1e-6)


class TestSolveAwv:
    def test_matched_expansion_reaches_full_gain(self):
        sc = Scenario(pu_positions=(), su_positions=(-11.91,))
        n = sc.num_antennas
        x = (np.arange(n) - (n - 1) / 2) * sc.min_spacing
        angle = steering_angle(sc.su_positions[0], 12.0)
        w_i = steering_vector(x, angle, sc.wavelength) / math.sqrt(n)
        cfg = AntennaConfig(apv=x, awv=w_i, height=12.0)
        sol = solve_awv(build_awv_subproblem(sc, cfg))
        assert sol.status == "optimal"
        assert sol.delta == pytest.approx(n, abs=1e-5)
        alpha = steering_vector(x, angle, sc.wavelength)
        corr = abs(np.vdot(sol.variables, alpha))
        corr /= np.linalg.norm(sol.variables) * math.sqrt(n)
        assert corr == pytest.approx(1.0, abs=1e-5)

    def test_single_antenna_cap_binds(self):
        sc = Scenario(pu_positions=(30.0,), su_positions=(0.0,),
                      num_antennas=1, interference_cap=0.09)
        w_i = np.array([0.2 + 0.0j])
        cfg = AntennaConfig(apv=[0.0], awv=w_i, height=12.0)
        sol = solve_awv(build_awv_subproblem(sc, cfg))
        assert sol.status == "optimal"
        # single antenna radiates isotropically: the cap binds at |w| = sqrt(eta)
        assert abs(sol.variables[0]) == pytest.approx(math.sqrt(0.09), abs=1e-6)

    def test_oracle_agreement_random_instances(self, rng):
        checked = 0
        for _ in range(25):
            prob = random_small_problem(rng, "awv")
            sol = solve_awv(prob)
            assert sol.status == "optimal"
            oracle = slsqp_best_delta(prob, rng)
            if oracle is None:
                continue
            assert sol.delta >= oracle - 1e-3
            assert sol.delta <= oracle + 1e-3
            checked += 1
        assert checked >= 20

    def test_certificates(self, rng):
        for _ in range(10):
            prob = random_small_problem(rng, "awv")
            sol = solve_awv(prob)
            assert sol.status == "optimal"
            assert sol.kkt_residual <= 1e-7
            assert sol.constraint_residuals.max() <= 1e-6
            assert kkt_residual(prob, sol) == pytest.approx(sol.kkt_residual)


class TestSolveApv:
    def test_position_independent_quadratics(self):
        # broadside user: the gain does not depend on positions at all
        sc = Scenario(pu_positions=(), su_positions=(0.0,), num_antennas=2)
        x = np.array([-0.025, 0.025])
        w = np.array([0.5 + 0.1j, 0.4 - 0.2j])
        cfg = AntennaConfig(apv=x, awv=w, height=12.0)
        expected = abs(np.sum(w)) ** 2
        sol = solve_apv(build_apv_subproblem(sc, cfg))
        assert sol.status == "optimal"
        assert sol.delta == pytest.approx(expected, abs=1e-6)
        got = sol.variables
        assert np.all(np.diff(got) >= sc.min_spacing - 1e-9)
        assert np.all(np.abs(got) <= sc.aperture / 2 + 1e-9)

    def test_symmetric_concave_bowl(self):
        # single hand-built objective delta <= c - ||x||^2/2: optimum packs
        # the pair symmetrically around the origin at minimum spacing
        n, d0, half, c0 = 2, 0.05, 0.2, 5.0
        dim = n + 1
        cons = [QuadConstraint(label="su_gain",
                               q=np.array([0.0, 0.0, 1.0]), r=-c0,
                               P=np.diag([1.0, 1.0, 0.0]))]
        cons.append(QuadConstraint(label="spacing",
                                   q=np.array([1.0, -1.0, 0.0]), r=d0))
        for idx in range(n):
            hi = np.zeros(dim)
            hi[idx] = 1.0
            cons.append(QuadConstraint(label="box_high", q=hi, r=-half))
            cons.append(QuadConstraint(label="box_low", q=-hi, r=-half))
        x0 = np.array([-0.1, 0.1])
        prob = ConicSubproblem(
            objective=np.array([0.0, 0.0, -1.0]), constraints=tuple(cons),
            start=np.array([-0.1, 0.1, c0 - 1.0]),
            fallback=np.array([-0.1, 0.1, c0 - 0.01]), kind="apv",
            num_antennas=n)
        sol = solve_apv(prob)
        assert sol.status == "optimal"
        np.testing.assert_allclose(sol.variables, [-d0 / 2, d0 / 2], atol=1e-6)
        assert sol.delta == pytest.approx(c0 - 0.5 * (2 * (d0 / 2) ** 2), abs=1e-6)

    def test_oracle_agreement_random_instances(self, rng):
        checked = 0
        for _ in range(25):
            prob = random_small_problem(rng, "apv")
            sol = solve_apv(prob)
            assert sol.status == "optimal"
            oracle = slsqp_best_delta(prob, rng)
            if oracle is None:
                continue
            assert sol.delta == pytest.approx(oracle, abs=1e-3)
            checked += 1
        assert checked >= 20

    def test_certificates_and_epigraph_consistency(self, rng):
        for _ in range(10):
            prob = random_small_problem(rng, "apv")
            sol = solve_apv(prob)
            assert sol.status == "optimal"
            assert sol.kkt_residual <= 1e-7
            assert sol.constraint_residuals.max() <= 1e-6
            su_rows = [c for c in prob.constraints if c.label == "su_gain"]
            worst = max(c.value(sol.raw) for c in su_rows)
            assert worst <= 1e-8  # delta never exceeds its own constraints

    def test_boundary_expansion_point_still_solves(self):
        # expansion at exact minimum spacing: phase-I territory
        sc = Scenario()
        n = sc.num_antennas
        x = (np.arange(n) - (n - 1) / 2) * sc.min_spacing
        w = random_weights(np.random.default_rng(7), n)
        w = w / np.linalg.norm(w) * 0.5
        cfg = AntennaConfig(apv=x, awv=w, height=11.0)
        gains = [abs(np.vdot(w, steering_vector(
            x, steering_angle(p, 11.0), sc.wavelength))) ** 2
            for p in sc.pu_positions]
        if max(gains) > sc.interference_cap:
            w = w * math.sqrt(0.9 * sc.interference_cap / max(gains))
            cfg = AntennaConfig(apv=x, awv=w, height=11.0)
        sol = solve_apv(build_apv_subproblem(sc, cfg))
        assert sol.status == "optimal"
        assert sol.constraint_residuals.max() <= 1e-6


class TestKktResidual:
    def test_analytic_optimum_is_exact(self):
        # maximize delta s.t. delta <= c: optimum (c, lam=1) satisfies KKT exactly
        prob = ConicSubproblem(
            objective=np.array([-1.0]),
            constraints=(QuadConstraint(label="su_gain",
                                        q=np.array([1.0]), r=-3.0),),
            start=np.array([0.0]), fallback=np.array([0.0]))
        assert kkt_residual(prob, (np.array([3.0]), np.array([1.0]))) <= 1e-10

    def test_perturbation_is_detected(self, rng):
        prob = random_small_problem(rng, "awv")
        sol = solve_awv(prob)
        assert sol.status == "optimal"
        bumped = sol.raw.copy()
        bumped[-1] += 1e-2  # push the epigraph variable into infeasibility
        assert kkt_residual(prob, (bumped, sol.multipliers)) >= 1e-3

    def test_solver_self_consistency(self, rng):
        for _ in range(5):
            prob = random_small_problem(rng, "apv")
            sol = solve_apv(prob)
            assert kkt_residual(prob, sol) <= 1e-7


class TestDeterminism:
    def test_identical_inputs_identical_outputs(self, rng):
        prob1 = random_small_problem(rng, "awv")
        sol1 = solve_awv(prob1)
        sol2 = solve_awv(prob1)
        assert np.array_equal(sol1.variables, sol2.variables)
        assert sol1.delta == sol2.delta
        assert sol1.kkt_residual == sol2.kkt_residual
