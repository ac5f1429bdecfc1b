"""Acceptance suite.

One test per acceptance criterion, each asserting its stated tolerance and
printing a single PASS line (run with -s to see them).  Criteria cover the
analytic scalar ground truth, closed-loop value consistency, HJB residual
order, feasibility under positive inward margins, the geometric sufficient
condition end-to-end, the adversarial-weight game against the DP oracle,
the Riccati structural invariants, and byte-level determinism of the
verification command.
"""

import json
import math
import time
import warnings

import numpy as np
import pytest

from safelq import AlphaPolicy, build_problem
from safelq.cli import main
from safelq.errors import GridTooCoarseWarning
from safelq.game import solve_coupled, sup_over_constant_alpha
from safelq.geometry import sample_boundary
from safelq.ipc import (check_ipc_riccati, check_negative_definite, gamma_bar,
                        geometric_certificate, geometric_condition)
from safelq.oracle import brute_force_value, build_dp
from safelq.riccati import (check_monotone_in_T, solve_finite_horizon,
                            solve_stabilizing)
from safelq.synthesis import (cost_of_trajectory, hjb_residual,
                              simulate_closed_loop, value_from_riccati)

from conftest import CONFIG_DIR, load_config, load_spec

SCALAR_ROOT = (-1.0 + math.sqrt(3.0)) / 2.0
ALPHA0 = AlphaPolicy.zero(0.0, 64.0)

REGRESSION_CONFIGS = ("scalar_demo.json", "cubic_demo.json",
                      "timevarying_demo.json", "ball2d_demo.json",
                      "expk_demo.json")
REGRESSION_X0 = ([0.9], [0.8], [0.7], [0.5, 0.4], [0.8])


def _report(n, message):
    print(f"\nACCEPTANCE {n}: PASS - {message}")


def test_criterion_1_scalar_are_ground_truth(scalar_spec):
    start = time.perf_counter()
    sol = solve_stabilizing(scalar_spec, ALPHA0, 0.0, 1.0, tol=1e-8)
    elapsed = time.perf_counter() - start
    gap = abs(float(sol.at(0.0)[0, 0]) - SCALAR_ROOT)
    assert gap <= 1e-6
    assert elapsed < 1.0
    _report(1, f"stabilizing P = root of 2P^2+2P-1 within {gap:.2e} "
               f"in {elapsed:.2f}s")


def test_criterion_2_value_consistency_regressions():
    start = time.perf_counter()
    worst = 0.0
    for name, x0 in zip(REGRESSION_CONFIGS, REGRESSION_X0):
        spec = load_spec(name)
        sol = solve_stabilizing(spec, ALPHA0, 0.0, 12.0, tol=1e-8)
        traj = simulate_closed_loop(spec, sol, ALPHA0, 0.0, x0, 12.0)
        value = value_from_riccati(spec, sol, ALPHA0, 0.0, x0)
        cost = cost_of_trajectory(spec, traj, ALPHA0, tail_P=sol)
        rel = abs(cost.total - value) / (1.0 + abs(value))
        worst = max(worst, rel)
        assert rel <= 1e-3, f"{name}: rel gap {rel}"
    elapsed = time.perf_counter() - start
    assert elapsed < 30.0
    _report(2, f"{len(REGRESSION_CONFIGS)} instances (cubic map and "
               f"time-varying drift included), worst rel gap {worst:.2e}, "
               f"{elapsed:.1f}s")


def test_criterion_3_hjb_residual_second_order(timevarying_spec):
    def max_residual(dt):
        sol = solve_finite_horizon(timevarying_spec, ALPHA0, 0.0, 4.0, dt=dt)
        xs = np.linspace(-0.9, 0.9, 20)
        svals = 0.04 * np.round(np.linspace(0.2, 3.8, 20) / 0.04)
        return max(hjb_residual(timevarying_spec, sol, ALPHA0, float(s),
                                np.array([x]))
                   for s in svals for x in xs)

    ratio = max_residual(0.02) / max_residual(0.01)
    assert 3.0 <= ratio <= 5.0
    _report(3, f"20x20 probe grid, halving dt cuts the residual by {ratio:.2f}x")


def test_criterion_4_feasibility_under_ipc(scalar_spec, ball2d_spec,
                                           outward_spec):
    rng = np.random.default_rng(2024)
    for spec in (scalar_spec, ball2d_spec):
        sol = solve_stabilizing(spec, ALPHA0, 0.0, 8.0, tol=1e-8)
        samples = sample_boundary(spec.omega, 32)
        rep = check_ipc_riccati(spec, sol, np.linspace(0.0, 8.0, 9), samples)
        assert rep.worst_margin > 0.0
        lo, hi = spec.omega.bounding_box()
        tested = 0
        while tested < 50:
            x0 = rng.uniform(lo, hi)
            if spec.omega.boundary_margin(x0) > -1e-9:
                continue
            tested += 1
            traj = simulate_closed_loop(spec, sol, ALPHA0, 0.0, x0, 8.0)
            assert not traj.exited, f"exit from {x0}"

    # outward-drift counterexample: flag fires at the analytic exit time
    sol0 = solve_stabilizing(outward_spec, ALPHA0, 0.0, 3.0, tol=1e-8)
    traj = simulate_closed_loop(outward_spec, sol0, ALPHA0, 0.0, [0.5], 3.0)
    assert traj.exited
    assert abs(traj.exit_time - math.log(2.0)) <= 2.0 * traj.dt
    _report(4, "50 interior starts stay feasible on each verified instance; "
               f"counterexample exits at {traj.exit_time:.4f} vs ln2 = "
               f"{math.log(2.0):.4f}")


def test_criterion_5_geometric_condition_end_to_end():
    # unit ball, identity map: the inclusion holds at delta = 0.8 with
    # rho = 1, theta = 1/4
    base = load_config("geometric_ball.json")
    spec = build_problem(base)
    geom = geometric_condition(spec, 0.8, density=64)
    assert geom.holds
    gbar = gamma_bar(spec, ALPHA0, geom.rho, geom.theta)

    gamma_pass = 2.0 * gbar + 1.0
    cfg = load_config("geometric_ball.json")
    cfg["A"]["params"]["value"] = (-gamma_pass * np.eye(2)).tolist()
    spec_pass = build_problem(cfg)
    assert check_negative_definite(spec_pass.A.value(0.0), gamma_pass)
    sol = solve_stabilizing(spec_pass, ALPHA0, 0.0, 8.0, tol=1e-8)
    samples = sample_boundary(spec_pass.omega, 64)
    # worst margin positive means every (time, boundary) sample passes
    rep = check_ipc_riccati(spec_pass, sol, np.linspace(0.0, 8.0, 9), samples)
    assert rep.worst_margin > 0.0

    # adversarial weight: gamma far below the threshold must not be certified
    adv = load_config("geometric_ball.json")
    adv["K"] = {"variant": "truncated_constant",
                "params": {"level": 10.0, "t_cut": 10.0}}
    geom_adv = geometric_condition(build_problem(adv), 0.8, density=64)
    gbar_adv = gamma_bar(build_problem(adv), ALPHA0, geom_adv.rho,
                         geom_adv.theta)
    gamma_fail = 0.1 * gbar_adv
    adv["A"]["params"]["value"] = (-gamma_fail * np.eye(2)).tolist()
    spec_fail = build_problem(adv)
    cert = geometric_certificate(spec_fail, ALPHA0, delta=0.8, density=64)
    assert not cert.certified  # no false certification below the threshold
    assert cert.gamma_a < cert.gamma_bar
    _report(5, f"rho={geom.rho:.3f} theta={geom.theta:.3f} "
               f"gamma_bar={gbar:.4f}; IPC holds at gamma={gamma_pass:.3f}, "
               f"no certificate at gamma={gamma_fail:.3f} below the "
               f"adversarial threshold {gbar_adv:.2f}")


def test_criterion_6_game_representation(scalar_spec):
    start = time.perf_counter()
    gs = solve_coupled(scalar_spec, 0.0, [0.6], tol=1e-6, max_iter=50)
    assert gs.converged
    assert gs.iterations <= 50
    assert gs.alpha_update_norm < 1e-6

    sweep = sup_over_constant_alpha(scalar_spec, 0.0, [0.6],
                                    np.linspace(0.0, 2.0, 11))
    assert all(gs.W >= w - 1e-6 for _, w in sweep.table)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", GridTooCoarseWarning)
        dp = build_dp(scalar_spec, 0.0, 10.0, n_steps=400, state_res=201,
                      u_max=2.0, control_res=41, cost_mode="sup")
        table = brute_force_value(dp)
    v_dp = table.value_at([0.6])
    rel = abs(v_dp - gs.W) / abs(gs.W)
    assert rel <= 0.05
    elapsed = time.perf_counter() - start
    assert elapsed < 60.0
    _report(6, f"coupled fixed point in {gs.iterations} iterations, "
               f"W = {gs.W:.6f} dominates 11 constant policies and sits "
               f"{100 * rel:.1f}% from the DP oracle; {elapsed:.1f}s")


def test_criterion_7_riccati_structural_suite():
    for name in REGRESSION_CONFIGS:
        spec = load_spec(name)
        sol = solve_finite_horizon(spec, ALPHA0, 0.0, 4.0)
        assert np.all(sol.P[-1] == 0.0), f"{name}: terminal not exactly zero"
        for p in sol.P:
            assert np.array_equal(p, p.T), f"{name}: symmetry broken"
        lam_min = min(float(np.linalg.eigvalsh(p)[0]) for p in sol.P)
        assert lam_min >= -1e-9, f"{name}: lambda_min {lam_min}"
        for s_probe in (0.0, 1.0):
            rep = check_monotone_in_T(spec, ALPHA0, 0.0, s_probe, 2.0, 4.0)
            assert rep.ok, f"{name}: monotonicity fails at {s_probe}"
    _report(7, f"terminal zero, exact symmetry, psd, and horizon "
               f"monotonicity on {len(REGRESSION_CONFIGS)} instances")


def test_criterion_8_verify_determinism(tmp_path):
    out = tmp_path / "verify"
    scalar = str(CONFIG_DIR / "scalar_demo.json")
    assert main(["--config", scalar, "--out", str(out),
                 "verify", "--suite", "all"]) == 0
    first = {p.name: p.read_bytes() for p in out.iterdir()}
    assert main(["--config", scalar, "--out", str(out),
                 "verify", "--suite", "all"]) == 0
    second = {p.name: p.read_bytes() for p in out.iterdir()}
    assert first == second
    _report(8, f"verify outputs byte-identical across runs "
               f"({', '.join(sorted(first))})")
