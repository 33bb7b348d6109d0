import math

import numpy as np
import pytest

from conftest import small_cfg
from uavsec import orchestrate, trajopt
from uavsec.channel import FadingDraws, realize_mission
from uavsec.scenario import Position3, default_scenario, with_overrides


def test_distance_factors_examples():
    cfg = default_scenario()
    traj = trajopt.straight_line(cfg)
    wp = traj.waypoints.copy()
    wp[2] = cfg.iot_pos.xy  # directly above the device
    traj2 = trajopt.Trajectory(wp, traj.altitude, traj.start, traj.end)
    d_ud, _ = trajopt.distance_factors(traj2, cfg, 3)
    assert d_ud == pytest.approx(15.0)
    # pinned start to the untrusted target: sqrt(900 + 900 + 225) = 45
    _, d_ut = trajopt.distance_factors(traj, cfg, 1)
    assert d_ut == pytest.approx(45.0)


def test_distance_symmetry():
    cfg = with_overrides(default_scenario(), iot_pos=Position3(10.0, 0.0, 0.0),
                         ut_pos=Position3(-10.0, 0.0, 0.0))
    traj = trajopt.straight_line(cfg)
    wp = traj.waypoints.copy()
    wp[1] = np.array([0.0, 5.0])
    traj = trajopt.Trajectory(wp, traj.altitude, traj.start, traj.end)
    d_ud, d_ut = trajopt.distance_factors(traj, cfg, 2)
    assert d_ud == pytest.approx(d_ut)


def test_straight_line_properties():
    cfg = default_scenario()
    traj = trajopt.straight_line(cfg)
    assert np.allclose(traj.waypoints[0], cfg.uav_start.xy)
    assert np.allclose(traj.waypoints[-1], cfg.uav_end.xy)
    span = np.linalg.norm(cfg.uav_end.xy - cfg.uav_start.xy)
    assert np.allclose(traj.steps(), span / (cfg.slots - 1))


def test_freeze_gains_orthogonal_and_scaling(small_state):
    cfg, state, channels = small_state
    W = state.w.copy()
    # orthogonalize slot 1 against both channels
    h1 = channels[1].h_ud
    h2 = channels[1].h_ut
    basis = np.linalg.qr(np.stack([h1, h2]).T)[0]
    w = W[0] - basis @ (basis.conj().T @ W[0])
    W[0] = w
    psi1, psi2 = trajopt.freeze_gains(state.trajectory, channels, W)
    assert abs(psi1[0]) < 1e-10
    assert abs(psi2[0]) < 1e-10
    psi1b, psi2b = trajopt.freeze_gains(state.trajectory, channels, 2.0 * W)
    assert np.allclose(np.abs(psi1b) ** 2, 4.0 * np.abs(psi1) ** 2)
    assert np.allclose(np.abs(psi2b) ** 2, 4.0 * np.abs(psi2) ** 2)


def test_freeze_gains_matches_metrics_at_unit_reference():
    # with rho = 1 the frozen product reproduces the metric numerator
    from uavsec import metrics
    cfg = small_cfg(pathloss_ref_db=0.0)
    draws = FadingDraws.generate(cfg)
    state = orchestrate.initialize(cfg, draws)
    channels = realize_mission(cfg, state.trajectory.waypoints,
                               state.trajectory.altitude, draws)
    psi1, _ = trajopt.freeze_gains(state.trajectory, channels, state.w)
    for s in (1, cfg.slots):
        d_ud, _ = trajopt.distance_factors(state.trajectory, cfg, s)
        snr = metrics.snr_device(channels[s], state.w[s - 1], cfg.noise_dev_w)
        lhs = abs(psi1[s - 1]) ** 2 * d_ud ** (-cfg.pathloss_exp_comm)
        assert lhs == pytest.approx(snr * cfg.noise_dev_w, rel=1e-10)


def _slack_oracle(slacks, cfg, lay_slot, d_ud, d_ut):
    """Closed-form optimal slacks of one slot at fixed distances."""
    kappa = cfg.pathloss_exp_comm
    e = -4.0 / kappa
    k = lay_slot
    z30 = slacks.z3[k]
    z40 = slacks.z4[k]
    # z3 from the tangent of z3^e: z3 <= z30 + (d^2 - z30^e)/(e z30^(e-1))
    z3 = z30 + (d_ud ** 2 - z30 ** e) / (e * z30 ** (e - 1.0))
    if z3 <= 0.0:
        return None
    z1 = slacks.c1[k] * (2.0 * z30 * z3 - z30 ** 2)
    if z1 < 0.0:
        return None
    # z4 from the tangent plane of d_ut^2 (evaluated by the caller)
    ell = d_ut  # caller passes the tangent-plane value through d_ut
    if ell <= 0.0:
        return None
    z4 = ell ** (-kappa / 4.0)
    z2 = slacks.c2[k] * z4 ** 2 + slacks.floor_coef[k] * ell ** (kappa / 2.0)
    return z1, z2


def _surrogate_at(traj_prev, slacks, cfg, waypoints):
    """Independent evaluation of the subproblem optimum at fixed waypoints."""
    from uavsec.cvxcore import taylor_upper_logistic
    S = traj_prev.n_slots
    z2cfg = traj_prev.altitude ** 2
    total = 0.0
    for s in range(1, S + 1):
        k = s - 1
        p = waypoints[k]
        d_ud2 = float(np.sum((p - cfg.iot_pos.xy) ** 2)) + z2cfg
        p0 = traj_prev.waypoints[k]
        ell = slacks.d_ut0[k] ** 2 + 2.0 * float(
            (p0 - cfg.ut_pos.xy) @ (p - p0))  # tangent plane of d_ut^2
        res = _slack_oracle(slacks, cfg, k, math.sqrt(d_ud2), ell)
        if res is None:
            return -math.inf
        z1, z2 = res
        t2 = taylor_upper_logistic(slacks.z2[k])
        total += math.log2(1.0 + z1) - (t2.const + t2.slope * z2)
    return total / S


def test_previous_trajectory_stays_feasible(small_state):
    cfg, state, channels = small_state
    slacks = trajopt.build_slacks(state.trajectory, channels, state.w, state.u, cfg)
    p, lay, start, scales = trajopt.build_traj_subproblem(state.trajectory,
                                                          slacks, cfg)
    assert p.max_violation(start) <= 1e-9


def test_surrogate_tight_at_expansion(small_state):
    cfg, state, channels = small_state
    slacks = trajopt.build_slacks(state.trajectory, channels, state.w, state.u, cfg)
    p, lay, start, scales = trajopt.build_traj_subproblem(state.trajectory,
                                                          slacks, cfg)
    assert -p.objective_value(start) == pytest.approx(
        trajopt.frozen_objective(state.trajectory, slacks, cfg), abs=1e-9)


def test_surrogate_one_sided(small_state):
    cfg, state, channels = small_state
    slacks = trajopt.build_slacks(state.trajectory, channels, state.w, state.u, cfg)
    rng = np.random.default_rng(17)
    for _ in range(40):
        wp = state.trajectory.waypoints.copy()
        wp[1:] += rng.uniform(-8.0, 8.0, size=wp[1:].shape)
        val = _surrogate_at(state.trajectory, slacks, cfg, wp)
        if not math.isfinite(val):
            continue
        traj = trajopt.Trajectory(wp, state.trajectory.altitude,
                                  state.trajectory.start, state.trajectory.end)
        assert val <= trajopt.frozen_objective(traj, slacks, cfg) + 1e-9


def test_solver_matches_oracle_value(small_state):
    # the joint solve should not lag the slack oracle at its own waypoints
    cfg, state, channels = small_state
    slacks = trajopt.build_slacks(state.trajectory, channels, state.w, state.u, cfg)
    p, lay, start, scales = trajopt.build_traj_subproblem(state.trajectory,
                                                          slacks, cfg)
    from uavsec import cvxcore as cx
    rep = cx.solve(p, start, cx.SolveOptions(scales=scales, max_al=15,
                                             max_inner=300))
    wp = np.empty_like(state.trajectory.waypoints)
    wp[0] = state.trajectory.waypoints[0]
    for s in range(2, cfg.slots + 1):
        wp[s - 1] = (rep.x[lay.ix(s)], rep.x[lay.iy(s)])
    oracle_val = _surrogate_at(state.trajectory, slacks, cfg, wp)
    assert -rep.objective >= oracle_val - 1e-4  # solver precision on the slacks


def test_pull_toward_device_without_sensing():
    cfg = small_cfg(sense_rate_min=0.0, max_outer_iters=3)
    draws = FadingDraws.generate(cfg)
    state = orchestrate.initialize(cfg, draws)
    channels = realize_mission(cfg, state.trajectory.waypoints,
                               state.trajectory.altitude, draws)
    slacks = trajopt.build_slacks(state.trajectory, channels, state.w, state.u, cfg)
    assert not np.isfinite(slacks.r_ball).any()  # ball disabled
    new = trajopt.solve_traj(state.trajectory, slacks, cfg)

    def mean_d_ud(traj):
        return np.mean([trajopt.distance_factors(traj, cfg, s)[0]
                        for s in range(1, cfg.slots + 1)])

    assert mean_d_ud(new) < mean_d_ud(state.trajectory) - 0.5


def test_orthogonal_beams_make_objective_constant(small_state):
    # with both frozen products zeroed the objective cannot depend on the
    # waypoints; any returned trajectory has the same (zero-gain) value
    cfg, state, channels = small_state
    W = state.w.copy()
    for s in range(1, cfg.slots + 1):
        h1 = channels[s].h_ud
        h2 = channels[s].h_ut
        basis = np.linalg.qr(np.stack([h1, h2]).T)[0]
        W[s - 1] = W[s - 1] - basis @ (basis.conj().T @ W[s - 1])
    cfg0 = with_overrides(cfg, sense_rate_min=0.0)
    slacks = trajopt.build_slacks(state.trajectory, channels, W, state.u, cfg0)
    assert np.abs(slacks.c1).max() < 1e-18
    new = trajopt.solve_traj(state.trajectory, slacks, cfg0)
    before = trajopt.frozen_objective(state.trajectory, slacks, cfg0)
    after = trajopt.frozen_objective(new, slacks, cfg0)
    assert after == pytest.approx(before, abs=1e-9)
    assert float(new.steps().max()) <= cfg0.max_step


def test_mobility_exact_after_solve(small_state):
    cfg, state, channels = small_state
    slacks = trajopt.build_slacks(state.trajectory, channels, state.w, state.u, cfg)
    new = trajopt.solve_traj(state.trajectory, slacks, cfg)
    assert np.allclose(new.waypoints[0], cfg.uav_start.xy)
    assert float(new.steps().max()) <= cfg.max_step
    assert new.end_gap() <= cfg.max_step
    # trust region honored
    moves = np.linalg.norm(new.waypoints - state.trajectory.waypoints, axis=1)
    assert moves.max() <= cfg.traj_trust_factor * cfg.max_step + 1e-6


def test_nonpositive_slacks_rejected(small_state):
    cfg, state, channels = small_state
    slacks = trajopt.build_slacks(state.trajectory, channels, state.w, state.u, cfg)
    bad = trajopt.TrajSlacks(
        psi1=slacks.psi1, psi2=slacks.psi2, c1=slacks.c1, c2=slacks.c2,
        z1=slacks.z1, z2=slacks.z2, z3=np.zeros_like(slacks.z3), z4=slacks.z4,
        d_ud0=slacks.d_ud0, d_ut0=slacks.d_ut0, gamma_t=slacks.gamma_t,
        r_ball=slacks.r_ball, floor_coef=slacks.floor_coef)
    with pytest.raises(ValueError):
        trajopt.build_traj_subproblem(state.trajectory, bad, cfg)


def test_two_slot_toy_matches_grid_oracle():
    # collinear geometry, one free waypoint: exhaustive search over its plane
    cfg = with_overrides(
        default_scenario(), slots=2, horizon=1.2, n_tx=4, n_rx=2,
        sense_rate_min=4.0, iot_pos=Position3(20.0, 0.0, 0.0),
        ut_pos=Position3(40.0, 0.0, 0.0), uav_start=Position3(0.0, 0.0, 10.0),
        uav_end=Position3(30.0, 0.0, 10.0))
    draws = FadingDraws.generate(cfg)
    state = orchestrate.initialize(cfg, draws)
    channels = realize_mission(cfg, state.trajectory.waypoints,
                               state.trajectory.altitude, draws)
    slacks = trajopt.build_slacks(state.trajectory, channels, state.w, state.u, cfg)
    solved = trajopt.solve_traj(state.trajectory, slacks, cfg)

    D = cfg.max_step
    trust = cfg.traj_trust_factor * D
    p0 = state.trajectory.waypoints[1]
    start_xy = cfg.uav_start.xy
    end_xy = cfg.uav_end.xy

    def feasible(p):
        return (np.linalg.norm(p - start_xy) <= D
                and np.linalg.norm(p - end_xy) <= D
                and np.linalg.norm(p - p0) <= trust)

    lo = np.array([-5.0, -35.0])
    hi = np.array([35.0, 35.0])
    best_p = p0.copy()
    best_v = -math.inf
    for _ in range(4):
        xs = np.linspace(lo[0], hi[0], 41)
        ys = np.linspace(lo[1], hi[1], 41)
        for x in xs:
            for y in ys:
                p = np.array([x, y])
                if not feasible(p):
                    continue
                wp = state.trajectory.waypoints.copy()
                wp[1] = p
                v = _surrogate_at(state.trajectory, slacks, cfg, wp)
                if v > best_v:
                    best_v = v
                    best_p = p
        span = (hi - lo) / 40.0
        lo = best_p - 1.5 * span
        hi = best_p + 1.5 * span
    assert np.linalg.norm(solved.waypoints[1] - best_p) <= 0.05
