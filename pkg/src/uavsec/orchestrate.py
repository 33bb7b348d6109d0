"""Outer alternating-optimization loop and baseline schemes.

One iteration runs the blocks in order: transmit beamforming, trajectory,
receive combining. Fading draws are fixed per (seed, slot) for the whole
run, so the objective is a deterministic function of the design and the
recorded average secrecy rate is non-decreasing: the beamforming block
merges per slot against its expansion point, and a candidate trajectory is
adopted only if, after refreshing channels and repairing the echo constraint,
it does not regress the true objective.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import metrics, rxbf, trajopt, txbf
from .channel import FadingDraws, MissionChannels, realize_mission
from .scenario import ScenarioConfig
from .trajopt import Trajectory

SCHEMES = ("mrt-fixed-traj", "opt-bf-fixed-traj", "proposed")
ASCENT_EPS = 1e-9


class InfeasibleDesignError(RuntimeError):
    """A block could not produce a design meeting the constraints."""

    def __init__(self, block: str, slot: int, msg: str):
        super().__init__(f"{block}: {msg}")
        self.block = block
        self.slot = slot


@dataclass
class DesignState:
    trajectory: Trajectory
    w: np.ndarray        # (S, n_tx) transmit beamformers
    u: np.ndarray        # (S, n_rx) unit-norm receive combiners
    iteration: int = 0


@dataclass
class RunRecord:
    r_sum: list = field(default_factory=list)        # index 0 = initialization
    delta: list = field(default_factory=list)
    feas_residual: list = field(default_factory=list)
    mean_dist_device: list = field(default_factory=list)
    d_txbf: list = field(default_factory=list)       # per-block objective deltas
    d_traj: list = field(default_factory=list)
    ms_txbf: list = field(default_factory=list)
    ms_traj: list = field(default_factory=list)
    ms_rxbf: list = field(default_factory=list)
    status: str = "max-iters"

    @property
    def iterations(self) -> int:
        return len(self.r_sum) - 1

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    @property
    def final_r_sum(self) -> float:
        return self.r_sum[-1]

    def write_csv(self, path: str):
        """Full per-iteration record including block wall-clock columns.

        The CLI's convergence.csv carries only the deterministic columns;
        this writer is for profiling and notebooks.
        """
        lines = ["iteration,r_sum,delta,feas_residual,ms_txbf,ms_traj,ms_rxbf"]
        for it in range(len(self.r_sum)):
            blocks = ("", "", "") if it == 0 else (
                "%.9g" % self.ms_txbf[it - 1], "%.9g" % self.ms_traj[it - 1],
                "%.9g" % self.ms_rxbf[it - 1])
            lines.append(",".join(["%d" % it, "%.9g" % self.r_sum[it],
                                   "%.9g" % self.delta[it],
                                   "%.9g" % self.feas_residual[it], *blocks]))
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")


def feasibility_residual(state: DesignState, channels: MissionChannels,
                         cfg: ScenarioConfig) -> float:
    """Worst violation across mobility, power, unit-norm and echo constraints."""
    D = cfg.max_step
    res = max(0.0, float(state.trajectory.steps().max()) - D)
    res = max(res, state.trajectory.end_gap() - D)
    res = max(res, float(np.linalg.norm(state.trajectory.waypoints[0]
                                        - state.trajectory.start)))
    pmax = math.sqrt(cfg.tx_power_w)
    tau = cfg.sense_snr_min
    for s in range(1, cfg.slots + 1):
        res = max(res, float(np.linalg.norm(state.w[s - 1])) - pmax)
        res = max(res, abs(float(np.linalg.norm(state.u[s - 1])) - 1.0))
        if tau > 0.0:
            echo = txbf.echo_snr_value(channels[s], state.w[s - 1], state.u[s - 1],
                                       cfg.noise_echo_w)
            res = max(res, (tau - echo) / tau)
    return res


def _mrt_beams(channels: MissionChannels, cfg: ScenarioConfig) -> np.ndarray:
    W = np.empty((cfg.slots, cfg.n_tx), dtype=complex)
    pmax = math.sqrt(cfg.tx_power_w)
    for s in range(1, cfg.slots + 1):
        h = channels[s].h_ud
        W[s - 1] = pmax * h / np.linalg.norm(h)
    return W


def _zf_beams(channels: MissionChannels, cfg: ScenarioConfig) -> np.ndarray:
    """Device-matched beams projected off the eavesdropper channel."""
    W = np.empty((cfg.slots, cfg.n_tx), dtype=complex)
    pmax = math.sqrt(cfg.tx_power_w)
    for s in range(1, cfg.slots + 1):
        h_d = channels[s].h_ud
        h_e = channels[s].h_ut
        v = h_d - (np.vdot(h_e, h_d) / np.real(np.vdot(h_e, h_e))) * h_e
        nrm = float(np.linalg.norm(v))
        if nrm < 1e-12 * float(np.linalg.norm(h_d)):
            v = h_d  # channels collinear: nulling impossible
            nrm = float(np.linalg.norm(v))
        W[s - 1] = pmax * v / nrm
    return W


def _matched_combiners(channels: MissionChannels, cfg: ScenarioConfig) -> np.ndarray:
    U = np.empty((cfg.slots, cfg.n_rx), dtype=complex)
    for s in range(1, cfg.slots + 1):
        g = channels[s].g_rt
        U[s - 1] = rxbf.fix_phase(g / np.linalg.norm(g))
    return U


def _repair_all(channels: MissionChannels, W: np.ndarray, U: np.ndarray,
                cfg: ScenarioConfig, block: str) -> np.ndarray:
    out = W.copy()
    for s in range(1, cfg.slots + 1):
        try:
            out[s - 1] = txbf.repair_sensing_slot(
                channels[s], out[s - 1], U[s - 1], cfg.sense_snr_min,
                cfg.noise_echo_w, cfg.tx_power_w, s)
        except txbf.SensingInfeasibleError as e:
            raise InfeasibleDesignError(block, e.slot, str(e)) from e
    return out


def initialize(cfg: ScenarioConfig, draws: FadingDraws | None = None) -> DesignState:
    """Straight-line trajectory, sensing-repaired MRT beams, matched combiners."""
    if draws is None:
        draws = FadingDraws.generate(cfg)
    traj = trajopt.straight_line(cfg)
    channels = realize_mission(cfg, traj.waypoints, traj.altitude, draws)
    U = _matched_combiners(channels, cfg)
    W = _repair_all(channels, _mrt_beams(channels, cfg), U, cfg, "initialize")
    return DesignState(trajectory=traj, w=W, u=U, iteration=0)


def _mean_device_distance(traj: Trajectory, cfg: ScenarioConfig) -> float:
    from .trajopt import distance_factors

    return float(np.mean([distance_factors(traj, cfg, s)[0]
                          for s in range(1, cfg.slots + 1)]))


def _rx_pass(channels: MissionChannels, W: np.ndarray, U: np.ndarray,
             cfg: ScenarioConfig, block: str) -> np.ndarray:
    out = U.copy()
    for s in range(1, cfg.slots + 1):
        try:
            out[s - 1] = rxbf.solve_rx(channels[s], W[s - 1], U[s - 1],
                                       cfg.sense_snr_min, cfg.noise_echo_w, s)
        except rxbf.EchoInfeasibleError as e:
            raise InfeasibleDesignError(block, e.slot, str(e)) from e
    return out


def run(cfg: ScenarioConfig, scheme: str = "proposed") -> tuple:
    """Alternating optimization until |delta R_sum| <= conv_tol.

    Returns (DesignState, RunRecord). Raises InfeasibleDesignError when no
    feasible design exists (echo threshold unreachable).
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    draws = FadingDraws.generate(cfg)
    state = initialize(cfg, draws)
    channels = realize_mission(cfg, state.trajectory.waypoints,
                               state.trajectory.altitude, draws)
    rec = RunRecord()
    r_prev = metrics.r_sum(channels, state.w, state.u, cfg)
    rec.r_sum.append(r_prev)
    rec.delta.append(0.0)
    rec.feas_residual.append(feasibility_residual(state, channels, cfg))
    rec.mean_dist_device.append(_mean_device_distance(state.trajectory, cfg))
    if scheme == "mrt-fixed-traj":
        rec.status = "converged"
        return state, rec

    for it in range(1, cfg.max_outer_iters + 1):
        state.iteration = it
        snapshot = (state.trajectory, state.w.copy(), state.u.copy(), channels)

        # --- transmit beamforming ---
        t0 = time.perf_counter()
        tx_in = txbf.make_tx_input(channels, state.w, state.u, cfg)
        sol = txbf.solve_tx(tx_in)
        state.w = sol.w
        r_tx = metrics.r_sum(channels, state.w, state.u, cfg)
        rec.ms_txbf.append(1e3 * (time.perf_counter() - t0))
        rec.d_txbf.append(r_tx - r_prev)

        # --- trajectory ---
        t0 = time.perf_counter()
        r_after_traj = r_tx
        if scheme == "proposed":
            try:
                slacks = trajopt.build_slacks(state.trajectory, channels, state.w,
                                              state.u, cfg)
                cand = trajopt.solve_traj(state.trajectory, slacks, cfg)
                ch_cand = realize_mission(cfg, cand.waypoints, cand.altitude, draws)
                # Score the candidate with combiners re-matched to the new
                # geometry and beams either kept or cheaply re-aimed
                # (nulling-projected MRT), both sensing-repaired: a feasible
                # assignment that anticipates the next beamforming pass, so
                # moving is charged its true cost but realignment gains count.
                u_cand = _matched_combiners(ch_cand, cfg)
                w_keep = _repair_all(ch_cand, state.w, u_cand, cfg, "trajopt")
                w_aim = _repair_all(ch_cand, _zf_beams(ch_cand, cfg), u_cand,
                                    cfg, "trajopt")
                w_cand = w_keep
                for s in range(cfg.slots):
                    mk = metrics.slot_metrics(ch_cand[s + 1], w_keep[s],
                                              u_cand[s], cfg)
                    ma = metrics.slot_metrics(ch_cand[s + 1], w_aim[s],
                                              u_cand[s], cfg)
                    if ma.secrecy > mk.secrecy:
                        w_cand[s] = w_aim[s]
                r_cand = metrics.r_sum(ch_cand, w_cand, u_cand, cfg)
                if r_cand >= r_tx - ASCENT_EPS:
                    state.trajectory = cand
                    state.w = w_cand
                    state.u = u_cand
                    channels = ch_cand
                    r_after_traj = r_cand
            except (trajopt.TrajInfeasibleError, InfeasibleDesignError):
                pass  # keep the incumbent trajectory
        rec.ms_traj.append(1e3 * (time.perf_counter() - t0))
        rec.d_traj.append(r_after_traj - r_tx)

        # --- receive combining ---
        t0 = time.perf_counter()
        state.u = _rx_pass(channels, state.w, state.u, cfg, "rxbf")
        rec.ms_rxbf.append(1e3 * (time.perf_counter() - t0))

        r_now = metrics.r_sum(channels, state.w, state.u, cfg)

        if r_now < r_prev - 1e-6:
            # numerical regression: roll back to the last good state and stop
            state.trajectory, state.w, state.u, channels = snapshot
            rec.r_sum.append(r_prev)
            rec.delta.append(0.0)
            rec.feas_residual.append(feasibility_residual(state, channels, cfg))
            rec.mean_dist_device.append(_mean_device_distance(state.trajectory, cfg))
            rec.status = "rolled-back"
            break
        rec.r_sum.append(r_now)
        rec.delta.append(r_now - r_prev)
        rec.feas_residual.append(feasibility_residual(state, channels, cfg))
        rec.mean_dist_device.append(_mean_device_distance(state.trajectory, cfg))
        r_prev = r_now
        if abs(rec.delta[-1]) <= cfg.conv_tol:
            rec.status = "converged"
            break
    return state, rec


def run_baseline(cfg: ScenarioConfig, scheme: str) -> tuple:
    """mrt-fixed-traj | opt-bf-fixed-traj | proposed."""
    return run(cfg, scheme)
