"""Per-iteration trajectory block.

For frozen beamformers the per-slot rates are approximated by holding the
beam-channel products fixed and letting only the distance-dependent path
losses vary. Slack variables decouple the rate expressions from the
waypoints:

    z1[s] <= device-SNR proxy      via z1 <= C1*z3^2,  z3 <= d_ud^(-k/2)
    z2[s] >= eavesdropper proxy    via z2 >= C2*z4^2,  z4 >= d_ut^(-k/2)

Each nonconvex piece is replaced by a one-sided tangent bound that is tight
at the previous iterate (squares from below on the <= side, negative powers
by their tangents, squared distances by their tangent planes), so the
previous trajectory stays feasible and the surrogate objective minorizes the
frozen-gain objective.

The frozen leakage product is split into the part forced by the echo
constraint and the excess above it. Meeting the echo threshold at distance d
requires beam gain toward the target growing like d^(2k), so the forced part
of the leakage scales like d^(+k), the opposite monotonicity of a frozen
product, so freezing it whole inverts the optimizer's distance incentive.
The subproblem therefore charges z2 with the frozen excess (falling with
distance, as a frozen product should) plus a fully convex forced-leakage
floor c_f * d_ut^k carried by a squared-distance slack; the sum equals the
true frozen leakage at the expansion trajectory. A sensing ball around the
target (radius from the lagged echo budget) and the mobility, endpoint and
trust-region constraints complete the subproblem, which is solved jointly
over all waypoints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import cvxcore as cx
from .channel import MissionChannels
from .scenario import ScenarioConfig

ZETA_FLOOR_FRACTION = 0.5   # slack floors sit below any value reachable in-trust


class TrajInfeasibleError(RuntimeError):
    """The trajectory subproblem has no feasible waypoint set."""

    def __init__(self, slot: int, msg: str):
        super().__init__(msg)
        self.slot = slot


@dataclass(frozen=True)
class Trajectory:
    """Planar waypoints at fixed altitude; waypoint 1 is pinned to the start."""

    waypoints: np.ndarray   # (S, 2)
    altitude: float
    start: np.ndarray       # (2,)
    end: np.ndarray         # (2,)

    def __post_init__(self):
        self.waypoints.setflags(write=False)

    @property
    def n_slots(self) -> int:
        return self.waypoints.shape[0]

    def steps(self) -> np.ndarray:
        return np.linalg.norm(np.diff(self.waypoints, axis=0), axis=1)

    def end_gap(self) -> float:
        return float(np.linalg.norm(self.waypoints[-1] - self.end))


def straight_line(cfg: ScenarioConfig) -> Trajectory:
    """Straight line from start to end, feasible for every validated config.

    Uniform spacing when it fits inside the per-slot bound; otherwise a
    max-speed dash that reaches the end point and hovers there.
    """
    span = float(np.linalg.norm(cfg.uav_end.xy - cfg.uav_start.xy))
    D = cfg.max_step
    if span <= (cfg.slots - 1) * D or span == 0.0:
        frac = np.linspace(0.0, 1.0, cfg.slots)[:, None]
        wp = cfg.uav_start.xy[None, :] * (1.0 - frac) + cfg.uav_end.xy[None, :] * frac
    else:
        reach = np.minimum(np.arange(cfg.slots) * D, span)[:, None]
        direction = (cfg.uav_end.xy - cfg.uav_start.xy) / span
        wp = cfg.uav_start.xy[None, :] + reach * direction[None, :]
    return Trajectory(wp.copy(), cfg.uav_start.z, cfg.uav_start.xy, cfg.uav_end.xy)


def distance_factors(traj: Trajectory, cfg: ScenarioConfig, slot: int):
    """(d_ud, d_ut): 3-D distances from the slot's waypoint to device and UT."""
    p = traj.waypoints[slot - 1]
    z2 = traj.altitude ** 2
    d_ud = math.sqrt(float(np.sum((p - cfg.iot_pos.xy) ** 2)) + z2)
    d_ut = math.sqrt(float(np.sum((p - cfg.ut_pos.xy) ** 2)) + z2)
    return d_ud, d_ut


def freeze_gains(traj_prev: Trajectory, channels: MissionChannels, W: np.ndarray):
    """Per-slot beam-channel products held constant through the subproblem."""
    S = traj_prev.n_slots
    psi1 = np.empty(S, dtype=complex)
    psi2 = np.empty(S, dtype=complex)
    for s in range(1, S + 1):
        psi1[s - 1] = np.vdot(channels[s].h_ud, W[s - 1])
        psi2[s - 1] = np.vdot(channels[s].h_ut, W[s - 1])
    return psi1, psi2


@dataclass(frozen=True)
class TrajSlacks:
    """Expansion-point slacks and frozen constants for one subproblem."""

    psi1: np.ndarray      # (S,) complex
    psi2: np.ndarray      # (S,) complex
    c1: np.ndarray        # device proxy coefficient: rho*|psi1|^2 / sigma_d
    c2: np.ndarray        # frozen-excess leakage coefficient (above echo-forced)
    z1: np.ndarray        # expansion slacks (all positive)
    z2: np.ndarray
    z3: np.ndarray
    z4: np.ndarray
    d_ud0: np.ndarray
    d_ut0: np.ndarray
    gamma_t: np.ndarray   # lagged sensing-distance threshold (inf disables)
    r_ball: np.ndarray    # target-ball radius implied by gamma_t
    floor_coef: np.ndarray  # forced-leakage floor: z2 >= floor_coef * d_ut^kappa


def build_slacks(traj_prev: Trajectory, channels: MissionChannels, W: np.ndarray,
                 U: np.ndarray, cfg: ScenarioConfig) -> TrajSlacks:
    S = traj_prev.n_slots
    kappa = cfg.pathloss_exp_comm
    alpha = cfg.pathloss_exp_sense
    rho = cfg.pathloss_ref
    tau = cfg.sense_snr_min
    psi1, psi2 = freeze_gains(traj_prev, channels, W)
    c1 = rho * np.abs(psi1) ** 2 / cfg.noise_dev_w
    d_ud0 = np.empty(S)
    d_ut0 = np.empty(S)
    for s in range(1, S + 1):
        d_ud0[s - 1], d_ut0[s - 1] = distance_factors(traj_prev, cfg, s)
    z3 = d_ud0 ** (-kappa / 2.0)
    z4 = d_ut0 ** (-kappa / 2.0)
    z1 = c1 * z3 ** 2
    gamma_t = np.full(S, math.inf)
    r_ball = np.full(S, math.inf)
    floor_coef = np.zeros(S)
    gain_excess = np.abs(psi2) ** 2
    if tau > 0.0:
        for s in range(S):
            ch = channels[s + 1]
            phi2 = abs(np.vdot(U[s], ch.g_rt)) ** 2
            m = phi2 * abs(psi2[s]) ** 2
            if m > 0.0:
                gamma_t[s] = tau * cfg.noise_echo_w / (d_ut0[s] ** (-2.0 * alpha)
                                                       * rho ** 2 * m)
                r_ball[s] = gamma_t[s] ** (-1.0 / (2.0 * alpha))
            if phi2 > 0.0:
                floor_coef[s] = tau * cfg.noise_echo_w / (rho * phi2
                                                          * cfg.noise_eve_w)
                need = tau * cfg.noise_echo_w / (ch.l_ut ** 4 * phi2)
                gain_excess[s] = max(0.0, gain_excess[s] - need)
    c2 = rho * gain_excess / cfg.noise_eve_w
    z2 = c2 * z4 ** 2 + floor_coef * d_ut0 ** kappa
    return TrajSlacks(psi1, psi2, c1, c2, z1, z2, z3, z4, d_ud0, d_ut0,
                      gamma_t, r_ball, floor_coef)


# ---------------------------------------------------------------------------
# variable layout: [x2, y2, ..., xS, yS, z1[1..S], ..., z4[1..S], z5[1..S]]
# where z5[s] >= d_ut[s]^2 carries the forced-leakage floor
# ---------------------------------------------------------------------------

class _Layout:
    def __init__(self, S: int):
        self.S = S
        self.n = 2 * (S - 1) + 5 * S

    def ix(self, s: int) -> int:
        return 2 * (s - 2)

    def iy(self, s: int) -> int:
        return 2 * (s - 2) + 1

    def iz(self, which: int, s: int) -> int:
        return 2 * (self.S - 1) + (which - 1) * self.S + (s - 1)


def build_traj_subproblem(traj_prev: Trajectory, slacks: TrajSlacks,
                          cfg: ScenarioConfig):
    """The joint convex subproblem; returns (problem, layout, start, scales)."""
    if np.any(slacks.z3 <= 0.0) or np.any(slacks.z4 <= 0.0):
        raise ValueError("expansion slacks must be strictly positive")
    S = traj_prev.n_slots
    lay = _Layout(S)
    kappa = cfg.pathloss_exp_comm
    expo = -4.0 / kappa
    z_u2 = traj_prev.altitude ** 2
    D = cfg.max_step
    trust = cfg.traj_trust_factor * D
    p = cx.ConvexSubproblem(lay.n)

    start = np.empty(lay.n)
    scales = np.empty(lay.n)
    z5 = slacks.d_ut0 ** 2
    for s in range(2, S + 1):
        start[lay.ix(s)], start[lay.iy(s)] = traj_prev.waypoints[s - 1]
        scales[lay.ix(s)] = scales[lay.iy(s)] = max(D, 1.0)
    for s in range(1, S + 1):
        for which, z in ((1, slacks.z1), (2, slacks.z2), (3, slacks.z3),
                         (4, slacks.z4), (5, z5)):
            idx = lay.iz(which, s)
            start[idx] = z[s - 1]
            scales[idx] = max(z[s - 1], 1e-30)

    # objective: maximize (1/S) sum[ log2(1+z1) - tangent(log2(1+z2)) ]
    for s in range(1, S + 1):
        t2 = cx.taylor_upper_logistic(slacks.z2[s - 1])
        p.add_obj_log(lay.iz(1, s), 1.0 / S)
        p.add_obj_lin(lay.iz(2, s), t2.slope / S)
        p.obj_const += t2.const / S

    for s in range(1, S + 1):
        k = s - 1
        fixed = s == 1
        px0, py0 = traj_prev.waypoints[k]

        # device chain: z1 <= c1*(2 z3_0 z3 - z3_0^2)  [tangent of z3^2 from below]
        con = p.new_constraint(f"dev-product s={s}")
        con.lin.append((lay.iz(1, s), 1.0))
        con.lin.append((lay.iz(3, s), -2.0 * slacks.c1[k] * slacks.z3[k]))
        con.const = slacks.c1[k] * slacks.z3[k] ** 2

        # device distance: ||p - p_d||^2 + z_u^2 <= tangent(z3^expo)
        t3 = cx.taylor_convex_power(slacks.z3[k], expo)
        con = p.new_constraint(f"dev-distance s={s}")
        con.lin.append((lay.iz(3, s), -t3.slope))
        if fixed:
            con.const = slacks.d_ud0[k] ** 2 - t3.const
        else:
            dx, dy = cfg.iot_pos.xy
            con.quad.append((lay.ix(s), lay.ix(s), 1.0))
            con.quad.append((lay.iy(s), lay.iy(s), 1.0))
            con.lin.append((lay.ix(s), -2.0 * dx))
            con.lin.append((lay.iy(s), -2.0 * dy))
            con.const = dx * dx + dy * dy + z_u2 - t3.const

        # eavesdropper leakage: c2*z4^2 (+ forced floor via z5) <= z2, convex
        con = p.new_constraint(f"eve-product s={s}")
        con.quad.append((lay.iz(4, s), lay.iz(4, s), slacks.c2[k]))
        con.lin.append((lay.iz(2, s), -1.0))
        if slacks.floor_coef[k] > 0.0:
            con.pow.append((lay.iz(5, s), slacks.floor_coef[k], kappa / 2.0))

        # eavesdropper distance floor: z4^expo <= tangent plane of d_ut^2 at p0
        con = p.new_constraint(f"eve-distance s={s}")
        con.pow.append((lay.iz(4, s), 1.0, expo))
        tx, ty = cfg.ut_pos.xy
        if fixed:
            con.const = -(slacks.d_ut0[k] ** 2)
        else:
            con.lin.append((lay.ix(s), -2.0 * (px0 - tx)))
            con.lin.append((lay.iy(s), -2.0 * (py0 - ty)))
            con.const = -(slacks.d_ut0[k] ** 2) + 2.0 * (px0 - tx) * px0 \
                + 2.0 * (py0 - ty) * py0

        # squared-distance slack feeding the forced-leakage floor: z5 >= d_ut^2
        if slacks.floor_coef[k] > 0.0:
            con = p.new_constraint(f"eve-floor-dist s={s}")
            con.lin.append((lay.iz(5, s), -1.0))
            if fixed:
                con.const = slacks.d_ut0[k] ** 2
            else:
                con.quad.append((lay.ix(s), lay.ix(s), 1.0))
                con.quad.append((lay.iy(s), lay.iy(s), 1.0))
                con.lin.append((lay.ix(s), -2.0 * tx))
                con.lin.append((lay.iy(s), -2.0 * ty))
                con.const = tx * tx + ty * ty + z_u2
            p.add_affine_le([(lay.iz(5, s), -1.0)], -(0.5 * z_u2),
                            f"z5 floor s={s}")

        # sensing ball around the target (lagged radius)
        r = slacks.r_ball[k]
        if math.isfinite(r):
            r2_planar = r * r - z_u2
            if fixed:
                if slacks.d_ut0[k] > r * (1.0 + 1e-9):
                    raise TrajInfeasibleError(
                        s, f"slot {s}: pinned waypoint at distance "
                           f"{slacks.d_ut0[k]:.2f} m violates the sensing ball "
                           f"radius {r:.2f} m")
            elif r2_planar <= 0.0:
                raise TrajInfeasibleError(
                    s, f"slot {s}: sensing ball radius {r:.2f} m is below the "
                       f"flight altitude; no feasible waypoint")
            else:
                p.add_ball([lay.ix(s), lay.iy(s)], cfg.ut_pos.xy,
                           math.sqrt(r2_planar), f"sense-ball s={s}")

        # trust region keeps the frozen-gain approximation honest
        if not fixed:
            p.add_ball([lay.ix(s), lay.iy(s)], traj_prev.waypoints[k], trust,
                       f"trust s={s}")

        # slack floors (pow/log domain guards; never active at an optimum)
        z3_floor = ZETA_FLOOR_FRACTION * (slacks.d_ud0[k] + trust) ** (-kappa / 2.0)
        z4_floor = ZETA_FLOOR_FRACTION * (slacks.d_ut0[k] + trust) ** (-kappa / 2.0)
        p.add_affine_le([(lay.iz(1, s), -1.0)], 0.0, f"z1 floor s={s}")
        p.add_affine_le([(lay.iz(2, s), -1.0)], 0.0, f"z2 floor s={s}")
        p.add_affine_le([(lay.iz(3, s), -1.0)], -z3_floor, f"z3 floor s={s}")
        p.add_affine_le([(lay.iz(4, s), -1.0)], -z4_floor, f"z4 floor s={s}")

    # mobility: consecutive steps and the terminal hop
    for s in range(1, S):
        a, b = s, s + 1
        con = p.new_constraint(f"step {a}->{b}")
        if a == 1:
            sx, sy = traj_prev.start
            con.quad.append((lay.ix(b), lay.ix(b), 1.0))
            con.quad.append((lay.iy(b), lay.iy(b), 1.0))
            con.lin.append((lay.ix(b), -2.0 * sx))
            con.lin.append((lay.iy(b), -2.0 * sy))
            con.const = sx * sx + sy * sy - D * D
        else:
            for (ia, ib) in ((lay.ix(a), lay.ix(b)), (lay.iy(a), lay.iy(b))):
                con.quad.append((ia, ia, 1.0))
                con.quad.append((ib, ib, 1.0))
                con.quad.append((ia, ib, -2.0))
            con.const = -D * D
    ex, ey = traj_prev.end
    con = p.new_constraint("terminal hop")
    con.quad.append((lay.ix(S), lay.ix(S), 1.0))
    con.quad.append((lay.iy(S), lay.iy(S), 1.0))
    con.lin.append((lay.ix(S), -2.0 * ex))
    con.lin.append((lay.iy(S), -2.0 * ey))
    con.const = ex * ex + ey * ey - D * D

    return p, lay, start, scales


def _project_mobility(wp: np.ndarray, start: np.ndarray, end: np.ndarray,
                      D: float) -> np.ndarray:
    """Clamp solver round-off so every step and the terminal hop obey D."""
    out = wp.copy()
    out[0] = start
    shrink = 1.0 - 1e-12
    for _ in range(16):
        ok = True
        for s in range(1, out.shape[0]):
            step = out[s] - out[s - 1]
            dist = float(np.linalg.norm(step))
            if dist > D:
                out[s] = out[s - 1] + step * (D * shrink / dist)
                ok = False
        gap = out[-1] - end
        dist = float(np.linalg.norm(gap))
        if dist > D:
            out[-1] = end + gap * (D * shrink / dist)
            ok = False
        if ok:
            break
    return out


def solve_traj(traj_prev: Trajectory, slacks: TrajSlacks, cfg: ScenarioConfig,
               opts: cx.SolveOptions | None = None) -> Trajectory:
    """Solve the joint waypoint subproblem and return the new trajectory."""
    p, lay, start, scales = build_traj_subproblem(traj_prev, slacks, cfg)
    if opts is None:
        # the joint problem converges to solver noise well before the KKT
        # certificate does; a modest budget returns the same waypoint set
        opts = cx.SolveOptions(scales=scales, max_al=15, max_inner=300)
    else:
        opts = cx.SolveOptions(feas_tol=opts.feas_tol, opt_tol=opts.opt_tol,
                               max_al=opts.max_al, max_inner=opts.max_inner,
                               rho0=opts.rho0, scales=scales, backend=opts.backend)
    rep = cx.solve(p, start, opts)
    if rep.status == "infeasible":
        raise TrajInfeasibleError(0, "trajectory subproblem reported infeasible")
    wp = np.empty_like(traj_prev.waypoints)
    wp[0] = traj_prev.waypoints[0]
    for s in range(2, traj_prev.n_slots + 1):
        wp[s - 1, 0] = rep.x[lay.ix(s)]
        wp[s - 1, 1] = rep.x[lay.iy(s)]
    wp = _project_mobility(wp, traj_prev.start, traj_prev.end, cfg.max_step)
    return Trajectory(wp, traj_prev.altitude, traj_prev.start.copy(),
                      traj_prev.end.copy())


# ---------------------------------------------------------------------------
# frozen-gain diagnostics (used by tests and the acceptance suite)
# ---------------------------------------------------------------------------

def frozen_objective(traj: Trajectory, slacks: TrajSlacks,
                     cfg: ScenarioConfig) -> float:
    """Frozen-gain rate difference the surrogate minorizes.

    The eavesdropper term carries both the frozen beam leakage and the
    forced-leakage floor implied by the echo constraint at that distance.
    """
    S = traj.n_slots
    kappa = cfg.pathloss_exp_comm
    total = 0.0
    for s in range(1, S + 1):
        d_ud, d_ut = distance_factors(traj, cfg, s)
        snr_d = slacks.c1[s - 1] * d_ud ** (-kappa)
        snr_e = slacks.c2[s - 1] * d_ut ** (-kappa) \
            + slacks.floor_coef[s - 1] * d_ut ** kappa
        total += math.log2(1.0 + snr_d) - math.log2(1.0 + snr_e)
    return total / S


def surrogate_objective_value(traj_prev: Trajectory, slacks: TrajSlacks,
                              cfg: ScenarioConfig, x: np.ndarray) -> float:
    """Maximize-sense surrogate value at a solver point."""
    p, _, _, _ = build_traj_subproblem(traj_prev, slacks, cfg)
    return -p.objective_value(x)
