"""Per-iteration transmit beamforming block.

For fixed trajectory and receive combiners, maximizes the slack secrecy
surrogate: a shared minimum device-rate slack, minus the tangent upper bound
of each slot's eavesdropper rate, subject to the linearized device-rate,
linearized echo-SNR and per-slot power constraints. The rate slack couples
the slots only through a scalar, so it is handled by an outer golden-section
scan (the slack objective is unimodal in it) around per-slot convex solves.

The raw slack solution maximizes the worst slot's rate; a per-slot
keep-the-better merge against the expansion point then guarantees the true
average secrecy rate never decreases across a call.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import cvxcore as cx
from .channel import ChannelSlot, MissionChannels
from .scenario import ScenarioConfig

GAMMA_BAR_MAX = 30.0   # search window for the shared rate slack [bits/s/Hz]
N_GOLDEN = 26          # golden-section evaluations across the window
EXPANSION_FEAS_TOL = 1e-6
RIDGE = 1e-9           # min-power tie-break; removes the null-space degeneracy


class SensingInfeasibleError(RuntimeError):
    """Echo-SNR requirement unreachable even with the matched-filter beam."""

    def __init__(self, slot: int, msg: str):
        super().__init__(msg)
        self.slot = slot


@dataclass(frozen=True)
class TxSubproblemInput:
    channels: MissionChannels
    w0: np.ndarray          # (S, n_tx) expansion beamformers, power-feasible
    u: np.ndarray           # (S, n_rx) unit-norm receive combiners
    power_w: float
    sense_snr_min: float    # linear echo-SNR threshold (0 disables sensing)
    noise_dev_w: float
    noise_eve_w: float
    noise_echo_w: float

    @property
    def n_slots(self) -> int:
        return len(self.channels)


def make_tx_input(channels: MissionChannels, w0: np.ndarray, u: np.ndarray,
                  cfg: ScenarioConfig) -> TxSubproblemInput:
    return TxSubproblemInput(channels, w0, u, cfg.tx_power_w, cfg.sense_snr_min,
                             cfg.noise_dev_w, cfg.noise_eve_w, cfg.noise_echo_w)


@dataclass(frozen=True)
class TxSolution:
    w: np.ndarray               # (S, n_tx) merged beamformers
    gamma_bar: float            # shared rate slack reached by the subproblem
    slot_surrogate: np.ndarray  # per-slot eavesdropper surrogate at the raw solution
    surrogate_value: float      # raw subproblem objective (pre-merge)
    w_raw: np.ndarray           # (S, n_tx) raw subproblem solution


# ---------------------------------------------------------------------------
# per-slot quantities
# ---------------------------------------------------------------------------

def beam_gain_requirement(slot: ChannelSlot, u: np.ndarray, tau: float,
                          sigma_echo: float) -> float:
    """Required |h_ut^H w|^2 so the echo SNR reaches tau, for this combiner.

    Infinite when the combiner is orthogonal to the echo steering vector.
    """
    if tau <= 0.0:
        return 0.0
    phi2 = abs(np.vdot(u, slot.g_rt)) ** 2
    if phi2 <= 0.0:
        return math.inf
    return tau * sigma_echo / (slot.l_ut ** 4 * phi2)


def echo_snr_value(slot: ChannelSlot, w: np.ndarray, u: np.ndarray,
                   sigma_echo: float) -> float:
    phi2 = abs(np.vdot(u, slot.g_rt)) ** 2
    return slot.l_ut ** 4 * phi2 * abs(np.vdot(slot.h_ut, w)) ** 2 / sigma_echo


def slot_rates(slot: ChannelSlot, w: np.ndarray, noise_dev_w: float,
               noise_eve_w: float):
    """(device rate, eavesdropper rate), unclamped."""
    snr_d = slot.l_ud ** 2 * abs(np.vdot(slot.h_ud, w)) ** 2 / noise_dev_w
    snr_e = slot.l_ut ** 2 * abs(np.vdot(slot.h_ut, w)) ** 2 / noise_eve_w
    return math.log2(1.0 + snr_d), math.log2(1.0 + snr_e)


# ---------------------------------------------------------------------------
# sensing feasibility repair
# ---------------------------------------------------------------------------

def repair_sensing_slot(slot: ChannelSlot, w: np.ndarray, u: np.ndarray,
                        tau: float, sigma_echo: float, power_w: float,
                        slot_index: int = 0) -> np.ndarray:
    """Scale w toward the sensing matched filter until the echo SNR meets tau.

    Moves along the segment from w to the phase-aligned matched-filter beam at
    full power; the segment's beam gain toward the target is monotone, so the
    smallest sufficient mix has a closed form.
    """
    need = beam_gain_requirement(slot, u, tau, sigma_echo)
    if need == 0.0:
        return w
    h = slot.h_ut
    hnorm = float(np.linalg.norm(h))
    cap = power_w * hnorm * hnorm  # matched-filter beam gain at full power
    if not math.isfinite(need) or need > cap * (1.0 + 1e-12):
        raise SensingInfeasibleError(
            slot_index,
            f"slot {slot_index}: echo-SNR constraint needs beam gain {need:.3e} "
            f"toward the target but the full-power matched filter reaches {cap:.3e}")
    c = complex(np.vdot(h, w))
    have = abs(c) ** 2
    if have >= need:
        return w
    phase = c / abs(c) if abs(c) > 0.0 else 1.0
    w_mf = math.sqrt(power_w) * (h / hnorm) * phase
    amp_mf = math.sqrt(power_w) * hnorm
    # amplitude along the segment: (1-t)|c| + t*amp_mf; aim a hair above the
    # threshold so downstream feasibility checks are not rounding-sensitive
    amp_req = min(math.sqrt(need) * (1.0 + 1e-7), amp_mf)
    t = (amp_req - abs(c)) / (amp_mf - abs(c))
    t = min(1.0, max(0.0, t))
    return (1.0 - t) * w + t * w_mf


def repair_sensing(inp: TxSubproblemInput) -> np.ndarray:
    """Repaired copy of w0 meeting the echo constraint in every slot."""
    out = inp.w0.copy()
    for s in range(1, inp.n_slots + 1):
        out[s - 1] = repair_sensing_slot(inp.channels[s], out[s - 1], inp.u[s - 1],
                                         inp.sense_snr_min, inp.noise_echo_w,
                                         inp.power_w, s)
    return out


# ---------------------------------------------------------------------------
# subproblem construction
# ---------------------------------------------------------------------------

def _affine_ge(p: cx.ConvexSubproblem, form: cx.AffineComplexForm, rhs: float,
               label: str):
    """Encode form(w) >= rhs over the stacked-real beamformer variables."""
    ur, ui = cx.inner_product_coeffs(form.a)
    coef = 2.0 * (form.c.real * ur + form.c.imag * ui)
    p.add_affine_le([(i, -c) for i, c in enumerate(coef) if c != 0.0],
                    -(abs(form.c) ** 2 + rhs), label)


def build_tx_subproblem(inp: TxSubproblemInput, slot: int,
                        gamma_bar: float = 0.0) -> cx.ConvexSubproblem:
    """Inner convex problem of one slot for a fixed shared rate slack.

    Decision variables are the stacked real/imaginary parts of w. The
    objective carries the single w-dependent piece of the eavesdropper
    tangent bound, the beam gain toward the target.
    """
    ch = inp.channels[slot]
    w0 = inp.w0[slot - 1]
    need = beam_gain_requirement(ch, inp.u[slot - 1], inp.sense_snr_min,
                                 inp.noise_echo_w)
    if need > 0.0:
        have = abs(np.vdot(ch.h_ut, w0)) ** 2
        if have < need * (1.0 - EXPANSION_FEAS_TOL) - EXPANSION_FEAS_TOL:
            raise ValueError(
                f"slot {slot}: expansion beamformer violates the echo constraint "
                f"(beam gain {have:.3e} < required {need:.3e}); repair feasibility "
                f"first (repair_sensing)")

    n = 2 * inp.w0.shape[1]
    p = cx.ConvexSubproblem(n)
    ur, ui = cx.inner_product_coeffs(ch.h_ut)
    p.add_obj_rank_one(ur)
    p.add_obj_rank_one(ui)
    # the leakage form is rank two; a vanishing power penalty makes the
    # minimizer unique so the solver does not wander the null space
    ridge = RIDGE * float(np.real(np.vdot(ch.h_ut, ch.h_ut)))
    for i in range(n):
        p.add_obj_quad(i, i, ridge)

    r1 = (2.0 ** gamma_bar - 1.0) * inp.noise_dev_w / ch.l_ud ** 2
    _affine_ge(p, cx.taylor_lower_quadratic(ch.h_ud, w0), r1, "device rate")
    if need > 0.0:
        # small headroom keeps the true echo SNR above threshold at solver tolerance
        _affine_ge(p, cx.taylor_lower_quadratic(ch.h_ut, w0),
                   need * (1.0 + 1e-7), "echo snr")
    p.add_ball(range(n), np.zeros(n), math.sqrt(inp.power_w), "tx power")
    return p


def _slot_gamma_cap(inp: TxSubproblemInput, slot: int,
                    opts: cx.SolveOptions) -> float:
    """Largest rate slack this slot can honor under sensing + power."""
    ch = inp.channels[slot]
    w0 = inp.w0[slot - 1]
    n = 2 * inp.w0.shape[1]
    p = cx.ConvexSubproblem(n)
    form = cx.taylor_lower_quadratic(ch.h_ud, w0)
    ur, ui = cx.inner_product_coeffs(form.a)
    coef = 2.0 * (form.c.real * ur + form.c.imag * ui)
    for i, c in enumerate(coef):
        if c != 0.0:
            p.add_obj_lin(i, -c)  # maximize the linearized device gain
    p.obj_const = abs(form.c) ** 2
    need = beam_gain_requirement(ch, inp.u[slot - 1], inp.sense_snr_min,
                                 inp.noise_echo_w)
    if need > 0.0:
        _affine_ge(p, cx.taylor_lower_quadratic(ch.h_ut, w0),
                   need * (1.0 + 1e-7), "echo snr")
    p.add_ball(range(n), np.zeros(n), math.sqrt(inp.power_w), "tx power")
    rep = cx.solve(p, cx.stack_complex(w0), opts)
    m = -rep.objective  # maximized linear lower bound on |h_ud^H w|^2
    if m <= 0.0:
        return 0.0
    return math.log2(1.0 + ch.l_ud ** 2 * m / inp.noise_dev_w)


def _eve_tangents(inp: TxSubproblemInput):
    """Per-slot tangent data of log2(1 + SNR_ut) at the expansion point."""
    consts = np.empty(inp.n_slots)
    slopes = np.empty(inp.n_slots)
    for s in range(1, inp.n_slots + 1):
        ch = inp.channels[s]
        v0 = ch.l_ut ** 2 * abs(np.vdot(ch.h_ut, inp.w0[s - 1])) ** 2 / inp.noise_eve_w
        t = cx.taylor_upper_logistic(v0)
        slopes[s - 1] = t.slope * ch.l_ut ** 2 / inp.noise_eve_w  # per unit beam gain
        consts[s - 1] = t.const
    return consts, slopes


def solve_tx(inp: TxSubproblemInput,
             opts: cx.SolveOptions | None = None) -> TxSolution:
    """Solve the beamforming subproblem for all slots.

    Raises SensingInfeasibleError if any expansion point cannot be made
    feasible; callers should run repair_sensing first.
    """
    if opts is None:
        # the per-slot programs are tiny; a modest budget suffices
        opts = cx.SolveOptions(scales=np.full(2 * inp.w0.shape[1],
                                              math.sqrt(inp.power_w)),
                               max_al=12, max_inner=150)
    S = inp.n_slots
    problems = []
    for s in range(1, S + 1):
        problems.append(build_tx_subproblem(inp, s, 0.0))
    consts, slopes = _eve_tangents(inp)

    cap = GAMMA_BAR_MAX
    for s in range(1, S + 1):
        cap = min(cap, _slot_gamma_cap(inp, s, opts))
    cap = max(0.0, cap * (1.0 - 1e-9))

    warm = [cx.stack_complex(inp.w0[s - 1]) for s in range(S)]
    cache: dict = {}

    def evaluate(gamma_bar: float):
        if gamma_bar in cache:
            return cache[gamma_bar]
        total_eve = 0.0
        ws = np.empty_like(inp.w0)
        for s in range(1, S + 1):
            ch = inp.channels[s]
            p = problems[s - 1]
            # device constraint is -coef.x + (|c|^2 + r1) <= 0; refresh the const
            r1 = (2.0 ** gamma_bar - 1.0) * inp.noise_dev_w / ch.l_ud ** 2
            form_c2 = abs(np.vdot(ch.h_ud, inp.w0[s - 1])) ** 2
            p.set_constraint_const(0, form_c2 + r1)
            rep = cx.solve(p, warm[s - 1], opts)
            warm[s - 1] = rep.x
            w = cx.unstack_complex(rep.x)
            ws[s - 1] = w
            total_eve += consts[s - 1] + slopes[s - 1] * abs(np.vdot(ch.h_ut, w)) ** 2
        value = gamma_bar - total_eve / S
        cache[gamma_bar] = (value, ws)
        return cache[gamma_bar]

    # golden-section scan of the unimodal slack objective
    lo, hi = 0.0, cap
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c1 = b - invphi * (b - a)
    c2 = a + invphi * (b - a)
    f1 = evaluate(c1)[0]
    f2 = evaluate(c2)[0]
    for _ in range(N_GOLDEN):
        if f1 >= f2:
            b, c2, f2 = c2, c1, f1
            c1 = b - invphi * (b - a)
            f1 = evaluate(c1)[0]
        else:
            a, c1, f1 = c1, c2, f2
            c2 = a + invphi * (b - a)
            f2 = evaluate(c2)[0]
    candidates = [lo, hi, c1, c2]
    best_gamma = max(candidates, key=lambda g: evaluate(g)[0])
    best_value, w_raw = evaluate(best_gamma)

    # keep-the-better merge per slot: the true average secrecy never decreases
    w_out = np.empty_like(w_raw)
    eve_surr = np.empty(S)
    for s in range(1, S + 1):
        ch = inp.channels[s]
        r_new = _unclamped_secrecy(ch, w_raw[s - 1], inp)
        r_old = _unclamped_secrecy(ch, inp.w0[s - 1], inp)
        w_out[s - 1] = w_raw[s - 1] if r_new >= r_old else inp.w0[s - 1]
        eve_surr[s - 1] = consts[s - 1] + slopes[s - 1] * abs(
            np.vdot(ch.h_ut, w_raw[s - 1])) ** 2

    # exact power feasibility, then re-assert the echo margin in closed form
    # (solver tolerance on the linearized constraint can sit below threshold)
    pmax = math.sqrt(inp.power_w)
    for row in range(S):
        nrm = float(np.linalg.norm(w_out[row]))
        if nrm > pmax:
            w_out[row] *= pmax / nrm
        nrm = float(np.linalg.norm(w_raw[row]))
        if nrm > pmax:
            w_raw[row] *= pmax / nrm
        w_out[row] = repair_sensing_slot(inp.channels[row + 1], w_out[row],
                                         inp.u[row], inp.sense_snr_min,
                                         inp.noise_echo_w, inp.power_w, row + 1)

    return TxSolution(w=w_out, gamma_bar=best_gamma, slot_surrogate=eve_surr,
                      surrogate_value=best_value, w_raw=w_raw)


def _unclamped_secrecy(ch: ChannelSlot, w: np.ndarray,
                       inp: TxSubproblemInput) -> float:
    r_d, r_e = slot_rates(ch, w, inp.noise_dev_w, inp.noise_eve_w)
    return r_d - r_e


# ---------------------------------------------------------------------------
# surrogate diagnostics (used by the test suite)
# ---------------------------------------------------------------------------

def surrogate_objective(inp: TxSubproblemInput, W: np.ndarray) -> float:
    """Slack surrogate evaluated at W with tangents expanded at inp.w0."""
    consts, slopes = _eve_tangents(inp)
    gamma = math.inf
    total_eve = 0.0
    for s in range(1, inp.n_slots + 1):
        ch = inp.channels[s]
        form = cx.taylor_lower_quadratic(ch.h_ud, inp.w0[s - 1])
        lin = form(W[s - 1])
        gamma = min(gamma, math.log2(1.0 + ch.l_ud ** 2 * max(lin, 0.0)
                                     / inp.noise_dev_w))
        total_eve += consts[s - 1] + slopes[s - 1] * abs(
            np.vdot(ch.h_ut, W[s - 1])) ** 2
    return gamma - total_eve / inp.n_slots


def slack_objective(inp: TxSubproblemInput, W: np.ndarray) -> float:
    """True slack-form objective: worst-slot device rate minus mean eve rate."""
    gamma = math.inf
    total_eve = 0.0
    for s in range(1, inp.n_slots + 1):
        r_d, r_e = slot_rates(inp.channels[s], W[s - 1], inp.noise_dev_w,
                              inp.noise_eve_w)
        gamma = min(gamma, r_d)
        total_eve += r_e
    return gamma - total_eve / inp.n_slots
