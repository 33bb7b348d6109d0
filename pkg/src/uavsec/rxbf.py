"""Per-iteration receive combining block.

The receive combiner only appears in the echo SNR, so the block maximizes the
echo margin over the unit sphere. The echo quadratic form is rank one and
positive semidefinite; each step maximizes its tangent minorant (linear on
the sphere) over the unit ball intersected with a half-space cap around the
current iterate (the convex split of the sphere constraint), and the true
quadratic never decreases across steps. For a rank-one form the iteration
lands on the matched filter, the global optimum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import cvxcore as cx
from .channel import ChannelSlot

MAX_MM_ITERS = 100
SNR_DELTA_TOL = 1e-8
CAP_SLACK = 0.5          # per-step half-space: Re(u0^H u) >= 1 - CAP_SLACK
HERMITIAN_TOL = 1e-12
PSD_TOL = -1e-10


class EchoInfeasibleError(RuntimeError):
    """Echo-SNR requirement unreachable even with the matched-filter combiner."""

    def __init__(self, slot: int, msg: str):
        super().__init__(msg)
        self.slot = slot


@dataclass(frozen=True)
class EchoQuadratic:
    """Echo quadratic form u -> u^H omega u with its largest eigenvalue."""

    omega: np.ndarray      # (n_rx, n_rx) Hermitian PSD, rank <= 1 in production
    lambda_max: float
    factor: np.ndarray     # rank-one factor a with omega = a a^H

    def value(self, u: np.ndarray) -> float:
        return float(np.real(np.vdot(u, self.omega @ u)))


def build_omega(slot: ChannelSlot, w: np.ndarray) -> EchoQuadratic:
    """omega = a a^H with a = l_ut^2 (h_ut^H w) g_rt; lambda_max = ||a||^2."""
    a = slot.l_ut ** 2 * np.vdot(slot.h_ut, w) * slot.g_rt
    omega = np.outer(a, a.conj())
    return EchoQuadratic(omega=omega, lambda_max=float(np.real(np.vdot(a, a))),
                         factor=a)


@dataclass(frozen=True)
class MmSurrogate:
    """Eigenvalue-shifted tangent minorant of u -> u^H omega u at u0.

    s(u) = lam ||u||^2 + 2 Re(u^H (omega - lam I) u0) + lam ||u0||^2 - u0^H omega u0,
    with lam the smallest eigenvalue: (u-u0)^H (omega - lam I) (u-u0) >= 0
    gives s(u) <= u^H omega u everywhere, with equality at u0. For the
    rank-one echo form lam = 0 and s is linear in u (up to a constant).
    """

    lam: float
    vec: np.ndarray    # (omega - lam I) @ u0
    const: float

    def __call__(self, u: np.ndarray) -> float:
        u = np.asarray(u, dtype=complex)
        return (self.lam * float(np.real(np.vdot(u, u)))
                + 2.0 * float(np.real(np.vdot(u, self.vec))) + self.const)


def mm_surrogate(q: EchoQuadratic, u0: np.ndarray) -> MmSurrogate:
    """Tight global minorant of the echo quadratic, expanded at unit-norm u0."""
    omega = q.omega
    if float(np.abs(omega - omega.conj().T).max()) > HERMITIAN_TOL * max(
            1.0, float(np.abs(omega).max())):
        raise ValueError("echo quadratic is not Hermitian")
    lam_min = float(np.linalg.eigvalsh(omega)[0])
    if lam_min < PSD_TOL * max(1.0, q.lambda_max):
        raise ValueError(f"echo quadratic is not PSD (lambda_min = {lam_min:.3e})")
    lam = max(0.0, lam_min)
    u0 = np.asarray(u0, dtype=complex)
    v = omega @ u0 - lam * u0
    const = lam * float(np.real(np.vdot(u0, u0))) - float(np.real(np.vdot(u0, omega @ u0)))
    return MmSurrogate(lam=lam, vec=v, const=const)


def _step(q: EchoQuadratic, u0: np.ndarray, sense_floor: float,
          opts: cx.SolveOptions) -> np.ndarray:
    """One MM step: maximize the linear minorant over ball + cap (+ floor).

    Uses the zero-shift tangent s0(u) = 2 Re(u^H omega u0) - u0^H omega u0,
    a valid minorant for any PSD form and identical to mm_surrogate for the
    rank-one echo quadratic; keeping it linear makes each step convex.
    """
    vec = q.omega @ np.asarray(u0, dtype=complex)
    s_const = -float(np.real(np.vdot(u0, vec)))
    n = 2 * u0.size
    p = cx.ConvexSubproblem(n)
    vr, _ = cx.inner_product_coeffs(vec)   # Re(vec^H u) = vr . x
    for i, c in enumerate(vr):
        if c != 0.0:
            p.add_obj_lin(i, -2.0 * c)           # maximize 2 Re(u^H vec)
    p.obj_const = -s_const
    p.add_ball(range(n), np.zeros(n), 1.0, "unit ball")
    ur0, _ = cx.inner_product_coeffs(u0)
    p.add_affine_le([(i, -c) for i, c in enumerate(ur0) if c != 0.0],
                    -(1.0 - CAP_SLACK), "norm split cap")
    s0_at_u0 = 2.0 * float(np.real(np.vdot(u0, vec))) + s_const
    if sense_floor > 0.0 and s0_at_u0 >= sense_floor:
        p.add_affine_le([(i, -2.0 * c) for i, c in enumerate(vr) if c != 0.0],
                        -(sense_floor - s_const), "echo floor")
    rep = cx.solve(p, cx.stack_complex(u0), opts)
    return cx.unstack_complex(rep.x)


def fix_phase(u: np.ndarray) -> np.ndarray:
    """Rotate so the largest-magnitude entry is real nonnegative."""
    k = int(np.argmax(np.abs(u)))
    if abs(u[k]) == 0.0:
        return u
    return u * (u[k].conj() / abs(u[k]))


def solve_rx(slot: ChannelSlot, w: np.ndarray, u_start: np.ndarray,
             gamma_lin: float, sigma2: float, slot_index: int = 0,
             opts: cx.SolveOptions | None = None) -> np.ndarray:
    """Maximize the echo margin; returns a unit-norm combiner.

    Raises EchoInfeasibleError when even the matched filter cannot reach the
    echo-SNR threshold gamma_lin.
    """
    u = np.asarray(u_start, dtype=complex)
    if abs(np.linalg.norm(u) - 1.0) > 1e-9:
        raise ValueError(f"u_start must be unit-norm, got ||u|| = {np.linalg.norm(u)}")
    q = build_omega(slot, w)
    if gamma_lin > 0.0 and q.lambda_max < gamma_lin * sigma2 * (1.0 - 1e-6):
        raise EchoInfeasibleError(
            slot_index,
            f"slot {slot_index}: matched-filter echo SNR "
            f"{q.lambda_max / sigma2:.3e} is below the threshold {gamma_lin:.3e}")
    if q.lambda_max <= 0.0:
        return fix_phase(u)
    if opts is None:
        opts = cx.SolveOptions(scales=np.full(2 * u.size, 1.0))
    sense_floor = gamma_lin * sigma2

    snr_prev = q.value(u) / sigma2
    for _ in range(MAX_MM_ITERS):
        if float(np.linalg.norm(q.omega @ u)) <= 1e-300:
            break  # orthogonal start: minorant is flat, keep the iterate
        u_new = _step(q, u, sense_floor, opts)
        nrm = float(np.linalg.norm(u_new))
        if nrm <= 0.0:
            break
        u_new = u_new / nrm
        snr_new = q.value(u_new) / sigma2
        if snr_new < snr_prev:
            break  # numerical stall; the minorant guarantees non-decrease
        u = u_new
        if abs(snr_new - snr_prev) < SNR_DELTA_TOL:
            snr_prev = snr_new
            break
        snr_prev = snr_new
    u = u / float(np.linalg.norm(u))
    return fix_phase(u)
