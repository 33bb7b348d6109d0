"""Performance metrics: device/eavesdropper SNR, secrecy rate, echo SNR.

Each receiver uses its own noise floor. Reported secrecy rates are clamped
at zero per slot; the optimizers work on the unclamped difference internally.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import ChannelSlot, MissionChannels
from .scenario import ScenarioConfig

UNIT_NORM_TOL = 1e-9


def snr_device(slot: ChannelSlot, w: np.ndarray, sigma2: float) -> float:
    """|l_ud * h_ud^H w|^2 / sigma2."""
    return slot.l_ud ** 2 * abs(np.vdot(slot.h_ud, w)) ** 2 / sigma2


def snr_eve(slot: ChannelSlot, w: np.ndarray, sigma2: float) -> float:
    """|l_ut * h_ut^H w|^2 / sigma2."""
    return slot.l_ut ** 2 * abs(np.vdot(slot.h_ut, w)) ** 2 / sigma2


def snr_echo(slot: ChannelSlot, w: np.ndarray, u: np.ndarray, sigma2: float) -> float:
    """Round-trip echo SNR after receive combining with unit-norm u.

    |u^H (l_ut^2 g_rt h_ut^H) w|^2 / (u^H u * sigma2).
    """
    uu = float(np.real(np.vdot(u, u)))
    if abs(math.sqrt(uu) - 1.0) > UNIT_NORM_TOL:
        raise ValueError(f"receive combiner must be unit-norm, got ||u|| = {math.sqrt(uu)}")
    amp = slot.l_ut ** 2 * np.vdot(u, slot.g_rt) * np.vdot(slot.h_ut, w)
    return abs(amp) ** 2 / (uu * sigma2)


def rate(snr: float) -> float:
    return math.log2(1.0 + snr)


@dataclass(frozen=True)
class SlotMetrics:
    snr_ud: float
    snr_ut: float
    snr_echo: float
    rate_ud: float
    rate_ut: float
    secrecy: float  # max(0, rate_ud - rate_ut)


def secrecy_rate(sm: SlotMetrics) -> float:
    """[log2(1+snr_ud) - log2(1+snr_ut)]^+ in bits/s/Hz."""
    return max(0.0, sm.rate_ud - sm.rate_ut)


def slot_metrics(slot: ChannelSlot, w: np.ndarray, u: np.ndarray,
                 cfg: ScenarioConfig) -> SlotMetrics:
    s_ud = snr_device(slot, w, cfg.noise_dev_w)
    s_ut = snr_eve(slot, w, cfg.noise_eve_w)
    s_echo = snr_echo(slot, w, u, cfg.noise_echo_w)
    r_ud = rate(s_ud)
    r_ut = rate(s_ut)
    return SlotMetrics(s_ud, s_ut, s_echo, r_ud, r_ut, max(0.0, r_ud - r_ut))


def average_secrecy(per_slot: list) -> float:
    """Arithmetic mean of per-slot secrecy rates."""
    if len(per_slot) == 0:
        raise ValueError("no slots: average secrecy undefined")
    return float(np.mean(per_slot))


@dataclass(frozen=True)
class MissionMetrics:
    per_slot: tuple   # tuple[SlotMetrics, ...]
    r_sum: float      # average secrecy rate over the mission


def mission_metrics(channels: MissionChannels, W: np.ndarray, U: np.ndarray,
                    cfg: ScenarioConfig) -> MissionMetrics:
    """Metrics of a full design; W is (S, n_tx), U is (S, n_rx)."""
    sms = tuple(slot_metrics(channels[s], W[s - 1], U[s - 1], cfg)
                for s in range(1, len(channels) + 1))
    return MissionMetrics(sms, average_secrecy([sm.secrecy for sm in sms]))


def r_sum(channels: MissionChannels, W: np.ndarray, U: np.ndarray,
          cfg: ScenarioConfig) -> float:
    return mission_metrics(channels, W, U, cfg).r_sum
