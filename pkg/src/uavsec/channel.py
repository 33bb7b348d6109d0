"""Per-slot channel synthesis: path loss, Rician fading, echo steering.

Links are indexed 0 (UAV -> IoT device) and 1 (UAV -> untrusted target).
NLoS fading is drawn once per (seed, slot, link) from an independent
deterministic stream and held fixed for a whole run; only path losses and
line-of-sight steering angles follow the trajectory. The monostatic echo
channel is modeled rank-one, ``l_ut^2 * g_rt h_ut^H``, with ``g_rt`` the
pure-LoS receive steering vector toward the target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .scenario import Position3, ScenarioConfig

LINK_DEVICE = 0
LINK_TARGET = 1


def path_loss_amplitude(p_uav: Position3, p_ground: Position3, rho: float,
                        exponent: float) -> float:
    """Amplitude L with L^2 = rho * d^(-exponent), d the 3-D distance."""
    dx = p_uav.x - p_ground.x
    dy = p_uav.y - p_ground.y
    d2 = dx * dx + dy * dy + p_uav.z * p_uav.z
    if d2 <= 0.0:
        raise ValueError("co-located nodes: path loss undefined at zero distance")
    return math.sqrt(rho * d2 ** (-exponent / 2.0))


def ula_steering(angle: float, n: int) -> np.ndarray:
    """Half-wavelength ULA steering vector, entry k = exp(j*pi*k*sin(angle))."""
    if n < 1:
        raise ValueError(f"need at least one antenna, got {n}")
    k = np.arange(n)
    return np.exp(1j * np.pi * k * math.sin(angle))


def los_angle(p_uav: Position3, p_ground: Position3) -> float:
    """Angle whose sine is the direction cosine along the array (x) axis."""
    dx = p_ground.x - p_uav.x
    dy = p_ground.y - p_uav.y
    d = math.sqrt(dx * dx + dy * dy + p_uav.z * p_uav.z)
    return math.asin(dx / d)


@dataclass(frozen=True)
class FadingDraws:
    """Unit-variance circularly-symmetric NLoS samples, one per slot per link.

    Entries are deterministic functions of (rng_seed, slot, link): each matrix
    row comes from its own SeedSequence stream, so slots may be realized in any
    order (or in parallel) with bit-identical results.
    """

    nlos_dev: np.ndarray   # (S, n_tx) complex
    nlos_tgt: np.ndarray   # (S, n_tx) complex

    @classmethod
    def generate(cls, cfg: ScenarioConfig) -> "FadingDraws":
        dev = np.empty((cfg.slots, cfg.n_tx), dtype=complex)
        tgt = np.empty((cfg.slots, cfg.n_tx), dtype=complex)
        for slot in range(1, cfg.slots + 1):
            dev[slot - 1] = _draw(cfg.rng_seed, slot, LINK_DEVICE, cfg.n_tx)
            tgt[slot - 1] = _draw(cfg.rng_seed, slot, LINK_TARGET, cfg.n_tx)
        dev.setflags(write=False)
        tgt.setflags(write=False)
        return cls(dev, tgt)

    def nlos(self, slot: int, link: int) -> np.ndarray:
        src = self.nlos_dev if link == LINK_DEVICE else self.nlos_tgt
        return src[slot - 1]


def _draw(seed: int, slot: int, link: int, n: int) -> np.ndarray:
    rng = np.random.default_rng([seed, slot, link])
    re = rng.standard_normal(n)
    im = rng.standard_normal(n)
    return (re + 1j * im) / math.sqrt(2.0)


@dataclass(frozen=True)
class ChannelSlot:
    """Channel state of one slot at one UAV position."""

    h_ud: np.ndarray    # (n_tx,) complex, UAV -> device
    h_ut: np.ndarray    # (n_tx,) complex, UAV -> target/eavesdropper
    g_rt: np.ndarray    # (n_rx,) complex, receive-side echo steering
    l_ud: float         # amplitude path loss, device link
    l_ut: float         # amplitude path loss, target link

    def __post_init__(self):
        if not (self.l_ud > 0.0 and math.isfinite(self.l_ud)):
            raise ValueError(f"l_ud = {self.l_ud} must be positive and finite")
        if not (self.l_ut > 0.0 and math.isfinite(self.l_ut)):
            raise ValueError(f"l_ut = {self.l_ut} must be positive and finite")


def rician_mix(beta: float, los: np.ndarray, nlos: np.ndarray) -> np.ndarray:
    return math.sqrt(beta / (1.0 + beta)) * los + math.sqrt(1.0 / (1.0 + beta)) * nlos


def realize_slot(cfg: ScenarioConfig, p_uav: Position3, slot: int,
                 draws: FadingDraws) -> ChannelSlot:
    """Pure function of (config, position, slot, draws)."""
    if not 1 <= slot <= cfg.slots:
        raise ValueError(f"slot {slot} outside 1..{cfg.slots}")
    rho = cfg.pathloss_ref
    kappa = cfg.pathloss_exp_comm

    los_ud = ula_steering(los_angle(p_uav, cfg.iot_pos), cfg.n_tx)
    los_ut = ula_steering(los_angle(p_uav, cfg.ut_pos), cfg.n_tx)
    h_ud = rician_mix(cfg.rician_ud, los_ud, draws.nlos(slot, LINK_DEVICE))
    h_ut = rician_mix(cfg.rician_ut, los_ut, draws.nlos(slot, LINK_TARGET))
    g_rt = ula_steering(los_angle(p_uav, cfg.ut_pos), cfg.n_rx)

    return ChannelSlot(
        h_ud=h_ud,
        h_ut=h_ut,
        g_rt=g_rt,
        l_ud=path_loss_amplitude(p_uav, cfg.iot_pos, rho, kappa),
        l_ut=path_loss_amplitude(p_uav, cfg.ut_pos, rho, kappa),
    )


@dataclass(frozen=True)
class MissionChannels:
    """Stacked per-slot channel state for a whole trajectory."""

    slots: tuple  # tuple[ChannelSlot, ...], index 0 is slot 1

    def __getitem__(self, slot: int) -> ChannelSlot:
        return self.slots[slot - 1]

    def __len__(self) -> int:
        return len(self.slots)


def realize_mission(cfg: ScenarioConfig, waypoints: np.ndarray,
                    altitude: float, draws: FadingDraws) -> MissionChannels:
    """Realize every slot of a trajectory given as an (S, 2) waypoint array."""
    if waypoints.shape != (cfg.slots, 2):
        raise ValueError(f"expected ({cfg.slots}, 2) waypoints, got {waypoints.shape}")
    out = []
    for s in range(1, cfg.slots + 1):
        p = Position3(float(waypoints[s - 1, 0]), float(waypoints[s - 1, 1]), altitude)
        out.append(realize_slot(cfg, p, s, draws))
    return MissionChannels(tuple(out))
