"""Scenario configuration: physical parameters, unit conversions, mission timeline.

Every other module reads from the (immutable) ScenarioConfig produced here.
Config files are flat ``key = value`` text with ``#`` comments; keys are listed
in DEFAULTS below and documented in the README. All dB/dBm entries are converted
to linear scale once at load time and kept alongside the raw dB values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np


class ConfigError(ValueError):
    """Raised for unparseable config files or invariant violations."""


def dbm_to_watts(p_dbm: float) -> float:
    """10^((p-30)/10); 30 dBm -> 1 W."""
    return 10.0 ** ((p_dbm - 30.0) / 10.0)


def watts_to_dbm(p_w: float) -> float:
    if p_w <= 0.0:
        raise ConfigError(f"cannot express non-positive power {p_w} W in dBm")
    return 10.0 * math.log10(p_w) + 30.0


def db_to_linear(x_db: float) -> float:
    """Dimensionless ratio from dB."""
    return 10.0 ** (x_db / 10.0)


@dataclass(frozen=True)
class Position3:
    """A 3-D point in meters; ground nodes sit at z = 0."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        for name in ("x", "y", "z"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ConfigError(f"position component {name} = {v} is not finite")
        if self.z < 0.0:
            raise ConfigError(f"position z = {self.z} must be >= 0")

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)

    @property
    def arr(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)


@dataclass(frozen=True)
class Timeline:
    """1-based slot grid covering the mission horizon."""

    slots: int
    slot_len: float

    @property
    def slot_indices(self) -> np.ndarray:
        return np.arange(1, self.slots + 1)


# Defaults follow the standard desk-scale setup for this scenario family.
# noise_echo_dbm and sense_rate_min have no usable published value; the
# defaults below put the default mission inside the sensing-stressed regime
# while keeping sense rates up to ~15 bits/s/Hz feasible from every mandatory
# waypoint (see README).
DEFAULTS: dict = {
    "n_tx": 16,                 # transmit antennas (ULA)
    "n_rx": 8,                  # sensing receive antennas
    "horizon": 30.0,            # mission duration T [s]
    "slots": 50,                # number of slots S
    "slot_len": 0.6,            # slot length [s]
    "noise_dev_dbm": -80.0,     # IoT device noise power
    "noise_eve_dbm": -100.0,    # eavesdropper (UT) noise power
    "noise_echo_dbm": -190.0,   # effective echo noise floor after radar processing
    "rician_ud_db": 15.0,       # Rician factor, UAV -> device
    "rician_ut_db": 5.0,        # Rician factor, UAV -> UT
    "pathloss_ref_db": -30.0,   # path loss at 1 m reference distance
    "pathloss_exp_comm": 3.1,   # communication path-loss exponent
    "pathloss_exp_sense": 1.5,  # sensing path-loss exponent (trajectory constraint)
    "max_speed": 50.0,          # v_max [m/s]
    "max_step": 30.0,           # per-slot displacement bound D = v_max * slot_len [m]
    "tx_power_dbm": 30.0,       # transmit power budget
    "sense_rate_min": 23.0,     # minimum sensing rate [bits/s/Hz]; echo SNR >= 2^rate - 1
    "conv_tol": 1e-3,           # outer-loop stop tolerance on the average secrecy rate
    "max_outer_iters": 30,
    "rng_seed": 0,
    "traj_trust_factor": 2.0,   # per-iteration waypoint move cap, as a multiple of max_step
    "iot_pos": (10.0, 20.0, 0.0),
    "ut_pos": (30.0, 30.0, 0.0),
    "uav_start": (0.0, 0.0, 15.0),
    "uav_end": (60.0, 30.0, 15.0),
}

_INT_KEYS = {"n_tx", "n_rx", "slots", "max_outer_iters", "rng_seed"}
_POS_KEYS = {"iot_pos", "ut_pos", "uav_start", "uav_end"}


@dataclass(frozen=True)
class ScenarioConfig:
    """All physical and algorithmic parameters of one mission.

    Immutable after construction; safe to share read-only across threads.
    Linear-scale duplicates of every dB field are filled in automatically.
    """

    n_tx: int = DEFAULTS["n_tx"]
    n_rx: int = DEFAULTS["n_rx"]
    horizon: float = DEFAULTS["horizon"]
    slots: int = DEFAULTS["slots"]
    slot_len: float = DEFAULTS["slot_len"]
    noise_dev_dbm: float = DEFAULTS["noise_dev_dbm"]
    noise_eve_dbm: float = DEFAULTS["noise_eve_dbm"]
    noise_echo_dbm: float = DEFAULTS["noise_echo_dbm"]
    rician_ud_db: float = DEFAULTS["rician_ud_db"]
    rician_ut_db: float = DEFAULTS["rician_ut_db"]
    pathloss_ref_db: float = DEFAULTS["pathloss_ref_db"]
    pathloss_exp_comm: float = DEFAULTS["pathloss_exp_comm"]
    pathloss_exp_sense: float = DEFAULTS["pathloss_exp_sense"]
    max_speed: float = DEFAULTS["max_speed"]
    max_step: float = DEFAULTS["max_step"]
    tx_power_dbm: float = DEFAULTS["tx_power_dbm"]
    sense_rate_min: float = DEFAULTS["sense_rate_min"]
    conv_tol: float = DEFAULTS["conv_tol"]
    max_outer_iters: int = DEFAULTS["max_outer_iters"]
    rng_seed: int = DEFAULTS["rng_seed"]
    traj_trust_factor: float = DEFAULTS["traj_trust_factor"]
    iot_pos: Position3 = field(default_factory=lambda: Position3(*DEFAULTS["iot_pos"]))
    ut_pos: Position3 = field(default_factory=lambda: Position3(*DEFAULTS["ut_pos"]))
    uav_start: Position3 = field(default_factory=lambda: Position3(*DEFAULTS["uav_start"]))
    uav_end: Position3 = field(default_factory=lambda: Position3(*DEFAULTS["uav_end"]))

    def __post_init__(self):
        self._validate()

    # ---- linear-scale views -------------------------------------------------

    @property
    def noise_dev_w(self) -> float:
        return dbm_to_watts(self.noise_dev_dbm)

    @property
    def noise_eve_w(self) -> float:
        return dbm_to_watts(self.noise_eve_dbm)

    @property
    def noise_echo_w(self) -> float:
        return dbm_to_watts(self.noise_echo_dbm)

    @property
    def rician_ud(self) -> float:
        return db_to_linear(self.rician_ud_db)

    @property
    def rician_ut(self) -> float:
        return db_to_linear(self.rician_ut_db)

    @property
    def pathloss_ref(self) -> float:
        return db_to_linear(self.pathloss_ref_db)

    @property
    def tx_power_w(self) -> float:
        return dbm_to_watts(self.tx_power_dbm)

    @property
    def sense_snr_min(self) -> float:
        """Linear echo-SNR threshold: 2^rate - 1, so rate 0 disables sensing."""
        return 2.0 ** self.sense_rate_min - 1.0

    @property
    def timeline(self) -> Timeline:
        return Timeline(self.slots, self.slot_len)

    # ---- validation ---------------------------------------------------------

    def _validate(self):
        if self.slots < 2:
            raise ConfigError(f"slots = {self.slots}, need at least 2")
        if self.n_tx < 1 or self.n_rx < 1:
            raise ConfigError(f"antenna counts n_tx={self.n_tx}, n_rx={self.n_rx} must be >= 1")
        for name in ("horizon", "slot_len", "max_speed", "max_step"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ConfigError(f"{name} = {v} must be finite and positive")
        for name in ("noise_dev_dbm", "noise_eve_dbm", "noise_echo_dbm", "rician_ud_db",
                     "rician_ut_db", "pathloss_ref_db", "tx_power_dbm", "sense_rate_min",
                     "pathloss_exp_comm", "pathloss_exp_sense", "conv_tol",
                     "traj_trust_factor"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ConfigError(f"{name} = {v} must be finite")
        t_prod = self.slots * self.slot_len
        if abs(self.horizon - t_prod) > 1e-9 * max(1.0, abs(self.horizon)):
            raise ConfigError(
                f"horizon = {self.horizon} s but slots * slot_len = {t_prod} s; they must match")
        d_prod = self.max_speed * self.slot_len
        if abs(self.max_step - d_prod) > 1e-9 * max(1.0, abs(self.max_step)):
            raise ConfigError(
                f"max_step = {self.max_step} m but max_speed * slot_len = {d_prod} m; they must match")
        if self.iot_pos.z != 0.0 or self.ut_pos.z != 0.0:
            raise ConfigError("ground nodes (iot_pos, ut_pos) must have z = 0")
        if self.uav_start.z <= 0.0 or self.uav_end.z <= 0.0:
            raise ConfigError("UAV altitude must be positive")
        if self.uav_start.z != self.uav_end.z:
            raise ConfigError(
                f"UAV altitude is fixed: start z = {self.uav_start.z} != end z = {self.uav_end.z}")
        # Mission must be reachable: first waypoint is pinned to the start, then
        # slots-1 hops plus the final hop to the terminal point, each <= max_step.
        span = float(np.linalg.norm(self.uav_end.xy - self.uav_start.xy))
        budget = self.slots * self.max_step
        if span > budget:
            raise ConfigError(
                f"start-to-end distance {span:.3f} m exceeds reachable budget "
                f"slots * max_step = {budget:.3f} m")


def default_scenario() -> ScenarioConfig:
    """The default desk-scale mission (all DEFAULTS applied)."""
    return ScenarioConfig()


def _parse_value(key: str, raw: str):
    raw = raw.strip()
    if key in _POS_KEYS:
        parts = [p for p in raw.replace("(", "").replace(")", "").split(",") if p.strip()]
        if len(parts) != 3:
            raise ConfigError(f"key '{key}': expected 'x,y,z', got '{raw}'")
        try:
            return Position3(*(float(p) for p in parts))
        except ValueError as e:
            raise ConfigError(f"key '{key}': {e}") from None
    try:
        if key in _INT_KEYS:
            return int(raw)
        return float(raw)
    except ValueError:
        raise ConfigError(f"key '{key}': cannot parse value '{raw}'") from None


def load_config(path: str) -> ScenarioConfig:
    """Load a flat key=value config file, applying DEFAULTS for absent keys."""
    overrides = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got '{stripped}'")
            key, raw = (s.strip() for s in stripped.split("=", 1))
            if key not in DEFAULTS:
                raise ConfigError(f"{path}:{lineno}: unknown key '{key}'")
            overrides[key] = _parse_value(key, raw)
    return ScenarioConfig(**overrides)


def with_overrides(cfg: ScenarioConfig, **kwargs) -> ScenarioConfig:
    """A copy of cfg with fields replaced (re-validates)."""
    return replace(cfg, **kwargs)
