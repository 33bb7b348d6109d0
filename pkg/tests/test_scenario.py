import math

import numpy as np
import pytest

from uavsec.scenario import (ConfigError, Position3, ScenarioConfig, dbm_to_watts,
                             default_scenario, load_config, watts_to_dbm,
                             with_overrides)


def write_cfg(tmp_path, text):
    path = tmp_path / "scenario.cfg"
    path.write_text(text)
    return str(path)


def test_empty_file_gives_defaults(tmp_path):
    cfg = load_config(write_cfg(tmp_path, ""))
    assert cfg.n_tx == 16
    assert cfg.n_rx == 8
    assert cfg.slots == 50
    assert cfg.slot_len == 0.6
    assert cfg.tx_power_dbm == 30.0


def test_consistent_grid_accepted(tmp_path):
    cfg = load_config(write_cfg(tmp_path, "slots = 50\nslot_len = 0.6\nhorizon = 30\n"))
    assert cfg.horizon == 30.0


def test_inconsistent_grid_rejected(tmp_path):
    with pytest.raises(ConfigError) as err:
        load_config(write_cfg(tmp_path, "slots = 50\nslot_len = 0.6\nhorizon = 20\n"))
    assert "20" in str(err.value) and "30" in str(err.value)


def test_comments_and_unknown_keys(tmp_path):
    cfg = load_config(write_cfg(tmp_path, "# comment\nn_tx = 8  # inline\n"))
    assert cfg.n_tx == 8
    with pytest.raises(ConfigError) as err:
        load_config(write_cfg(tmp_path, "n_tz = 8\n"))
    assert "n_tz" in str(err.value)


def test_bad_value_names_key(tmp_path):
    with pytest.raises(ConfigError) as err:
        load_config(write_cfg(tmp_path, "n_tx = eight\n"))
    assert "n_tx" in str(err.value)


def test_position_parsing(tmp_path):
    cfg = load_config(write_cfg(tmp_path, "iot_pos = 1, 2, 0\n"))
    assert cfg.iot_pos == Position3(1.0, 2.0, 0.0)


def test_dbm_to_watts_values():
    assert dbm_to_watts(30.0) == pytest.approx(1.0)
    assert dbm_to_watts(0.0) == pytest.approx(1e-3)
    assert dbm_to_watts(-80.0) == pytest.approx(1e-11)


def test_dbm_round_trip():
    rng = np.random.default_rng(7)
    for p in rng.uniform(-120.0, 60.0, size=200):
        assert watts_to_dbm(dbm_to_watts(p)) == pytest.approx(p, rel=1e-12, abs=1e-12)


def test_default_scenario_values():
    cfg = default_scenario()
    assert cfg.iot_pos == Position3(10.0, 20.0, 0.0)
    assert cfg.ut_pos == Position3(30.0, 30.0, 0.0)
    assert cfg.uav_start == Position3(0.0, 0.0, 15.0)
    assert cfg.uav_end == Position3(60.0, 30.0, 15.0)
    assert cfg.pathloss_exp_comm == 3.1
    assert cfg.pathloss_exp_sense == 1.5
    assert cfg.rician_ud_db == 15.0
    assert cfg.rician_ut_db == 5.0
    assert cfg.max_speed == 50.0
    assert cfg.max_step == pytest.approx(cfg.max_speed * cfg.slot_len)
    assert cfg.horizon == pytest.approx(cfg.slots * cfg.slot_len)


def test_linear_views():
    cfg = default_scenario()
    assert cfg.noise_dev_w == pytest.approx(1e-11)
    assert cfg.noise_eve_w == pytest.approx(1e-13)
    assert cfg.pathloss_ref == pytest.approx(1e-3)
    assert cfg.rician_ud == pytest.approx(10 ** 1.5)
    assert cfg.sense_snr_min == pytest.approx(2.0 ** cfg.sense_rate_min - 1.0)


def test_unreachable_mission_rejected():
    # 2 slots of 1 m steps cannot bridge 100 m
    with pytest.raises(ConfigError) as err:
        with_overrides(default_scenario(), slots=2, horizon=1.2, max_speed=1.0,
                       max_step=0.6, uav_end=Position3(100.0, 0.0, 15.0))
    assert "exceeds" in str(err.value)


def test_speed_step_mismatch_rejected():
    with pytest.raises(ConfigError):
        with_overrides(default_scenario(), max_step=10.0)


def test_single_slot_rejected():
    with pytest.raises(ConfigError):
        with_overrides(default_scenario(), slots=1, horizon=0.6)


def test_ground_node_altitude_rejected():
    with pytest.raises(ConfigError):
        with_overrides(default_scenario(), iot_pos=Position3(0.0, 0.0, 5.0))


def test_timeline_indices():
    tl = default_scenario().timeline
    assert tl.slot_indices[0] == 1
    assert tl.slot_indices[-1] == 50
    assert len(tl.slot_indices) == 50


def test_config_immutable():
    cfg = default_scenario()
    with pytest.raises(AttributeError):
        cfg.n_tx = 4
