import numpy as np
import pytest

from uavsec.channel import FadingDraws, realize_mission
from uavsec.scenario import default_scenario, with_overrides
from uavsec import orchestrate


def small_cfg(**over):
    """A fast desk-test scenario; mirrors the default geometry.

    The sensing rate is scaled down with the antenna counts so the mission
    stays feasible from the pinned start waypoint.
    """
    base = dict(slots=6, horizon=3.6, n_tx=4, n_rx=2, max_outer_iters=5,
                sense_rate_min=6.0)
    base.update(over)
    return with_overrides(default_scenario(), **base)


@pytest.fixture(scope="session")
def small_scenario():
    return small_cfg()


@pytest.fixture(scope="session")
def small_state(small_scenario):
    """Initialized design plus realized channels for the small scenario."""
    cfg = small_scenario
    draws = FadingDraws.generate(cfg)
    state = orchestrate.initialize(cfg, draws)
    channels = realize_mission(cfg, state.trajectory.waypoints,
                               state.trajectory.altitude, draws)
    return cfg, state, channels


_RUN_CACHE = {}


def cached_run(cfg, scheme="proposed"):
    """Session-wide memo of optimizer runs keyed by (config, scheme)."""
    key = (cfg, scheme)
    if key not in _RUN_CACHE:
        _RUN_CACHE[key] = orchestrate.run(cfg, scheme)
    return _RUN_CACHE[key]


def min_distance_to(state, point_xy, altitude):
    wp = state.trajectory.waypoints
    planar = ((wp - np.asarray(point_xy)) ** 2).sum(axis=1)
    return float(np.sqrt(planar + altitude ** 2).min())
