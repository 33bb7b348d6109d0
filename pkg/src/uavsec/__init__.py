"""Secrecy-rate optimization for a UAV-mounted ISAC transmitter.

A self-contained simulator that maximizes the average communication
secrecy rate of a UAV serving a ground IoT device while sensing an
untrusted target (treated as a potential eavesdropper), by alternating
optimization of transmit beamforming, the planar UAV trajectory, and
the receive combiner under an echo-SNR sensing constraint.
"""

__version__ = "0.1.0"

from .scenario import ScenarioConfig, Position3, default_scenario, load_config

_LAZY = {
    "DesignState": "orchestrate",
    "RunRecord": "orchestrate",
    "initialize": "orchestrate",
    "run": "orchestrate",
    "run_baseline": "orchestrate",
}

__all__ = [
    "ScenarioConfig",
    "Position3",
    "default_scenario",
    "load_config",
    *_LAZY,
]


def __getattr__(name):
    # defer the optimizer imports so config-only use stays cheap
    if name in _LAZY:
        import importlib

        mod = importlib.import_module(f".{_LAZY[name]}", __name__)
        return getattr(mod, name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
