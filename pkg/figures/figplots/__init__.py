"""Offline figure scripts for the uavsec CSV artifacts.

Each module renders one figure kind from the optimizer's CSV outputs:
convergence curves, the trajectory map, and sweep curves (secrecy versus
slot count or sensing rate). The scripts never import the optimizer (the
CSV schemas are the only coupling), and re-running them on the same inputs
reproduces the same figures (fixed style, no timestamps).
"""

__version__ = "0.1.0"
