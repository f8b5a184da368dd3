"""Simulation and statistics toolkit for two-photon absorption and
sum-frequency generation driven by squeezed light."""

__version__ = "0.1.0"
