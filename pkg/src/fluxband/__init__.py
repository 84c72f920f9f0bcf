"""Flux-modulated sideband control of transmons coupled to a resonator."""

__version__ = "0.1.0"
