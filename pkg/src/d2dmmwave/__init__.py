"""Stochastic-geometry analysis and simulation of clustered D2D users sharing a
mmWave cellular uplink."""

__version__ = "0.1.0"
