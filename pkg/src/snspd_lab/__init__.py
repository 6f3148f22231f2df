"""Simulation and analysis toolkit for multi-channel SNSPD receivers."""

__version__ = "0.1.0"
