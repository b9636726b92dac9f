"""Synthetic hiring-bias simulation and classifier benchmark."""

__version__ = "0.1.0"
