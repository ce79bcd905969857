"""Splitting state-preparation from measurement errors with qutrit-assisted noise learning."""

__version__ = "0.1.0"
