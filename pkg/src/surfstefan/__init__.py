"""Enthalpy method for a Stefan problem on an evolving triangulated surface."""

__version__ = "0.1.0"
