"""Killed random walks in cones: geometry, simulation, exact DP and drift verifiers."""

__version__ = "0.1.0"
