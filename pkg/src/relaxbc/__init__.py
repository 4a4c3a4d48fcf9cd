"""Boundary-condition analysis for linear hyperbolic relaxation systems on a half-space.

The pipeline: validate a system's structural assumptions, sample the
characteristic generalized Kreiss condition, derive the reduced boundary
condition for the equilibrium (relaxation-limit) system, construct the
boundary-layer profiles, and validate the derivation by stiff 1-D simulation.
"""

__version__ = "0.1.0"
