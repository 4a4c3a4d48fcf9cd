"""Numerical thresholds.

The underlying theory works with exact matrices; every floating-point test in
this package goes through one of these scale-relative thresholds so the choice
is recorded in exactly one place.
"""

import numpy as np

#: symmetry / residual tolerance, relative to the matrix scale
SYM_REL = 1e-10

#: numerical-rank tolerance, relative to the matrix scale
RANK_REL = 1e-9

#: eigenvalue zero-classification tolerance, relative to the spectral norm
EIG_REL = 1e-9

#: distance-to-imaginary-axis tolerance for invariant-subspace splits
AXIS_REL = 1e-8

#: default lower bound c_K for declaring the sampled Kreiss ratio positive
C_THRESHOLD = 1e-6


def spectral_norm(a) -> float:
    a = np.asarray(a)
    if a.size == 0:
        return 0.0
    return float(np.linalg.norm(a, 2))


def tau_sym(scale: float) -> float:
    return SYM_REL * max(scale, 1e-300)


def tau_rank(scale: float) -> float:
    return RANK_REL * max(scale, 1e-300)


def tau_eig(scale: float) -> float:
    return EIG_REL * max(scale, 1e-300)


def tau_axis(scale: float) -> float:
    return AXIS_REL * max(scale, 1e-300)
