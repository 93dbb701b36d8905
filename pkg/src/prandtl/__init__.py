"""Numerical laboratory for the steady pressure-free boundary layer.

Computes the Blasius similarity profile, marches the stream-coordinate
parabolic equation, verifies the principal eigenvalue of the linearized
operator, and measures convergence rates toward the similarity solution.
"""

from .blasius import (
    BlasiusProfile,
    SelfSimilarProfile,
    build_self_similar,
    fit_far_field,
    psi_max_for_tail,
    solve_blasius,
    weights_at,
)
from .grid import (
    InitialProfile,
    OmegaField,
    PsiGrid,
    d1,
    d2,
    ingest_initial,
    make_grid,
    weighted_norm,
)

__version__ = "0.1.0"
