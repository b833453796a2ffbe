"""Event-driven per-element explicit dynamics with an implicit, bound-constrained
phase field for 2D plane-strain brittle fracture."""

from .material import (AT1, AT2, MaterialParams, PhaseFieldVariant, SplitResult,
                       degradation, degraded_stress, geometric_function,
                       lame_from_engineering, macaulay, spectral_split)
from .mesh import Mesh, load_mesh, save_mesh, select_boundary

__all__ = [
    "AT1", "AT2", "MaterialParams", "PhaseFieldVariant", "SplitResult",
    "degradation", "degraded_stress", "geometric_function",
    "lame_from_engineering", "macaulay", "spectral_split",
    "Mesh", "load_mesh", "save_mesh", "select_boundary",
]

__version__ = "0.1.0"
