"""Nested proximal-gradient unfolding for segmentation of concealed objects in degraded images."""

from .config import RunConfig, load_config
from .core import StageState, decompose_residual, fidelity_energy, hadamard
from .degrade import DegradationSpec, apply_spec, default_combined_spec
from .pipeline import DualResult, run_dual_pipeline, run_pipeline

__version__ = "0.1.0"

__all__ = [
    "DegradationSpec",
    "DualResult",
    "RunConfig",
    "StageState",
    "apply_spec",
    "decompose_residual",
    "default_combined_spec",
    "fidelity_energy",
    "hadamard",
    "load_config",
    "run_dual_pipeline",
    "run_pipeline",
]
