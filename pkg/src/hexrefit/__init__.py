"""Hexahedral mesh refitting and field transfer.

Distorted hex8 meshes are pulled back toward regular, cube-like elements by
minimizing penalty potentials on edge lengths and included angles, while
selected boundary surfaces slide along their original geometry.  Fields
sampled on the old mesh are moved to the new one by moving least squares,
with a rotation-aware variant for second-order tensors.
"""

from .config import ConfigError, RefitConfig
from .demos import block_mesh, distorted_grid, jittered_grid, make_demo, pyramid, sheared_block
from .distortion import (
    LocalizationField,
    PenaltyParams,
    TargetShape,
    assemble_distortion,
    average_target_lengths,
    element_potential,
    localized_targets,
    measured_shape,
)
from .io import load_mesh, save_mesh
from .mesh import DegenerateElementError, Mesh, MeshError, NormalError, gauss_points
from .quality import QualityReport, quality_report
from .sliding import PinningRequiredError, ProjectionError, SlidingInterface, build_interface
from .solver import (
    NewtonReport,
    NonConvergenceError,
    RefitControls,
    RefitError,
    RefitProblem,
    SingularTangentError,
    dirichlet_mask,
    refit,
)
from .tensor import decompose_tensor, rotation_mean, tensor_interpolate_rmls
from .transfer import FieldSpec, OrphanQueryError, logmls_interpolate, mls_interpolate, transfer_fields

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DegenerateElementError", "FieldSpec", "LocalizationField", "Mesh", "MeshError",
    "NewtonReport", "NonConvergenceError", "NormalError", "OrphanQueryError", "PenaltyParams",
    "PinningRequiredError", "ProjectionError", "QualityReport", "RefitConfig", "RefitControls", "RefitError",
    "RefitProblem", "SingularTangentError", "SlidingInterface", "TargetShape", "assemble_distortion",
    "average_target_lengths", "block_mesh", "build_interface", "decompose_tensor", "dirichlet_mask",
    "distorted_grid", "element_potential", "gauss_points", "jittered_grid", "load_mesh", "localized_targets",
    "logmls_interpolate", "make_demo", "measured_shape", "mls_interpolate", "pyramid", "quality_report", "refit",
    "rotation_mean", "save_mesh", "sheared_block", "tensor_interpolate_rmls", "transfer_fields",
]
