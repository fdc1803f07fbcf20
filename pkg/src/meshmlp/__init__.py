"""Convolution-free learning on triangle meshes.

Per-vertex spectral and angular features feed a residual MLP; no
graph convolutions, no connectivity inside the network. The package
splits along the pipeline: mesh and manifest IO, discrete geometry,
spectral descriptors, a small reverse-mode autodiff engine, the
network, and the training loop, with a CLI stitched over the top.
"""

from .errors import (
    AllZeroSpectrumError,
    ConvergenceFailureError,
    DegenerateMeshError,
    EmptyMeshError,
    InvalidGroupCountError,
    InvalidTargetError,
    LengthMismatchError,
    ManifestError,
    MeshMlpError,
    NonFiniteLossError,
    NonIntegerLabelError,
    ParseError,
    ShapeMismatchError,
)
from .mesh import (
    Mesh,
    attach_face_labels,
    class_color,
    load_face_labels,
    normalize_unit_scale,
    parse_mesh,
    write_labeled_mesh,
)
from .manifest import DatasetManifest, ManifestEntry, load_manifest, save_manifest, subset_training_set
from .geometry import (
    build_edge_adjacency,
    cotangent_laplacian,
    edge_dihedral_angles,
    face_geometry,
    mass_matrix,
    validate_mesh,
    vertex_dihedral_features,
    vertex_normals,
)
from .spectral import SpectralBasis, compute_hks, heat_kernel_signature, solve_eigs, standardize_channels
from .autodiff import Parameter, Tape, Tensor, finite_difference_check
from .optim import accumulate_then_step, adam_step
from .model import ModelState, NetworkConfig, face_label_vote, forward_logits, init_network
from .checkpoint import load_checkpoint, save_checkpoint
from .features import FeatureConfig, Sample, assemble_features, augment_rotation, derive_vertex_targets, precompute_features
from .training import Metrics, TrainConfig, TrainResult, evaluate, train

__version__ = "0.1.0"

__all__ = [
    "MeshMlpError",
    "ParseError",
    "EmptyMeshError",
    "DegenerateMeshError",
    "LengthMismatchError",
    "NonIntegerLabelError",
    "ShapeMismatchError",
    "InvalidTargetError",
    "InvalidGroupCountError",
    "ConvergenceFailureError",
    "AllZeroSpectrumError",
    "NonFiniteLossError",
    "ManifestError",
    "Mesh",
    "class_color",
    "parse_mesh",
    "normalize_unit_scale",
    "attach_face_labels",
    "load_face_labels",
    "write_labeled_mesh",
    "DatasetManifest",
    "ManifestEntry",
    "load_manifest",
    "save_manifest",
    "subset_training_set",
    "build_edge_adjacency",
    "cotangent_laplacian",
    "edge_dihedral_angles",
    "face_geometry",
    "mass_matrix",
    "validate_mesh",
    "vertex_dihedral_features",
    "vertex_normals",
    "SpectralBasis",
    "solve_eigs",
    "compute_hks",
    "heat_kernel_signature",
    "standardize_channels",
    "Tensor",
    "Parameter",
    "Tape",
    "finite_difference_check",
    "adam_step",
    "accumulate_then_step",
    "NetworkConfig",
    "ModelState",
    "init_network",
    "forward_logits",
    "face_label_vote",
    "save_checkpoint",
    "load_checkpoint",
    "FeatureConfig",
    "Sample",
    "assemble_features",
    "augment_rotation",
    "derive_vertex_targets",
    "precompute_features",
    "TrainConfig",
    "TrainResult",
    "Metrics",
    "train",
    "evaluate",
]
