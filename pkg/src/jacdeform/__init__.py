"""Detail-preserving mesh deformation from coarse per-face Jacobian signals.

The geometry layer (meshes, operators, spectral bases, Jacobian fields)
is NumPy/SciPy; training and differentiable inference run in float64
torch; the hot per-face kernels have a compiled core with a NumPy
fallback (see ``jacdeform._kernels.BACKEND``).
"""

__version__ = "0.1.0"

from .deform import (
    JacobianField,
    RecoverySettings,
    jacobian_between,
    jacobian_determinants,
    poisson_solve,
    polar_decompose,
    polar_rotations,
    recover_embedding,
    refine_p2p,
)
from .mesh import (
    DegenerateFaceError,
    DifferentialOperators,
    FaceFrames,
    MeshParseError,
    TriMesh,
    build_operators,
    face_frames,
    load_mesh,
    save_mesh,
)
from .spectral import (
    FunctionalMap,
    PointwiseMap,
    SpectralBasis,
    compute_eigenbasis,
    fmap_from_p2p,
    p2p_from_fmap,
    pullback_coordinates,
    soft_map_and_fmap,
    spectral_project,
)

__all__ = [
    "DegenerateFaceError",
    "DifferentialOperators",
    "FaceFrames",
    "FunctionalMap",
    "JacobianField",
    "MeshParseError",
    "PointwiseMap",
    "RecoverySettings",
    "SpectralBasis",
    "TriMesh",
    "build_operators",
    "compute_eigenbasis",
    "face_frames",
    "fmap_from_p2p",
    "jacobian_between",
    "jacobian_determinants",
    "load_mesh",
    "p2p_from_fmap",
    "poisson_solve",
    "polar_decompose",
    "polar_rotations",
    "pullback_coordinates",
    "recover_embedding",
    "refine_p2p",
    "save_mesh",
    "soft_map_and_fmap",
    "spectral_project",
]
