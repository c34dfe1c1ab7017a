"""Hot per-face kernels with a compiled core and a NumPy fallback.

The compiled Cython module is preferred when importable; setting the
environment variable ``JACDEFORM_PURE_PYTHON=1`` forces the NumPy path.
``BACKEND`` reports which one is active.
"""

import os

from . import _ref

if os.environ.get("JACDEFORM_PURE_PYTHON"):
    _impl = _ref
else:
    try:
        from . import _speedups as _impl  # type: ignore[attr-defined]
    except ImportError:
        _impl = _ref

BACKEND = _impl.BACKEND

face_cross_products = _ref.face_cross_products
face_areas_normals = _impl.face_areas_normals
cot_laplacian_triplets = _impl.cot_laplacian_triplets
lumped_mass = _impl.lumped_mass
face_frames = _impl.face_frames
compose_jacobians = _impl.compose_jacobians
det3_batch = _impl.det3_batch
nn_search = _impl.nn_search
vertex_normals = _impl.vertex_normals

__all__ = [
    "BACKEND",
    "face_cross_products",
    "face_areas_normals",
    "cot_laplacian_triplets",
    "lumped_mass",
    "face_frames",
    "compose_jacobians",
    "det3_batch",
    "nn_search",
    "vertex_normals",
]
