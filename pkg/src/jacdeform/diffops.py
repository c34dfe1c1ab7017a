"""Differentiable (torch) counterparts of the geometry primitives.

Training needs gradients through frame assembly, Jacobian composition,
spectral algebra, and the prefactored Poisson solve; this module mirrors
the NumPy primitives in float64 torch. The linear solve backpropagates by
the adjoint method: one extra back-substitution with the cached
factorization.
"""

import numpy as np
import torch
from scipy import sparse


def tensor(array):
    """Float64 tensor copy of a NumPy array."""
    return torch.as_tensor(np.array(array, dtype=np.float64))


def sparse_tensor(matrix):
    """Coalesced COO float64 torch tensor of a SciPy sparse matrix."""
    coo = sparse.coo_matrix(matrix)
    indices = torch.from_numpy(np.vstack([coo.row, coo.col]).astype(np.int64))
    values = torch.from_numpy(coo.data.astype(np.float64))
    return torch.sparse_coo_tensor(
        indices, values, size=coo.shape, check_invariants=False
    ).coalesce()


def spmm(matrix_t, dense_t):
    """Sparse @ dense with gradient support for the dense operand."""
    return torch.sparse.mm(matrix_t, dense_t)


# Image faces compressed below this fraction of their source cross-product
# norm count as flat: they get a zero normal row (with zero gradient),
# keeping the loss smooth when a soft map collapses geometry.
DEGENERATE_FRAME_FRACTION = 1e-6


def face_frames_t(vertices_t, faces_t, safe=False, reference_cross_norms=None):
    """Per-face frames ``[v1 - v0, v2 - v0, unit normal]`` as an (F, 3, 3) tensor.

    With ``safe=True`` faces whose cross product collapses (below a
    relative threshold of ``reference_cross_norms``, typically the source
    face scale) get a zero normal row instead of an ill-conditioned unit
    vector. Soft maps can flatten faces arbitrarily; unitizing a vanishing
    cross product would make the loss effectively discontinuous there.
    """
    v0 = vertices_t[faces_t[:, 0]]
    e1 = vertices_t[faces_t[:, 1]] - v0
    e2 = vertices_t[faces_t[:, 2]] - v0
    cross = torch.cross(e1, e2, dim=1)
    norm = torch.linalg.norm(cross, dim=1, keepdim=True)
    if safe:
        if reference_cross_norms is None:
            threshold = torch.zeros_like(norm)
        else:
            threshold = (
                DEGENERATE_FRAME_FRACTION * reference_cross_norms.reshape(-1, 1)
            )
        tiny = norm <= threshold
        normal = torch.where(
            tiny,
            torch.zeros_like(cross),
            cross / torch.where(tiny, torch.ones_like(norm), norm),
        )
    else:
        normal = cross / norm
    return torch.stack([e1, e2, normal], dim=1)


def spectral_project_t(evecs_t, mass_t, signal_t):
    """``evecs @ evecs.T @ M @ signal`` without forming the projector."""
    return evecs_t @ (evecs_t.T @ (mass_t[:, None] * signal_t))


class _PinnedPoissonSolve(torch.autograd.Function):
    @staticmethod
    def forward(ctx, rhs, system):
        ctx.system = system
        out = system.solve(rhs.detach().numpy())
        return torch.from_numpy(out)

    @staticmethod
    def backward(ctx, grad_output):
        grad = ctx.system.solve_adjoint(grad_output.detach().numpy())
        return torch.from_numpy(grad), None


def poisson_solve_t(system, rhs_t):
    """Differentiable pinned Poisson solve (zero-mean solution).

    Parameters
    ----------
    system : PinnedPoissonSystem
    rhs_t : tensor, (V, d)
    """
    return _PinnedPoissonSolve.apply(rhs_t, system)


def softmax_rows_t(logits_t):
    """Row-wise softmax, stabilized by max subtraction."""
    return torch.softmax(logits_t, dim=1)


class SourceContext:
    """Frozen torch-side view of one source mesh for training and inference.

    Bundles the operator tensors, the feature-smoothing basis, the inverse
    frames, and the pinned Poisson system so losses can be written as plain
    tensor expressions.
    """

    def __init__(self, mesh, ops, basis_feat):
        from .deform import poisson_system
        from .mesh import face_frames

        self.mesh = mesh
        self.ops = ops
        self.basis_feat = basis_feat
        self.faces_t = torch.from_numpy(mesh.faces.copy())
        self.vertices_t = tensor(mesh.vertices)
        self.evecs_t = tensor(basis_feat.evecs)
        self.mass_t = tensor(basis_feat.mass)
        self.face_to_vertex_t = sparse_tensor(ops.face_to_vertex)
        self.vertex_to_face_t = sparse_tensor(ops.face_to_vertex.T)
        self.divergence_t = sparse_tensor(ops.divergence())
        self.face_adjacency_t = sparse_tensor(ops.face_adjacency)
        frames = face_frames(mesh)
        self.frames = frames
        self.inv_frames_t = tensor(frames.inverses())
        from . import _kernels

        cross = _kernels.face_cross_products(mesh.vertices, mesh.faces)
        self.cross_norms_t = tensor(np.linalg.norm(cross, axis=1))
        self.poisson = poisson_system(ops)

    @property
    def n_vertices(self):
        return self.mesh.n_vertices

    @property
    def n_faces(self):
        return self.mesh.n_faces

    def jacobians_to(self, vertices_t, safe=False):
        """Differentiable frame change from the source onto ``vertices_t``."""
        frames = face_frames_t(
            vertices_t,
            self.faces_t,
            safe=safe,
            reference_cross_norms=self.cross_norms_t if safe else None,
        )
        return torch.matmul(self.inv_frames_t, frames)

    def average_to_vertices(self, per_face_t):
        """Row-stochastic face-to-vertex averaging of an (F, d) tensor."""
        return spmm(self.face_to_vertex_t, per_face_t)

    def integrate(self, field_t):
        """Poisson-integrate an (F, 3, 3) field tensor to zero-mean positions."""
        rhs = spmm(self.divergence_t, field_t.reshape(-1, 3))
        return poisson_solve_t(self.poisson, rhs)
