"""Jacobian fields and their integration back to vertex positions.

A deformation is represented by one 3x3 matrix per face (the change of
the face frame). Integration solves the Poisson system driven by the
divergence of the field; the regularized variant additionally pins the
embedding near spatial targets. Factorizations are computed once per
mesh/weight combination and cached on the operator set.
"""

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from . import _kernels
from .mesh import DegenerateFaceError
from .spectral import PointwiseMap, nearest_neighbor_indices


class JacobianField:
    """One 3x3 matrix per face, row-major.

    Attributes
    ----------
    matrices : ndarray, (F, 3, 3)
    vertex_averaged : bool
        Whether the field was averaged to vertices and back (coarse input
        signals are; ground-truth fields are not).
    """

    __slots__ = ("matrices", "vertex_averaged")

    def __init__(self, matrices, vertex_averaged=False):
        matrices = np.ascontiguousarray(matrices, dtype=np.float64)
        if matrices.ndim != 3 or matrices.shape[1:] != (3, 3):
            raise ValueError(f"expected (F, 3, 3), got {matrices.shape}")
        if not np.isfinite(matrices).all():
            raise ValueError("Jacobian field has non-finite entries")
        self.matrices = matrices
        self.vertex_averaged = bool(vertex_averaged)

    @classmethod
    def identity(cls, n_faces):
        mats = np.broadcast_to(np.eye(3), (n_faces, 3, 3)).copy()
        return cls(mats)

    @property
    def n_faces(self):
        return self.matrices.shape[0]

    def stacked(self):
        """(3F, 3) stack aligned with the gradient operator rows."""
        return self.matrices.reshape(-1, 3)

    def flattened(self):
        """(F, 9) row-major flattening."""
        return self.matrices.reshape(-1, 9)


def save_jacobian_field(path, field):
    """Binary blob: face count (uint64), then 9 doubles per face, row-major."""
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", field.n_faces))
        fh.write(field.matrices.tobytes())


def load_jacobian_field(path):
    raw = Path(path).read_bytes()
    (n,) = struct.unpack_from("<Q", raw, 0)
    mats = np.frombuffer(raw, dtype=np.float64, count=9 * n, offset=8)
    return JacobianField(mats.reshape(n, 3, 3).copy())


def jacobian_between(frames1, frames2):
    """The per-face frame change ``J_f = E1_f^-1 E2_f``.

    Parameters
    ----------
    frames1, frames2 : FaceFrames
        Same face count; source frames must be invertible.

    Returns
    -------
    JacobianField
    """
    if frames1.n_faces != frames2.n_faces:
        raise ValueError("face counts differ")
    src = frames1.frames
    dets = _kernels.det3_batch(src)
    scale = np.abs(dets).max() if len(dets) else 1.0
    singular = np.abs(dets) < 1e-12 * max(scale, 1e-300)
    if singular.any():
        raise DegenerateFaceError(
            "singular source frames", np.nonzero(singular)[0].tolist()
        )
    return JacobianField(_kernels.compose_jacobians(src, frames2.frames))


class PinnedPoissonSystem:
    """Prefactored Poisson operator with the first vertex pinned.

    The stiffness matrix has the constants in its nullspace; dropping the
    first row and column yields an SPD system (connected mesh). Solutions
    are recentered to zero mean, the canonical translation representative.
    """

    def __init__(self, laplacian):
        reduced = laplacian[1:, 1:].tocsc()
        self._factor = splu(reduced)
        self._n = laplacian.shape[0]

    def solve(self, rhs):
        """Solve ``laplacian x = rhs`` and recenter; rhs shape (V,) or (V, d)."""
        rhs = np.asarray(rhs, dtype=np.float64)
        squeeze = rhs.ndim == 1
        if squeeze:
            rhs = rhs[:, None]
        out = np.empty((self._n, rhs.shape[1]))
        out[0] = 0.0
        out[1:] = self._factor.solve(rhs[1:])
        out -= out.mean(axis=0)
        return out[:, 0] if squeeze else out

    def solve_adjoint(self, grad_out):
        """Adjoint of :meth:`solve` as a linear map, for gradient propagation."""
        grad_out = np.asarray(grad_out, dtype=np.float64)
        squeeze = grad_out.ndim == 1
        if squeeze:
            grad_out = grad_out[:, None]
        centered = grad_out - grad_out.mean(axis=0)
        out = np.zeros_like(centered)
        out[1:] = self._factor.solve(centered[1:], trans="T")
        return out[:, 0] if squeeze else out


def poisson_system(ops):
    """The cached :class:`PinnedPoissonSystem` of an operator set."""
    key = "poisson_system"
    if key not in ops._cache:
        n = ops.connected_component_count()
        if n != 1:
            raise ValueError(f"mesh has {n} connected components; Poisson solve needs 1")
        ops._cache[key] = PinnedPoissonSystem(ops.laplacian)
    return ops._cache[key]


def poisson_solve(ops, field):
    """Integrate a Jacobian field into vertex positions.

    Solves ``laplacian V = divergence(field)`` (the normal equations of the
    least-squares fit of per-face gradients to the field) and returns the
    zero-mean solution.

    Returns
    -------
    ndarray, (V, 3)
    """
    if field.n_faces != ops.mesh.n_faces:
        raise ValueError("field and mesh face counts differ")
    rhs = ops.divergence() @ field.stacked()
    return poisson_system(ops).solve(rhs)


@dataclass(frozen=True)
class RecoverySettings:
    """Weights of the regularized embedding recovery.

    ``spatial_weight`` pulls the solution toward the mapped target
    positions, ``jacobian_weight`` toward the integrated field, and
    ``laplacian_weight`` scales the minimum-norm smoothness term (kept at
    1, its written value; exposed for experimentation).
    """

    spatial_weight: float = 20000.0
    jacobian_weight: float = 150000.0
    laplacian_weight: float = 1.0

    def __post_init__(self):
        if self.spatial_weight < 0 or self.jacobian_weight < 0:
            raise ValueError("weights must be nonnegative")
        if self.spatial_weight == 0 and self.jacobian_weight == 0:
            raise ValueError("spatial and Jacobian weights cannot both vanish")


class RecoverySolver:
    """Prefactored left operator of the regularized recovery system.

    ``A = lw * L + a4 * M_mask + a5 * L M L`` with ``M_mask`` the mass
    matrix optionally restricted to a vertex subset (used by handle-based
    editing). SPD whenever ``a4 > 0`` and the mask is nonempty.
    """

    def __init__(self, ops, settings, mask=None):
        L = ops.laplacian
        mass_diag = ops.mass_diagonal.copy()
        if mask is not None:
            keep = np.zeros(len(mass_diag), dtype=bool)
            keep[mask] = True
            mass_diag[~keep] = 0.0
        n = L.shape[0]
        masked_mass = sparse.dia_matrix((mass_diag[None, :], [0]), shape=(n, n))
        full_mass = ops.mass
        op = (
            settings.laplacian_weight * L
            + settings.spatial_weight * masked_mass
            + settings.jacobian_weight * (L.T @ full_mass @ L)
        ).tocsc()
        self._factor = splu(op)
        self._masked_mass_diag = mass_diag
        self._ops = ops
        self._settings = settings

    def solve(self, spatial_targets, field):
        """Right-hand side assembly and back-substitution.

        Parameters
        ----------
        spatial_targets : ndarray, (V, 3)
            Target positions (rows outside the mask are ignored).
        field : JacobianField
        """
        s = self._settings
        ops = self._ops
        rhs = s.spatial_weight * (self._masked_mass_diag[:, None] * spatial_targets)
        if s.jacobian_weight:
            div_j = ops.divergence() @ field.stacked()
            rhs = rhs + s.jacobian_weight * (
                ops.laplacian.T @ (ops.mass_diagonal[:, None] * div_j)
            )
        return self._factor.solve(rhs)


def recovery_solver(ops, settings, mask=None):
    """Cached :class:`RecoverySolver` keyed by weights and mask."""
    mask_key = None if mask is None else tuple(np.sort(np.asarray(mask)).tolist())
    key = (
        "recovery",
        settings.spatial_weight,
        settings.jacobian_weight,
        settings.laplacian_weight,
        mask_key,
    )
    if key not in ops._cache:
        ops._cache[key] = RecoverySolver(ops, settings, mask)
    return ops._cache[key]


def recover_embedding(ops, p2p, target_vertices, field, settings=None):
    """Regularized embedding recovery from a Jacobian field and a map.

    Balances closeness to the mapped target positions against fidelity to
    the integrated field; reduces to a pure spatial fit when the Jacobian
    weight vanishes.

    Parameters
    ----------
    ops : DifferentialOperators of the source mesh
    p2p : PointwiseMap
        Source-to-target correspondence providing spatial targets.
    target_vertices : ndarray, (V2, 3)
    field : JacobianField
    settings : RecoverySettings, optional

    Returns
    -------
    ndarray, (V1, 3)
    """
    settings = settings or RecoverySettings()
    targets = p2p.apply(np.asarray(target_vertices, dtype=np.float64))
    return recovery_solver(ops, settings).solve(targets, field)


def refine_p2p(recovered_vertices, target_vertices):
    """Nearest-neighbor map from recovered positions to target vertices."""
    recovered_vertices = np.asarray(recovered_vertices, dtype=np.float64)
    target_vertices = np.asarray(target_vertices, dtype=np.float64)
    if not (
        np.isfinite(recovered_vertices).all() and np.isfinite(target_vertices).all()
    ):
        raise ValueError("non-finite positions")
    indices = nearest_neighbor_indices(recovered_vertices, target_vertices)
    return PointwiseMap.hard(indices, len(target_vertices))


def polar_decompose(matrix):
    """Split an invertible 3x3 matrix into rotation times symmetric stretch.

    Returns ``(Q, W)`` with ``Q W = matrix``, ``Q`` orthogonal with
    ``det Q = sign(det matrix)``, and ``W`` symmetric (positive definite
    when the determinant is positive).
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    det = np.linalg.det(matrix)
    if abs(det) < 1e-300:
        raise ValueError("singular matrix has no polar decomposition")
    u, s, vt = np.linalg.svd(matrix)
    flip = np.sign(np.linalg.det(u @ vt) * np.sign(det))
    d = np.array([1.0, 1.0, flip])
    q = (u * d) @ vt
    w = (vt.T * (s * d)) @ vt
    return q, w


def polar_rotations(field):
    """Batch rotation factors of a Jacobian field (nearest rotations).

    Raises
    ------
    DegenerateFaceError
        Listing faces whose matrices are singular.
    """
    mats = field.matrices
    dets = _kernels.det3_batch(mats)
    scale = np.abs(dets).max() if len(dets) else 1.0
    singular = np.abs(dets) < 1e-12 * max(scale, 1e-300)
    if singular.any():
        raise DegenerateFaceError(
            "singular Jacobians have no rotation factor",
            np.nonzero(singular)[0].tolist(),
        )
    u, _, vt = np.linalg.svd(mats)
    q = u @ vt
    wrong = np.sign(np.linalg.det(q)) != np.sign(dets)
    if wrong.any():
        u = u.copy()
        u[wrong, :, 2] *= -1.0
        q = u @ vt
    return JacobianField(q)


def jacobian_determinants(field):
    """Per-face determinants, shape (F,)."""
    return _kernels.det3_batch(field.matrices)
