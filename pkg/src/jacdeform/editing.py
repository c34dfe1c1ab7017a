"""Handle-based editing: rotation signals in, minimal-distortion shapes out.

A drag of selected vertices is turned into a provisional embedding (a
pinned bi-Laplacian propagation of the handle displacements), its per-face
rotation factors feed the rotation-trained network, and the predicted
field is integrated with the handle positions re-imposed as soft
constraints.

Two design points make the interaction well behaved:

* the best-fit global rigid motion of the handle targets is factored out
  before the network and reapplied afterwards, so pure rigid edits (and
  the identity) reproduce exactly;
* the network's response to the identity signal, cached per session,
  defines the zero point of the Jacobian drive, and the integration is
  solved in displacement form. A zero drag therefore yields a zero
  displacement by construction.
"""

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .deform import JacobianField, RecoverySettings, polar_rotations, recovery_solver
from .mesh import face_frames
from .network import build_input_signal


def best_fit_rigid(source_points, target_points):
    """Least-squares proper rigid motion mapping sources toward targets.

    Returns ``(R, t)`` with targets ~ ``points @ R.T + t``. Degenerate
    configurations (fewer than 3 points or a rank-deficient covariance)
    fall back to a pure translation.
    """
    source_points = np.asarray(source_points, dtype=np.float64)
    target_points = np.asarray(target_points, dtype=np.float64)
    c1 = source_points.mean(axis=0)
    c2 = target_points.mean(axis=0)
    if len(source_points) < 3:
        return np.eye(3), c2 - c1
    h = (source_points - c1).T @ (target_points - c2)
    u, s, vt = np.linalg.svd(h)
    if s[1] < 1e-12 * max(s[0], 1e-300):
        return np.eye(3), c2 - c1
    d = np.sign(np.linalg.det(vt.T @ u.T))
    rotation = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    translation = c2 - c1 @ rotation.T
    return rotation, translation


class HandleSystem:
    """Factorizations tied to one handle set of one mesh.

    ``propagate`` spreads handle displacements over the free vertices by
    minimizing the bi-Laplacian energy with the handle rows pinned;
    ``integrate`` solves the soft-constrained recovery system in
    displacement form.
    """

    def __init__(self, ops, handles, settings):
        handles = np.unique(np.asarray(handles, dtype=np.int64))
        if len(handles) == 0:
            raise ValueError("empty handle set")
        self.ops = ops
        self.handles = handles
        self.settings = settings
        n = ops.mesh.n_vertices
        free = np.setdiff1d(np.arange(n), handles)
        self.free = free
        inv_mass = sparse.dia_matrix(
            (1.0 / ops.mass_diagonal[None, :], [0]), shape=(n, n)
        )
        bilaplacian = (ops.laplacian @ inv_mass @ ops.laplacian).tocsr()
        self._k_fh = bilaplacian[free][:, handles].tocsr()
        self._k_ff_factor = (
            splu(bilaplacian[free][:, free].tocsc()) if len(free) else None
        )
        self._recovery = recovery_solver(ops, settings, mask=handles)

    def propagate(self, handle_displacements):
        """Pinned bi-Laplacian propagation; returns a (V, 3) displacement field."""
        n = self.ops.mesh.n_vertices
        out = np.zeros((n, 3))
        out[self.handles] = handle_displacements
        if self._k_ff_factor is not None and len(self.free):
            out[self.free] = -self._k_ff_factor.solve(
                self._k_fh @ handle_displacements
            )
        return out

    def integrate(self, handle_targets, drive_field):
        """Soft-constrained recovery of the displacement field.

        Solves the prefactored system whose spatial term pins the handle
        rows to ``handle_targets`` (expressed as displacements) and whose
        Jacobian term follows ``drive_field``.
        """
        n = self.ops.mesh.n_vertices
        targets = np.zeros((n, 3))
        targets[self.handles] = handle_targets
        return self._recovery.solve(targets, drive_field)


class EditPipeline:
    """Network-backed editing for one mesh and one checkpoint."""

    def __init__(self, mesh, ops, ctx, model, settings=None):
        self.mesh = mesh
        self.ops = ops
        self.ctx = ctx
        self.model = model
        self.settings = settings or RecoverySettings()
        self._systems = {}
        # The response to the identity rotation signal is the zero point of
        # the Jacobian drive; anything beyond it is treated as deformation.
        identity_signal = build_input_signal(
            ops, ctx.frames, mode="rotation",
            field=JacobianField.identity(mesh.n_faces),
        )
        self.baseline_field = model.predict_field(identity_signal, ctx)

    def system_for(self, handles):
        key = tuple(np.unique(np.asarray(handles, dtype=np.int64)).tolist())
        if key not in self._systems:
            self._systems[key] = HandleSystem(self.ops, np.asarray(key), self.settings)
        return self._systems[key]

    @staticmethod
    def _canonical(handles, handle_targets):
        # HandleSystem stores handles sorted and unique; reorder the targets
        # the same way and reject inconsistent duplicates.
        handles = np.asarray(handles, dtype=np.int64)
        targets = np.asarray(handle_targets, dtype=np.float64)
        if handles.shape[0] != targets.shape[0]:
            raise ValueError("one target position per handle required")
        unique, first = np.unique(handles, return_index=True)
        canonical = targets[first]
        for h, t in zip(handles, targets):
            slot = np.searchsorted(unique, h)
            if not np.array_equal(canonical[slot], t):
                raise ValueError(f"handle {h} given conflicting targets")
        return unique, canonical

    def provisional(self, handles, handle_targets):
        """The naive propagate-and-pin embedding (pre-network baseline)."""
        handles, handle_targets = self._canonical(handles, handle_targets)
        system = self.system_for(handles)
        displacements = handle_targets - self.mesh.vertices[system.handles]
        return self.mesh.vertices + system.propagate(displacements)

    def apply(self, handles, handle_targets):
        """Full editing solve; returns the deformed (V, 3) positions.

        The handle targets' global rigid part is factored out, the
        rotation signal of the provisional embedding drives the network,
        and the calibrated prediction is integrated in displacement form
        with the handles softly pinned.
        """
        handles, handle_targets = self._canonical(handles, handle_targets)
        system = self.system_for(handles)
        anchors = self.mesh.vertices[system.handles]
        rotation, translation = best_fit_rigid(anchors, handle_targets)
        body_targets = (handle_targets - translation) @ rotation

        body_displacements = body_targets - anchors
        scale = self.mesh.bounding_box_diagonal()
        if np.abs(body_displacements).max() <= 1e-14 * scale:
            return self.mesh.vertices @ rotation.T + translation

        provisional = self.mesh.vertices + system.propagate(body_displacements)
        provisional_frames = face_frames(provisional, self.mesh.faces)
        provisional_field = JacobianField(
            np.matmul(self.ctx.frames.inverses(), provisional_frames.frames)
        )
        rotations = polar_rotations(provisional_field)
        signal = self.ops.face_to_vertex @ rotations.flattened()
        predicted = self.model.predict_field(signal, self.ctx)
        drive = JacobianField(
            predicted.matrices - self.baseline_field.matrices
        )
        displacement = system.integrate(body_displacements, drive)
        deformed_body = self.mesh.vertices + displacement
        return deformed_body @ rotation.T + translation


def face_distortion(mesh_frames, source_vertices, deformed_vertices, faces):
    """Per-face in-plane distortion of a deformation (for heat maps).

    Returns the symmetric Dirichlet energy per face; flagged (singular)
    faces come back as NaN.
    """
    from .metrics import symmetric_dirichlet_per_face

    deformed_frames = face_frames(deformed_vertices, faces)
    field = JacobianField(
        np.matmul(mesh_frames.inverses(), deformed_frames.frames)
    )
    energies, _ = symmetric_dirichlet_per_face(field, mesh_frames)
    return energies
