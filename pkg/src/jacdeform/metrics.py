"""Quantitative evaluation of correspondences and deformations.

All map metrics rescale the shapes to unit area internally (never
mutating caller data), which makes every reported number invariant to
uniform scaling of the inputs.
"""

import json
import logging
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components, dijkstra

from . import _kernels

logger = logging.getLogger(__name__)


@dataclass
class MapReport:
    """One evaluated correspondence.

    ``geodesic_error`` is the mean graph-geodesic discrepancy times 100 on
    the unit-area target; ``inversion_pct`` the share of image vertices
    with flipped orientation; ``dirichlet_energy`` the smoothness of the
    pulled-back coordinates; ``coverage_pct`` the mass of the image.
    """

    geodesic_error: float
    inversion_pct: float
    dirichlet_energy: float
    coverage_pct: float

    def to_json(self):
        return json.dumps(
            {
                "geodesic_error": self.geodesic_error,
                "inversion_pct": self.inversion_pct,
                "dirichlet_energy": self.dirichlet_energy,
                "coverage_pct": self.coverage_pct,
            },
            sort_keys=True,
        )


def _unit_area_vertices(vertices, faces):
    areas, _ = _kernels.face_areas_normals(
        np.ascontiguousarray(vertices, dtype=np.float64),
        np.ascontiguousarray(faces, dtype=np.int64),
    )
    total = areas.sum()
    if total <= 0:
        raise ValueError("mesh has zero total area")
    return np.asarray(vertices, dtype=np.float64) / np.sqrt(total)


def _edge_graph(vertices, faces):
    edges = np.sort(faces[:, [[0, 1], [1, 2], [2, 0]]].reshape(-1, 2), axis=1)
    edges = np.unique(edges, axis=0)
    lengths = np.linalg.norm(vertices[edges[:, 0]] - vertices[edges[:, 1]], axis=1)
    n = len(vertices)
    graph = sparse.csr_matrix(
        (np.concatenate([lengths, lengths]),
         (np.concatenate([edges[:, 0], edges[:, 1]]),
          np.concatenate([edges[:, 1], edges[:, 0]]))),
        shape=(n, n),
    )
    return graph


def geodesic_error(p2p, gt, target_mesh):
    """Mean graph-geodesic distance between mapped and true images, x100.

    Distances run on the target's edge graph with Euclidean weights after
    unit-area normalization.

    Parameters
    ----------
    p2p, gt : PointwiseMap (hard)
    target_mesh : TriMesh
    """
    mapped = p2p.indices
    truth = gt.indices
    if mapped.shape != truth.shape:
        raise ValueError("map and ground truth have different lengths")
    vertices = _unit_area_vertices(target_mesh.vertices, target_mesh.faces)
    graph = _edge_graph(vertices, target_mesh.faces)
    n_comp, _ = connected_components(graph, directed=False)
    if n_comp != 1:
        raise ValueError(f"target mesh has {n_comp} components; geodesics undefined")
    # Run single-source sweeps from the smaller unique index set.
    if len(np.unique(truth)) <= len(np.unique(mapped)):
        sources, lookup = np.unique(truth, return_inverse=True)
        dist = dijkstra(graph, directed=False, indices=sources)
        errors = dist[lookup, mapped]
    else:
        sources, lookup = np.unique(mapped, return_inverse=True)
        dist = dijkstra(graph, directed=False, indices=sources)
        errors = dist[lookup, truth]
    return float(errors.mean() * 100.0)


def inversion_rate(p2p, source_mesh, target_mesh):
    """Percentage of image vertices whose orientation the map flips.

    The mapped shape reuses the source winding on the permuted target
    positions; a target vertex counts as inverted when the dot products of
    its normal with the normals of all its preimages sum negative.
    Degenerate mapped faces are skipped (logged).
    """
    mapped_vertices = np.ascontiguousarray(
        target_mesh.vertices[p2p.indices], dtype=np.float64
    )
    mapped_normals, skipped = _kernels.vertex_normals(
        mapped_vertices, source_mesh.faces
    )
    if skipped:
        logger.info("inversion metric skipped %d degenerate mapped faces", skipped)
    target_normals, _ = _kernels.vertex_normals(
        np.ascontiguousarray(target_mesh.vertices, dtype=np.float64),
        target_mesh.faces,
    )
    dots = np.einsum("ij,ij->i", mapped_normals, target_normals[p2p.indices])
    accumulated = np.zeros(target_mesh.n_vertices)
    np.add.at(accumulated, p2p.indices, dots)
    return float(100.0 * np.count_nonzero(accumulated < 0) / target_mesh.n_vertices)


def dirichlet_energy(p2p, source_ops, target_vertices, target_faces=None):
    """Smoothness of the pulled-back coordinates: ``trace(y^T L y)``.

    The target coordinates are normalized to unit area first (the source
    stiffness matrix is scale-invariant by itself).
    """
    if target_faces is None:
        target_faces = source_ops.mesh.faces
    y = p2p.apply(_unit_area_vertices(target_vertices, target_faces))
    return float(np.sum(y * (source_ops.laplacian @ y)))


def coverage(p2p, target_mesh_masses, total=None):
    """Percentage of target mass hit by the map.

    Parameters
    ----------
    p2p : PointwiseMap (hard)
    target_mesh_masses : ndarray (V2,)
        Lumped vertex areas of the target.
    total : float, optional
        Normalizing mass (defaults to the sum, i.e. unit-area scaling).
    """
    masses = np.asarray(target_mesh_masses, dtype=np.float64)
    if total is None:
        total = masses.sum()
    unique = np.unique(p2p.indices)
    return float(100.0 * masses[unique].sum() / total)


def symmetric_dirichlet_per_face(field, frames):
    """In-plane distortion energy of each face of a Jacobian field.

    The 3x3 matrices are reduced to the 2x2 tangential map between
    orthonormal bases of the source and image planes; the energy is
    ``|T|_F^2 + |T^-1|_F^2`` (4 for any in-plane rotation).

    Returns
    -------
    energies : (F,) float64, NaN on flagged faces
    flagged : (F,) bool, faces with a (near-)singular tangential map
    """
    e1 = frames.frames[:, 0, :]
    e2 = frames.frames[:, 1, :]
    img1 = np.einsum("fi,fij->fj", e1, field.matrices)
    img2 = np.einsum("fi,fij->fj", e2, field.matrices)

    def tangential(a, b):
        t1 = a / np.linalg.norm(a, axis=1, keepdims=True)
        b_perp = b - np.einsum("fi,fi->f", b, t1)[:, None] * t1
        t2_norm = np.linalg.norm(b_perp, axis=1, keepdims=True)
        t2 = np.divide(b_perp, t2_norm, out=np.zeros_like(b_perp), where=t2_norm > 0)
        rows = np.stack(
            [
                np.stack([np.einsum("fi,fi->f", a, t1), np.einsum("fi,fi->f", a, t2)], axis=1),
                np.stack([np.einsum("fi,fi->f", b, t1), np.einsum("fi,fi->f", b, t2)], axis=1),
            ],
            axis=1,
        )
        return rows

    with np.errstate(divide="ignore", invalid="ignore"):
        src = tangential(e1, e2)
        dst = tangential(img1, img2)
        det_src = src[:, 0, 0] * src[:, 1, 1] - src[:, 0, 1] * src[:, 1, 0]
        det_dst = dst[:, 0, 0] * dst[:, 1, 1] - dst[:, 0, 1] * dst[:, 1, 0]
        scale = np.abs(det_src).max() if len(det_src) else 1.0
        flagged = ~(
            np.isfinite(det_dst)
            & (np.abs(det_dst) > 1e-12 * max(scale, 1e-300))
            & (np.abs(det_src) > 0)
        )
        t = np.full_like(field.matrices[:, :2, :2], np.nan)
        ok = ~flagged
        t[ok] = np.linalg.solve(src[ok], dst[ok])
        tinv = np.full_like(t, np.nan)
        tinv[ok] = np.linalg.inv(t[ok])
        energies = np.einsum("fij,fij->f", t, t) + np.einsum("fij,fij->f", tinv, tinv)
    energies[flagged] = np.nan
    return energies, flagged


def symmetric_dirichlet(field, frames, areas, scale=1.0):
    """Area-weighted mean in-plane distortion of a field.

    Parameters
    ----------
    field : JacobianField
    frames : FaceFrames of the source mesh
    areas : (F,) per-face areas (weights)
    scale : float
        Reporting multiplier (1 by default; figures elsewhere use 1e-2).

    Returns
    -------
    (value, n_singular) : flagged faces are excluded from the mean and
    counted separately.
    """
    energies, flagged = symmetric_dirichlet_per_face(field, frames)
    areas = np.asarray(areas, dtype=np.float64)
    ok = ~flagged
    if not ok.any():
        raise ValueError("all faces have singular tangential maps")
    value = float(np.average(energies[ok], weights=areas[ok]) * scale)
    return value, int(np.count_nonzero(flagged))


def evaluate_map(p2p, gt, source_mesh, source_ops, target_mesh, target_masses=None):
    """Assemble the full :class:`MapReport` for one correspondence."""
    if target_masses is None:
        target_masses = _kernels.lumped_mass(target_mesh.vertices, target_mesh.faces)
    return MapReport(
        geodesic_error=geodesic_error(p2p, gt, target_mesh) if gt is not None else float("nan"),
        inversion_pct=inversion_rate(p2p, source_mesh, target_mesh),
        dirichlet_energy=dirichlet_energy(
            p2p, source_ops, target_mesh.vertices, target_mesh.faces
        ),
        coverage_pct=coverage(p2p, target_masses),
    )
