"""Triangle meshes, OBJ/OFF I/O, and the discrete differential operators.

Everything downstream (spectral bases, Jacobian fields, the network, the
metrics) consumes the operator set built here. All objects are immutable
after construction and safe to share across threads.
"""

import logging
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from . import _kernels

logger = logging.getLogger(__name__)

# Faces smaller than this fraction of the mean face area are rejected.
DEGENERATE_AREA_FRACTION = 1e-9


class MeshParseError(ValueError):
    """Raised when a mesh file cannot be parsed."""


class DegenerateFaceError(ValueError):
    """Raised when a mesh contains (near-)zero-area or invalid faces.

    Attributes
    ----------
    face_indices : list of int
        Offending face indices.
    """

    def __init__(self, message, face_indices):
        super().__init__(f"{message}: faces {list(face_indices)}")
        self.face_indices = list(face_indices)


class TriMesh:
    """An immutable triangle mesh.

    Parameters
    ----------
    vertices : array_like, shape (V, 3)
        Vertex positions in model units.
    faces : array_like, shape (F, 3)
        Vertex index triples, counterclockwise orientation.

    Raises
    ------
    ValueError
        If a face index is out of range or a face repeats a vertex.
    DegenerateFaceError
        If any face area is below the degenerate-face threshold.
    """

    __slots__ = ("vertices", "faces")

    def __init__(self, vertices, faces):
        vertices = np.ascontiguousarray(vertices, dtype=np.float64)
        faces = np.ascontiguousarray(faces, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 3:
            raise ValueError(f"vertices must be (V, 3), got {vertices.shape}")
        if faces.ndim != 2 or faces.shape[1] != 3:
            raise ValueError(f"faces must be (F, 3), got {faces.shape}")
        if faces.size and (faces.min() < 0 or faces.max() >= len(vertices)):
            bad = np.unique(np.nonzero((faces < 0) | (faces >= len(vertices)))[0])
            raise ValueError(f"face indices out of range in faces {bad.tolist()}")
        repeated = (
            (faces[:, 0] == faces[:, 1])
            | (faces[:, 1] == faces[:, 2])
            | (faces[:, 0] == faces[:, 2])
        )
        if repeated.any():
            raise DegenerateFaceError(
                "faces repeating a vertex", np.nonzero(repeated)[0].tolist()
            )
        areas, _ = _kernels.face_areas_normals(vertices, faces)
        if len(areas):
            threshold = DEGENERATE_AREA_FRACTION * areas.sum() / len(areas)
            tiny = areas <= threshold
            if tiny.any():
                raise DegenerateFaceError(
                    "faces below the degenerate-area threshold",
                    np.nonzero(tiny)[0].tolist(),
                )
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "faces", faces)
        vertices.setflags(write=False)
        faces.setflags(write=False)

    def __setattr__(self, name, value):
        raise AttributeError("TriMesh is immutable")

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_faces(self):
        return self.faces.shape[0]

    def face_areas(self):
        """Per-face areas, shape (F,)."""
        areas, _ = _kernels.face_areas_normals(self.vertices, self.faces)
        return areas

    def total_area(self):
        return float(self.face_areas().sum())

    def bounding_box_diagonal(self):
        extent = self.vertices.max(axis=0) - self.vertices.min(axis=0)
        return float(np.linalg.norm(extent))

    def with_vertices(self, vertices):
        """Same connectivity, new embedding."""
        return TriMesh(vertices, self.faces)


def load_mesh(path):
    """Load a triangle mesh from an ASCII OBJ or OFF file.

    The format is chosen by extension (``.off`` reads OFF, anything else
    is parsed as OBJ). Quad or larger faces are rejected.

    Parameters
    ----------
    path : str or Path

    Returns
    -------
    TriMesh
    """
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".off":
        return _parse_off(text, str(path))
    return _parse_obj(text, str(path))


def save_mesh(path, mesh):
    """Write ``mesh`` as ASCII OBJ with full double precision.

    ``load_mesh(save_mesh(p, m))`` reproduces vertex coordinates exactly
    (shortest round-trip decimal representation).
    """
    lines = []
    for v in mesh.vertices:
        lines.append(f"v {float(v[0])!r} {float(v[1])!r} {float(v[2])!r}")
    for f in mesh.faces:
        lines.append(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}")
    lines.append("")
    Path(path).write_text("\n".join(lines))


def mesh_to_obj_string(mesh):
    """OBJ text for ``mesh`` (same encoding as :func:`save_mesh`)."""
    lines = [f"v {float(v[0])!r} {float(v[1])!r} {float(v[2])!r}" for v in mesh.vertices]
    lines += [f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}" for f in mesh.faces]
    lines.append("")
    return "\n".join(lines)


def _parse_obj(text, origin):
    vertices = []
    faces = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        tag = tokens[0]
        if tag == "v":
            if len(tokens) < 4:
                raise MeshParseError(f"{origin}:{lineno}: vertex needs 3 coordinates")
            try:
                vertices.append([float(t) for t in tokens[1:4]])
            except ValueError as exc:
                raise MeshParseError(f"{origin}:{lineno}: bad vertex coordinate") from exc
        elif tag == "f":
            if len(tokens) != 4:
                raise MeshParseError(
                    f"{origin}:{lineno}: only triangle faces are supported"
                )
            idx = []
            for t in tokens[1:]:
                head = t.split("/")[0]
                try:
                    i = int(head)
                except ValueError as exc:
                    raise MeshParseError(f"{origin}:{lineno}: bad face index {t!r}") from exc
                if i <= 0:
                    raise MeshParseError(
                        f"{origin}:{lineno}: face indices must be positive, got {i}"
                    )
                idx.append(i - 1)
            faces.append(idx)
        # vn / vt / usemtl / o / g / s records carry no geometry and are skipped
    if not vertices:
        raise MeshParseError(f"{origin}: no vertices found")
    vertices = np.asarray(vertices, dtype=np.float64)
    faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    if faces.size and faces.max() >= len(vertices):
        bad = np.unique(np.nonzero(faces >= len(vertices))[0])
        raise MeshParseError(f"{origin}: face indices out of range in faces {bad.tolist()}")
    return TriMesh(vertices, faces)


def _parse_off(text, origin):
    lines = [
        ln.strip()
        for ln in text.splitlines()
        if ln.strip() and not ln.strip().startswith("#")
    ]
    if not lines:
        raise MeshParseError(f"{origin}: empty OFF file")
    pos = 0
    if lines[0].upper().startswith("OFF"):
        remainder = lines[0][3:].strip()
        pos = 1
        counts_line = remainder if remainder else lines[pos]
        if not remainder:
            pos += 1
    else:
        counts_line = lines[0]
        pos = 1
    try:
        nv, nf = [int(t) for t in counts_line.split()[:2]]
    except (ValueError, IndexError) as exc:
        raise MeshParseError(f"{origin}: bad OFF counts line {counts_line!r}") from exc
    if len(lines) < pos + nv + nf:
        raise MeshParseError(f"{origin}: truncated OFF file")
    try:
        vertices = np.array(
            [[float(t) for t in lines[pos + i].split()[:3]] for i in range(nv)]
        )
    except ValueError as exc:
        raise MeshParseError(f"{origin}: bad OFF vertex record") from exc
    faces = []
    for i in range(nf):
        tokens = lines[pos + nv + i].split()
        if int(tokens[0]) != 3:
            raise MeshParseError(f"{origin}: OFF face {i} is not a triangle")
        faces.append([int(t) for t in tokens[1:4]])
    return TriMesh(vertices, np.asarray(faces, dtype=np.int64))


class DifferentialOperators:
    """Discrete differential operators of one mesh.

    Attributes
    ----------
    mesh : TriMesh
    laplacian : csr_matrix, (V, V)
        Cotangent stiffness matrix, symmetric PSD with zero row sums.
    mass : dia_matrix, (V, V)
        Diagonal lumped vertex areas (one third of incident face areas).
    grad : csr_matrix, (3F, V)
        Face-based gradient; rows ``3f..3f+2`` hold the spatial components
        of the gradient on face ``f``. Satisfies ``laplacian = grad.T @
        face_area @ grad``.
    face_area : dia_matrix, (3F, 3F)
        Each face area repeated three times along the diagonal.
    face_to_vertex : csr_matrix, (V, F)
        Row-stochastic averaging of per-face values to vertices; row ``i``
        has entries ``1 / f_i`` over the ``f_i`` incident faces.
    face_adjacency : csr_matrix, (F, F)
        Row-stochastic average over edge-adjacent faces. A face with no
        neighbor averages to itself.
    """

    __slots__ = (
        "mesh",
        "laplacian",
        "mass",
        "grad",
        "face_area",
        "face_to_vertex",
        "face_adjacency",
        "_cache",
    )

    def __init__(self, mesh, laplacian, mass, grad, face_area, face_to_vertex, face_adjacency):
        self.mesh = mesh
        self.laplacian = laplacian
        self.mass = mass
        self.grad = grad
        self.face_area = face_area
        self.face_to_vertex = face_to_vertex
        self.face_adjacency = face_adjacency
        self._cache = {}

    @property
    def mass_diagonal(self):
        return self.mass.diagonal()

    def divergence(self):
        """The operator ``grad.T @ face_area``, shape (V, 3F), cached."""
        key = "divergence"
        if key not in self._cache:
            self._cache[key] = (self.grad.T @ self.face_area).tocsr()
        return self._cache[key]

    def connected_component_count(self):
        key = "components"
        if key not in self._cache:
            adjacency = self.laplacian.copy()
            adjacency.setdiag(0)
            adjacency.eliminate_zeros()
            n, _ = connected_components(np.abs(adjacency), directed=False)
            self._cache[key] = int(n)
        return self._cache[key]


def build_operators(mesh):
    """Assemble all :class:`DifferentialOperators` for ``mesh``.

    Deterministic for identical input. Requires every vertex to belong to
    at least one face (otherwise its lumped mass would vanish).

    Raises
    ------
    DegenerateFaceError
        If a zero-area face slips past mesh validation.
    ValueError
        If the mesh has isolated vertices.
    """
    vertices, faces = mesh.vertices, mesh.faces
    nv, nf = mesh.n_vertices, mesh.n_faces

    areas, normals = _kernels.face_areas_normals(vertices, faces)
    if (areas == 0.0).any():
        raise DegenerateFaceError(
            "zero-area faces", np.nonzero(areas == 0.0)[0].tolist()
        )

    rows, cols, vals = _kernels.cot_laplacian_triplets(vertices, faces)
    laplacian = sparse.csr_matrix((vals, (rows, cols)), shape=(nv, nv))
    laplacian.sum_duplicates()

    masses = _kernels.lumped_mass(vertices, faces)
    if (masses == 0.0).any():
        isolated = np.nonzero(masses == 0.0)[0]
        raise ValueError(f"isolated vertices with zero mass: {isolated.tolist()}")
    mass = sparse.dia_matrix((masses[None, :], [0]), shape=(nv, nv))

    grad = _gradient_matrix(vertices, faces, areas, normals)
    face_area = sparse.dia_matrix(
        (np.repeat(areas, 3)[None, :], [0]), shape=(3 * nf, 3 * nf)
    )
    face_to_vertex = _face_to_vertex_matrix(faces, nv)
    face_adjacency = _face_adjacency_matrix(faces)
    return DifferentialOperators(
        mesh, laplacian, mass, grad, face_area, face_to_vertex, face_adjacency
    )


def _gradient_matrix(vertices, faces, areas, normals):
    nf = faces.shape[0]
    nv = vertices.shape[0]
    # Gradient of the hat function at corner c is the 90-degree in-plane
    # rotation of the opposite edge, scaled by 1 / (2 A).
    rows = np.empty(9 * nf, dtype=np.int64)
    cols = np.empty(9 * nf, dtype=np.int64)
    vals = np.empty(9 * nf, dtype=np.float64)
    base = 3 * np.arange(nf)
    out = 0
    for corner in range(3):
        opp_a = faces[:, (corner + 1) % 3]
        opp_b = faces[:, (corner + 2) % 3]
        edge = vertices[opp_b] - vertices[opp_a]
        g = np.cross(normals, edge) / (2.0 * areas[:, None])
        for comp in range(3):
            block = slice(out, out + nf)
            rows[block] = base + comp
            cols[block] = faces[:, corner]
            vals[block] = g[:, comp]
            out += nf
    return sparse.csr_matrix((vals, (rows, cols)), shape=(3 * nf, nv))


def _face_to_vertex_matrix(faces, nv):
    nf = faces.shape[0]
    rows = faces.reshape(-1)
    cols = np.repeat(np.arange(nf), 3)
    counts = np.bincount(rows, minlength=nv).astype(np.float64)
    vals = 1.0 / counts[rows]
    return sparse.csr_matrix((vals, (rows, cols)), shape=(nv, nf))


def _face_adjacency_matrix(faces):
    nf = faces.shape[0]
    edges = np.sort(faces[:, [[0, 1], [1, 2], [2, 0]]].reshape(-1, 2), axis=1)
    face_of_edge = np.repeat(np.arange(nf), 3)
    order = np.lexsort((edges[:, 1], edges[:, 0]))
    edges_sorted = edges[order]
    faces_sorted = face_of_edge[order]
    same = (edges_sorted[:-1] == edges_sorted[1:]).all(axis=1)
    a = faces_sorted[:-1][same]
    b = faces_sorted[1:][same]
    rows = np.concatenate([a, b])
    cols = np.concatenate([b, a])
    adjacency = sparse.csr_matrix(
        (np.ones(len(rows)), (rows, cols)), shape=(nf, nf)
    )
    degree = np.asarray(adjacency.sum(axis=1)).ravel()
    lonely = degree == 0
    if lonely.any():
        idx = np.nonzero(lonely)[0]
        adjacency += sparse.csr_matrix(
            (np.ones(len(idx)), (idx, idx)), shape=(nf, nf)
        )
        degree[lonely] = 1.0
    scale = sparse.dia_matrix((1.0 / degree[None, :], [0]), shape=(nf, nf))
    return (scale @ adjacency).tocsr()


class FaceFrames:
    """Per-face frames with rows ``[v1 - v0, v2 - v0, unit normal]``.

    Attributes
    ----------
    frames : ndarray, (F, 3, 3)
    """

    __slots__ = ("frames",)

    def __init__(self, frames):
        self.frames = np.ascontiguousarray(frames, dtype=np.float64)

    @property
    def n_faces(self):
        return self.frames.shape[0]

    def inverses(self):
        dets = _kernels.det3_batch(self.frames)
        scale = np.abs(dets).max() if len(dets) else 1.0
        singular = np.abs(dets) < 1e-12 * max(scale, 1e-300)
        if singular.any():
            raise DegenerateFaceError(
                "singular frames", np.nonzero(singular)[0].tolist()
            )
        return np.linalg.inv(self.frames)


def face_frames(mesh_or_vertices, faces=None):
    """Build :class:`FaceFrames` for a mesh or a (vertices, faces) pair.

    Degenerate faces (zero normal) are rejected.
    """
    if faces is None:
        vertices, faces = mesh_or_vertices.vertices, mesh_or_vertices.faces
    else:
        vertices = np.ascontiguousarray(mesh_or_vertices, dtype=np.float64)
        faces = np.ascontiguousarray(faces, dtype=np.int64)
    frames = _kernels.face_frames(vertices, faces)
    zero_normal = (frames[:, 2, :] == 0.0).all(axis=1)
    if zero_normal.any():
        raise DegenerateFaceError(
            "degenerate faces have no frame", np.nonzero(zero_normal)[0].tolist()
        )
    return FaceFrames(frames)


def dump_sparse(path, matrix):
    """Write a sparse matrix as ``row col value`` triplet text (debugging aid)."""
    coo = sparse.coo_matrix(matrix)
    with open(path, "w") as fh:
        fh.write(f"# {coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
        for r, c, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{r} {c} {float(v)!r}\n")
