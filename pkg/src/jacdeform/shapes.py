"""Synthetic shapes and smooth deformation families.

Used by the test suite, the scripted experiments, and the demos to build
same-connectivity training pairs and differently-tessellated versions of
one surface without any external datasets.
"""

import numpy as np

from .mesh import TriMesh


def single_triangle():
    return TriMesh(
        [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], [[0, 1, 2]]
    )


def grid_patch(nx=8, ny=8, size=1.0):
    """Planar triangulated rectangle in the z=0 plane (has a boundary)."""
    xs = np.linspace(0.0, size, nx)
    ys = np.linspace(0.0, size, ny)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    vertices = np.column_stack([gx.ravel(), gy.ravel(), np.zeros(nx * ny)])
    faces = []
    for i in range(nx - 1):
        for j in range(ny - 1):
            a = i * ny + j
            b = (i + 1) * ny + j
            c = (i + 1) * ny + j + 1
            d = i * ny + j + 1
            faces.append([a, b, c])
            faces.append([a, c, d])
    return TriMesh(vertices, faces)


def icosphere(subdivisions=2, radius=1.0):
    """Watertight sphere from a subdivided icosahedron (12, 42, 162, 642, 2562... vertices)."""
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    vertices = np.array(
        [
            [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
            [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
            [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
        ],
        dtype=np.float64,
    )
    vertices /= np.linalg.norm(vertices, axis=1)[:, None]
    faces = [
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ]
    vertices = [v for v in vertices]
    for _ in range(subdivisions):
        midpoint = {}

        def midpoint_index(a, b):
            key = (min(a, b), max(a, b))
            if key not in midpoint:
                m = vertices[a] + vertices[b]
                m /= np.linalg.norm(m)
                vertices.append(m)
                midpoint[key] = len(vertices) - 1
            return midpoint[key]

        new_faces = []
        for a, b, c in faces:
            ab = midpoint_index(a, b)
            bc = midpoint_index(b, c)
            ca = midpoint_index(c, a)
            new_faces += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        faces = new_faces
    return TriMesh(np.asarray(vertices) * radius, faces)


def uv_sphere(n_lat=12, n_lon=16, radius=1.0):
    """Latitude-longitude sphere: a different tessellation of the same surface."""
    vertices = [[0.0, 0.0, radius]]
    for i in range(1, n_lat):
        theta = np.pi * i / n_lat
        for j in range(n_lon):
            phi = 2.0 * np.pi * j / n_lon
            vertices.append(
                [
                    radius * np.sin(theta) * np.cos(phi),
                    radius * np.sin(theta) * np.sin(phi),
                    radius * np.cos(theta),
                ]
            )
    vertices.append([0.0, 0.0, -radius])
    south = len(vertices) - 1

    def ring(i, j):
        return 1 + (i - 1) * n_lon + (j % n_lon)

    faces = []
    for j in range(n_lon):
        faces.append([0, ring(1, j), ring(1, j + 1)])
    for i in range(1, n_lat - 1):
        for j in range(n_lon):
            a, b = ring(i, j), ring(i, j + 1)
            c, d = ring(i + 1, j), ring(i + 1, j + 1)
            faces.append([a, c, d])
            faces.append([a, d, b])
    for j in range(n_lon):
        faces.append([south, ring(n_lat - 1, j + 1), ring(n_lat - 1, j)])
    return TriMesh(vertices, faces)


def box_bar(n_length=12, n_cross=4, length=3.0, width=0.5, height=0.5):
    """Closed triangulated bar along +x, centered at the origin."""
    nx, ny, nz = n_length, n_cross, n_cross
    step = np.array([length / nx, width / ny, height / nz])
    origin = -0.5 * np.array([length, width, height])
    index = {}
    vertices = []

    def vid(i, j, k):
        key = (i, j, k)
        if key not in index:
            index[key] = len(vertices)
            vertices.append(origin + step * np.array([i, j, k], dtype=np.float64))
        return index[key]

    quads = []
    for j in range(ny):  # z = const walls
        for i in range(nx):
            quads.append([vid(i, j, 0), vid(i, j + 1, 0), vid(i + 1, j + 1, 0), vid(i + 1, j, 0)])
            quads.append([vid(i, j, nz), vid(i + 1, j, nz), vid(i + 1, j + 1, nz), vid(i, j + 1, nz)])
    for k in range(nz):  # y = const walls
        for i in range(nx):
            quads.append([vid(i, 0, k), vid(i + 1, 0, k), vid(i + 1, 0, k + 1), vid(i, 0, k + 1)])
            quads.append([vid(i, ny, k), vid(i, ny, k + 1), vid(i + 1, ny, k + 1), vid(i + 1, ny, k)])
    for k in range(nz):  # x = const caps
        for j in range(ny):
            quads.append([vid(0, j, k), vid(0, j, k + 1), vid(0, j + 1, k + 1), vid(0, j + 1, k)])
            quads.append([vid(nx, j, k), vid(nx, j + 1, k), vid(nx, j + 1, k + 1), vid(nx, j, k + 1)])

    vertices = np.asarray(vertices)
    center = vertices.mean(axis=0)
    faces = []
    for q in quads:
        for tri in ([q[0], q[1], q[2]], [q[0], q[2], q[3]]):
            a, b, c = vertices[tri]
            normal = np.cross(b - a, c - a)
            outward = (a + b + c) / 3.0 - center
            if normal @ outward < 0:
                tri = tri[::-1]
            faces.append(tri)
    return TriMesh(vertices, faces)


def bend(vertices, angle=0.6, axis=0, pivot=None):
    """Progressive rotation about z proportional to the ``axis`` coordinate.

    Near-isometric for slender shapes; angle is the total rotation between
    the two extremes of the shape along ``axis``.
    """
    vertices = np.asarray(vertices, dtype=np.float64)
    t = vertices[:, axis]
    lo, hi = t.min(), t.max()
    alpha = angle * (t - lo) / max(hi - lo, 1e-12)
    if pivot is None:
        pivot = vertices.mean(axis=0)
    shifted = vertices - pivot
    cos, sin = np.cos(alpha), np.sin(alpha)
    out = shifted.copy()
    out[:, 0] = cos * shifted[:, 0] - sin * shifted[:, 1]
    out[:, 1] = sin * shifted[:, 0] + cos * shifted[:, 1]
    return out + pivot


def twist(vertices, angle=0.8, axis=0):
    """Progressive rotation about the ``axis`` direction itself."""
    vertices = np.asarray(vertices, dtype=np.float64)
    t = vertices[:, axis]
    lo, hi = t.min(), t.max()
    alpha = angle * (t - lo) / max(hi - lo, 1e-12)
    others = [d for d in range(3) if d != axis]
    out = vertices.copy()
    cos, sin = np.cos(alpha), np.sin(alpha)
    a = vertices[:, others[0]] - vertices[:, others[0]].mean()
    b = vertices[:, others[1]] - vertices[:, others[1]].mean()
    out[:, others[0]] = cos * a - sin * b + vertices[:, others[0]].mean()
    out[:, others[1]] = sin * a + cos * b + vertices[:, others[1]].mean()
    return out


def smooth_warp(vertices, seed=0, amplitude=0.15, frequency=1.5):
    """Low-frequency sinusoidal warp; small amplitudes stay injective."""
    rng = np.random.default_rng(seed)
    vertices = np.asarray(vertices, dtype=np.float64)
    scale = max(vertices.max(axis=0) - vertices.min(axis=0))
    out = vertices.copy()
    for _ in range(3):
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        wave = rng.normal(size=3)
        wave *= frequency / (np.linalg.norm(wave) * scale)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        out += (
            amplitude
            * scale
            * np.sin(vertices @ wave + phase)[:, None]
            * direction
            / 3.0
        )
    return out


LANDMARK_BUMPS = (
    ((1.0, 0.3, 0.2), 0.50, 0.10),
    ((-0.4, 1.0, 0.1), 0.40, 0.14),
    ((0.1, -0.5, 1.0), 0.35, 0.10),
    ((-0.7, -0.6, -0.4), 0.30, 0.16),
    ((0.9, -0.8, 0.3), 0.25, 0.08),
    ((-0.2, 0.4, -1.0), 0.35, 0.12),
    ((0.3, 1.0, 0.8), 0.30, 0.10),
    ((-1.0, 0.1, 0.6), 0.25, 0.14),
)


def landmark_blob(base_mesh, seed=80, warp_amplitude=0.05):
    """Asymmetric blob with radial landmark bumps, for matching experiments.

    Applying this to two different sphere tessellations yields a
    near-isometric pair without any symmetry ambiguity (intrinsic
    descriptors need distinctive geometry to latch onto).
    """
    v = base_mesh.vertices * np.array([1.3, 1.0, 1.7])
    for direction, amplitude, width in LANDMARK_BUMPS:
        d = np.asarray(direction, dtype=np.float64)
        d /= np.linalg.norm(d)
        radius = np.linalg.norm(v, axis=1, keepdims=True)
        outward = v / radius
        weight = np.exp(-((1.0 - outward @ d) / width)[:, None])
        v = v + 0.5 * amplitude * weight * outward
    return base_mesh.with_vertices(smooth_warp(v, seed=seed, amplitude=warp_amplitude))


def random_rotation(seed=0):
    """A uniformly random proper rotation matrix."""
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(3, 3))
    q, r = np.linalg.qr(a)
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1.0
    return q
