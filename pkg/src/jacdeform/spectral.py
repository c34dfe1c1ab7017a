"""Laplace-Beltrami eigenbases, spectral projection, and map conversions.

Functions on a surface are represented in the truncated eigenbasis of the
cotangent Laplacian; correspondences move between shapes either as
pointwise maps (hard index lists or soft row-stochastic matrices) or as
small change-of-basis matrices between two truncated eigenbases.
"""

import logging
import struct
from pathlib import Path

import numpy as np
from scipy import linalg as dense_linalg
from scipy import sparse
from scipy.sparse.linalg import eigsh
from scipy.spatial import cKDTree

from . import _kernels

logger = logging.getLogger(__name__)

# Below this vertex count the eigenproblem is solved densely (bit-stable);
# larger problems use an iterative smallest-k solver with a fixed start
# vector. The dense path also serves mid-size meshes when many pairs are
# requested (shift-invert Lanczos degrades as k approaches V).
DENSE_EIGENSOLVE_LIMIT = 2048
DENSE_FRACTION_LIMIT = 8192

# Brute-force nearest-neighbor queries below this size; spatial index above.
BRUTE_FORCE_NN_LIMIT = 20000

_BASIS_MAGIC = b"JDSB"
_BASIS_VERSION = 1


class SpectralBasis:
    """The first ``k`` eigenpairs of ``laplacian x = lam mass x``.

    Attributes
    ----------
    evecs : ndarray, (V, k)
        Mass-orthonormal eigenvectors, sign-fixed so the entry of largest
        magnitude in each column is positive.
    evals : ndarray, (k,)
        Ascending nonnegative eigenvalues; the first is (numerically) zero.
    mass : ndarray, (V,)
        Diagonal of the mesh's mass matrix.
    """

    __slots__ = ("evecs", "evals", "mass")

    def __init__(self, evecs, evals, mass):
        self.evecs = np.ascontiguousarray(evecs, dtype=np.float64)
        self.evals = np.ascontiguousarray(evals, dtype=np.float64)
        self.mass = np.ascontiguousarray(mass, dtype=np.float64)

    @property
    def k(self):
        return self.evecs.shape[1]

    @property
    def n_vertices(self):
        return self.evecs.shape[0]

    def truncated(self, k):
        """A view of the leading ``k`` eigenpairs."""
        if k > self.k:
            raise ValueError(f"requested k={k} exceeds stored k={self.k}")
        return SpectralBasis(self.evecs[:, :k], self.evals[:k], self.mass)

    def project_coefficients(self, signal):
        """Coefficients ``evecs.T @ M @ signal``, shape (k, d)."""
        return self.evecs.T @ (self.mass[:, None] * signal)


def compute_eigenbasis(ops, k):
    """Solve the generalized symmetric eigenproblem for the first ``k`` pairs.

    The problem is reduced to a standard symmetric one through the diagonal
    mass matrix, solved densely below :data:`DENSE_EIGENSOLVE_LIMIT`
    vertices and iteratively (shift-invert, fixed start vector) above.
    Deterministic for identical input.

    Parameters
    ----------
    ops : DifferentialOperators
    k : int
        Number of eigenpairs, ``1 <= k <= V``.

    Returns
    -------
    SpectralBasis
    """
    nv = ops.laplacian.shape[0]
    if not 1 <= k <= nv:
        raise ValueError(f"k={k} outside [1, {nv}]")
    mass = ops.mass_diagonal
    inv_sqrt = 1.0 / np.sqrt(mass)
    scaling = sparse.dia_matrix((inv_sqrt[None, :], [0]), shape=(nv, nv))
    standard = (scaling @ ops.laplacian @ scaling).tocsc()

    dense_path = nv <= DENSE_EIGENSOLVE_LIMIT or (
        nv <= DENSE_FRACTION_LIMIT and k > nv // 4
    )
    if dense_path:
        dense = standard.toarray()
        dense = 0.5 * (dense + dense.T)
        evals, evecs = dense_linalg.eigh(dense, subset_by_index=(0, k - 1))
    else:
        shift = -0.01 * float(np.mean(standard.diagonal()))
        v0 = np.full(nv, 1.0 / np.sqrt(nv))
        evals, evecs = eigsh(standard, k=k, sigma=shift, which="LM", v0=v0)
        order = np.argsort(evals)
        evals, evecs = evals[order], evecs[:, order]

    scale = max(abs(evals[-1]), 1e-300)
    if evals[0] < -1e-8 * scale:
        raise ArithmeticError(f"negative eigenvalue {evals[0]:.3e} from the solver")
    evals = np.clip(evals, 0.0, None)

    gaps = np.diff(evals)
    near = np.nonzero(gaps < 1e-6 * scale)[0]
    for i in near:
        if evals[i] > 0:
            logger.info(
                "near-degenerate eigenpair (%d, %d): %.12g / %.12g",
                i,
                i + 1,
                evals[i],
                evals[i + 1],
            )

    evecs = inv_sqrt[:, None] * evecs
    _fix_signs(evecs)
    return SpectralBasis(evecs, evals, mass)


def _fix_signs(evecs):
    # Largest-magnitude entry positive; argmax takes the lowest index on ties.
    for j in range(evecs.shape[1]):
        col = evecs[:, j]
        if col[np.argmax(np.abs(col))] < 0:
            col *= -1.0


def spectral_project(basis, signal):
    """Project a per-vertex signal onto the basis span: ``P = evecs evecs.T M``.

    Idempotent and constant-preserving; the identity when ``k == V``.

    Parameters
    ----------
    basis : SpectralBasis
    signal : ndarray, (V, d) or (V,)

    Returns
    -------
    ndarray with the input shape
    """
    signal = np.asarray(signal, dtype=np.float64)
    squeeze = signal.ndim == 1
    if squeeze:
        signal = signal[:, None]
    if signal.shape[0] != basis.n_vertices:
        raise ValueError(
            f"signal has {signal.shape[0]} rows, basis expects {basis.n_vertices}"
        )
    out = basis.evecs @ basis.project_coefficients(signal)
    return out[:, 0] if squeeze else out


class FunctionalMap:
    """A ``k1 x k2`` matrix transporting basis coefficients from shape 2 to shape 1."""

    __slots__ = ("matrix",)

    def __init__(self, matrix):
        matrix = np.ascontiguousarray(matrix, dtype=np.float64)
        if matrix.ndim != 2:
            raise ValueError("functional map must be a matrix")
        if not np.isfinite(matrix).all():
            raise ValueError("functional map has non-finite entries")
        self.matrix = matrix

    @property
    def shape(self):
        return self.matrix.shape


class PointwiseMap:
    """A per-vertex correspondence, hard (index list) or soft (row-stochastic).

    Use :meth:`hard` / :meth:`soft` to construct.
    """

    __slots__ = ("indices", "matrix", "n_target")

    def __init__(self, indices=None, matrix=None, n_target=None):
        self.indices = indices
        self.matrix = matrix
        self.n_target = n_target

    @classmethod
    def hard(cls, indices, n_target):
        indices = np.ascontiguousarray(indices, dtype=np.int64)
        if indices.ndim != 1:
            raise ValueError("hard map must be a 1-d index list")
        if indices.size and (indices.min() < 0 or indices.max() >= n_target):
            raise ValueError("hard map indices out of range")
        return cls(indices=indices, n_target=int(n_target))

    @classmethod
    def soft(cls, matrix):
        matrix = np.ascontiguousarray(matrix, dtype=np.float64)
        if (matrix < 0).any():
            raise ValueError("soft map entries must be nonnegative")
        rows = matrix.sum(axis=1)
        if np.abs(rows - 1.0).max() > 1e-8:
            raise ValueError("soft map rows must sum to 1")
        return cls(matrix=matrix, n_target=matrix.shape[1])

    @property
    def is_hard(self):
        return self.indices is not None

    def apply(self, values):
        """Pull per-vertex target values back to the source: ``Pi @ values``."""
        if self.is_hard:
            return np.asarray(values)[self.indices]
        return self.matrix @ np.asarray(values)

    def __len__(self):
        return len(self.indices) if self.is_hard else self.matrix.shape[0]


def nearest_neighbor_indices(query, points):
    """Index of the closest ``points`` row for every ``query`` row.

    Exact blocked brute force (lowest index on ties) below
    :data:`BRUTE_FORCE_NN_LIMIT` rows, a KD-tree above.
    """
    query = np.ascontiguousarray(query, dtype=np.float64)
    points = np.ascontiguousarray(points, dtype=np.float64)
    if len(points) == 0:
        raise ValueError("empty target point set")
    if max(len(query), len(points)) <= BRUTE_FORCE_NN_LIMIT:
        return _kernels.nn_search(query, points)
    _, idx = cKDTree(points).query(query, k=1)
    return np.asarray(idx, dtype=np.int64)


def fmap_from_p2p(p2p, basis1, basis2):
    """Functional map of a hard pointwise map: ``evecs1^+ Pi evecs2``.

    The pseudoinverse is ``evecs.T @ M`` thanks to mass-orthonormality.
    """
    if not p2p.is_hard:
        raise ValueError("fmap_from_p2p expects a hard map")
    if len(p2p) != basis1.n_vertices or p2p.n_target != basis2.n_vertices:
        raise ValueError("map size does not match the bases")
    pulled = basis2.evecs[p2p.indices]
    return FunctionalMap(basis1.evecs.T @ (basis1.mass[:, None] * pulled))


def p2p_from_fmap(fmap, basis1, basis2):
    """Hard pointwise map extracted from a functional map by nearest neighbors.

    Row ``i`` of ``evecs1 @ C`` is matched against the rows of ``evecs2``;
    ties resolve to the lowest target index.
    """
    k1, k2 = fmap.shape
    if k1 > basis1.k or k2 > basis2.k:
        raise ValueError("functional map larger than the bases")
    source_embedding = basis1.evecs[:, :k1] @ fmap.matrix
    indices = nearest_neighbor_indices(source_embedding, basis2.evecs[:, :k2])
    return PointwiseMap.hard(indices, basis2.n_vertices)


def pullback_coordinates(fmap, basis1, basis2, target_vertices):
    """Coarse target geometry expressed on the source connectivity.

    Computes ``evecs1 C evecs2^+ V2``: the target coordinate functions are
    projected onto the target basis and transported into the source basis.

    Returns
    -------
    ndarray, (V1, 3)
    """
    k1, k2 = fmap.shape
    coeff = basis2.truncated(k2).project_coefficients(
        np.asarray(target_vertices, dtype=np.float64)
    )
    return basis1.evecs[:, :k1] @ (fmap.matrix @ coeff)


def soft_map_and_fmap(feat1, feat2, tau, basis1, basis2):
    """Temperature-softmax correspondence from per-vertex features.

    ``Pi[i, j] = softmax_j(feat1[i] . feat2[j] / tau)`` (row-wise,
    stabilized by max subtraction), and the induced functional map
    ``evecs1^+ Pi evecs2``.

    Returns
    -------
    (PointwiseMap, FunctionalMap)
    """
    if tau <= 0:
        raise ValueError("temperature must be positive")
    feat1 = np.asarray(feat1, dtype=np.float64)
    feat2 = np.asarray(feat2, dtype=np.float64)
    if feat1.shape[1] != feat2.shape[1]:
        raise ValueError("feature dimensions differ")
    logits = (feat1 @ feat2.T) / tau
    logits -= logits.max(axis=1, keepdims=True)
    weights = np.exp(logits)
    weights /= weights.sum(axis=1, keepdims=True)
    soft = PointwiseMap.soft(weights)
    fmap = FunctionalMap(
        basis1.evecs.T @ (basis1.mass[:, None] * (weights @ basis2.evecs))
    )
    return soft, fmap


def save_basis(path, basis):
    """Cache a basis as a small binary checkpoint.

    Layout: magic, version, k, V, then eigenvalues, eigenvectors
    (row-major), and the mass diagonal, all float64.
    """
    with open(path, "wb") as fh:
        fh.write(_BASIS_MAGIC)
        fh.write(struct.pack("<IQQ", _BASIS_VERSION, basis.k, basis.n_vertices))
        fh.write(basis.evals.tobytes())
        fh.write(np.ascontiguousarray(basis.evecs).tobytes())
        fh.write(basis.mass.tobytes())


def load_basis(path):
    """Load a basis written by :func:`save_basis`."""
    raw = Path(path).read_bytes()
    if raw[:4] != _BASIS_MAGIC:
        raise ValueError(f"{path}: not a spectral basis cache")
    version, k, nv = struct.unpack_from("<IQQ", raw, 4)
    if version != _BASIS_VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    offset = 4 + struct.calcsize("<IQQ")
    evals = np.frombuffer(raw, dtype=np.float64, count=k, offset=offset)
    offset += 8 * k
    evecs = np.frombuffer(raw, dtype=np.float64, count=k * nv, offset=offset)
    offset += 8 * k * nv
    mass = np.frombuffer(raw, dtype=np.float64, count=nv, offset=offset)
    return SpectralBasis(evecs.reshape(nv, k), evals, mass)
