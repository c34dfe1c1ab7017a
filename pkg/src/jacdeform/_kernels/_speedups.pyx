# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled per-face kernels. Mirrors ``_ref`` exactly; see tests/test_kernels.py."""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()

BACKEND = "cython"


cdef inline void _cross3(const double* a, const double* b, double* out) noexcept nogil:
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]


cdef inline double _dot3(const double* a, const double* b) noexcept nogil:
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


def face_cross_products(const double[:, ::1] vertices, const cnp.int64_t[:, ::1] faces):
    cdef Py_ssize_t nf = faces.shape[0]
    out_arr = np.empty((nf, 3), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double e1[3]
    cdef double e2[3]
    cdef Py_ssize_t f, i0, i1, i2, d
    with nogil:
        for f in range(nf):
            i0 = faces[f, 0]; i1 = faces[f, 1]; i2 = faces[f, 2]
            for d in range(3):
                e1[d] = vertices[i1, d] - vertices[i0, d]
                e2[d] = vertices[i2, d] - vertices[i0, d]
            _cross3(e1, e2, &out[f, 0])
    return out_arr


def face_areas_normals(const double[:, ::1] vertices, const cnp.int64_t[:, ::1] faces):
    cdef Py_ssize_t nf = faces.shape[0]
    areas_arr = np.empty(nf, dtype=np.float64)
    normals_arr = np.empty((nf, 3), dtype=np.float64)
    cdef double[::1] areas = areas_arr
    cdef double[:, ::1] normals = normals_arr
    cdef double e1[3]
    cdef double e2[3]
    cdef double c[3]
    cdef double n
    cdef Py_ssize_t f, i0, i1, i2, d
    with nogil:
        for f in range(nf):
            i0 = faces[f, 0]; i1 = faces[f, 1]; i2 = faces[f, 2]
            for d in range(3):
                e1[d] = vertices[i1, d] - vertices[i0, d]
                e2[d] = vertices[i2, d] - vertices[i0, d]
            _cross3(e1, e2, c)
            n = sqrt(_dot3(c, c))
            areas[f] = 0.5 * n
            if n > 0.0:
                for d in range(3):
                    normals[f, d] = c[d] / n
            else:
                for d in range(3):
                    normals[f, d] = 0.0
    return areas_arr, normals_arr


def cot_laplacian_triplets(const double[:, ::1] vertices, const cnp.int64_t[:, ::1] faces):
    cdef Py_ssize_t nf = faces.shape[0]
    rows_arr = np.empty(12 * nf, dtype=np.int64)
    cols_arr = np.empty(12 * nf, dtype=np.int64)
    vals_arr = np.empty(12 * nf, dtype=np.float64)
    cdef cnp.int64_t[::1] rows = rows_arr
    cdef cnp.int64_t[::1] cols = cols_arr
    cdef double[::1] vals = vals_arr
    cdef double u[3]
    cdef double v[3]
    cdef double c[3]
    cdef double w
    cdef Py_ssize_t corner, f, out
    cdef cnp.int64_t ia, ib, ic
    with nogil:
        for corner in range(3):
            for f in range(nf):
                ic = faces[f, corner]
                ia = faces[f, (corner + 1) % 3]
                ib = faces[f, (corner + 2) % 3]
                for out in range(3):
                    u[out] = vertices[ia, out] - vertices[ic, out]
                    v[out] = vertices[ib, out] - vertices[ic, out]
                _cross3(u, v, c)
                w = 0.5 * _dot3(u, v) / sqrt(_dot3(c, c))
                out = 4 * (corner * nf + f)
                rows[out] = ia; cols[out] = ib; vals[out] = -w
                rows[out + 1] = ib; cols[out + 1] = ia; vals[out + 1] = -w
                rows[out + 2] = ia; cols[out + 2] = ia; vals[out + 2] = w
                rows[out + 3] = ib; cols[out + 3] = ib; vals[out + 3] = w
    return rows_arr, cols_arr, vals_arr


def lumped_mass(const double[:, ::1] vertices, const cnp.int64_t[:, ::1] faces):
    cdef Py_ssize_t nv = vertices.shape[0]
    cdef Py_ssize_t nf = faces.shape[0]
    masses_arr = np.zeros(nv, dtype=np.float64)
    cdef double[::1] masses = masses_arr
    cdef double e1[3]
    cdef double e2[3]
    cdef double c[3]
    cdef double third
    cdef Py_ssize_t f, d
    with nogil:
        for f in range(nf):
            for d in range(3):
                e1[d] = vertices[faces[f, 1], d] - vertices[faces[f, 0], d]
                e2[d] = vertices[faces[f, 2], d] - vertices[faces[f, 0], d]
            _cross3(e1, e2, c)
            third = 0.5 * sqrt(_dot3(c, c)) / 3.0
            for d in range(3):
                masses[faces[f, d]] += third
    return masses_arr


def face_frames(const double[:, ::1] vertices, const cnp.int64_t[:, ::1] faces):
    cdef Py_ssize_t nf = faces.shape[0]
    frames_arr = np.empty((nf, 3, 3), dtype=np.float64)
    cdef double[:, :, ::1] frames = frames_arr
    cdef double c[3]
    cdef double n
    cdef Py_ssize_t f, i0, i1, i2, d
    with nogil:
        for f in range(nf):
            i0 = faces[f, 0]; i1 = faces[f, 1]; i2 = faces[f, 2]
            for d in range(3):
                frames[f, 0, d] = vertices[i1, d] - vertices[i0, d]
                frames[f, 1, d] = vertices[i2, d] - vertices[i0, d]
            _cross3(&frames[f, 0, 0], &frames[f, 1, 0], c)
            n = sqrt(_dot3(c, c))
            if n > 0.0:
                for d in range(3):
                    frames[f, 2, d] = c[d] / n
            else:
                for d in range(3):
                    frames[f, 2, d] = 0.0
    return frames_arr


def compose_jacobians(const double[:, :, ::1] frames_src, const double[:, :, ::1] frames_dst):
    # Solve A X = B per face via the adjugate of A; matches np.linalg.solve.
    cdef Py_ssize_t nf = frames_src.shape[0]
    out_arr = np.empty((nf, 3, 3), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef double inv[3][3]
    cdef double det
    cdef Py_ssize_t f, i, j, k
    with nogil:
        for f in range(nf):
            inv[0][0] = frames_src[f, 1, 1] * frames_src[f, 2, 2] - frames_src[f, 1, 2] * frames_src[f, 2, 1]
            inv[0][1] = frames_src[f, 0, 2] * frames_src[f, 2, 1] - frames_src[f, 0, 1] * frames_src[f, 2, 2]
            inv[0][2] = frames_src[f, 0, 1] * frames_src[f, 1, 2] - frames_src[f, 0, 2] * frames_src[f, 1, 1]
            inv[1][0] = frames_src[f, 1, 2] * frames_src[f, 2, 0] - frames_src[f, 1, 0] * frames_src[f, 2, 2]
            inv[1][1] = frames_src[f, 0, 0] * frames_src[f, 2, 2] - frames_src[f, 0, 2] * frames_src[f, 2, 0]
            inv[1][2] = frames_src[f, 0, 2] * frames_src[f, 1, 0] - frames_src[f, 0, 0] * frames_src[f, 1, 2]
            inv[2][0] = frames_src[f, 1, 0] * frames_src[f, 2, 1] - frames_src[f, 1, 1] * frames_src[f, 2, 0]
            inv[2][1] = frames_src[f, 0, 1] * frames_src[f, 2, 0] - frames_src[f, 0, 0] * frames_src[f, 2, 1]
            inv[2][2] = frames_src[f, 0, 0] * frames_src[f, 1, 1] - frames_src[f, 0, 1] * frames_src[f, 1, 0]
            det = (frames_src[f, 0, 0] * inv[0][0]
                   + frames_src[f, 0, 1] * inv[1][0]
                   + frames_src[f, 0, 2] * inv[2][0])
            for i in range(3):
                for j in range(3):
                    out[f, i, j] = 0.0
                    for k in range(3):
                        out[f, i, j] += inv[i][k] * frames_dst[f, k, j]
                    out[f, i, j] /= det
    return out_arr


def det3_batch(const double[:, :, ::1] mats):
    cdef Py_ssize_t n = mats.shape[0]
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t f
    with nogil:
        for f in range(n):
            out[f] = (mats[f, 0, 0] * (mats[f, 1, 1] * mats[f, 2, 2] - mats[f, 1, 2] * mats[f, 2, 1])
                      - mats[f, 0, 1] * (mats[f, 1, 0] * mats[f, 2, 2] - mats[f, 1, 2] * mats[f, 2, 0])
                      + mats[f, 0, 2] * (mats[f, 1, 0] * mats[f, 2, 1] - mats[f, 1, 1] * mats[f, 2, 0]))
    return out_arr


def nn_search(const double[:, ::1] query, const double[:, ::1] points, block_size=2048):
    cdef Py_ssize_t nq = query.shape[0]
    cdef Py_ssize_t npts = points.shape[0]
    cdef Py_ssize_t dim = query.shape[1]
    out_arr = np.empty(nq, dtype=np.int64)
    cdef cnp.int64_t[::1] out = out_arr
    cdef double best, d2, diff
    cdef Py_ssize_t i, j, k, arg
    with nogil:
        for i in range(nq):
            best = -1.0
            arg = 0
            for j in range(npts):
                d2 = 0.0
                for k in range(dim):
                    diff = query[i, k] - points[j, k]
                    d2 += diff * diff
                if best < 0.0 or d2 < best:
                    best = d2
                    arg = j
            out[i] = arg
    return out_arr


def vertex_normals(const double[:, ::1] vertices, const cnp.int64_t[:, ::1] faces):
    cdef Py_ssize_t nv = vertices.shape[0]
    cdef Py_ssize_t nf = faces.shape[0]
    acc_arr = np.zeros((nv, 3), dtype=np.float64)
    cdef double[:, ::1] acc = acc_arr
    cdef double e1[3]
    cdef double e2[3]
    cdef double c[3]
    cdef double n
    cdef Py_ssize_t f, d, corner
    cdef cnp.int64_t skipped = 0
    with nogil:
        for f in range(nf):
            for d in range(3):
                e1[d] = vertices[faces[f, 1], d] - vertices[faces[f, 0], d]
                e2[d] = vertices[faces[f, 2], d] - vertices[faces[f, 0], d]
            _cross3(e1, e2, c)
            if _dot3(c, c) == 0.0:
                skipped += 1
                continue
            for corner in range(3):
                for d in range(3):
                    acc[faces[f, corner], d] += c[d]
        for f in range(nv):
            n = sqrt(_dot3(&acc[f, 0], &acc[f, 0]))
            if n > 0.0:
                for d in range(3):
                    acc[f, d] /= n
    return acc_arr, int(skipped)
