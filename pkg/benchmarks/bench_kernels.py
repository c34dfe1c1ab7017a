#!/usr/bin/env python3
"""Benchmark the compiled kernel core against the NumPy fallback.

Run: ``python3 benchmarks/bench_kernels.py [--subdivisions 5]``
"""

import argparse
import time

import numpy as np

from jacdeform import shapes
from jacdeform._kernels import _ref


def load_compiled():
    try:
        from jacdeform._kernels import _speedups

        return _speedups
    except ImportError:
        return None


def time_call(fn, *args, repeats=5):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - start)
    return best


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--subdivisions", type=int, default=5,
                        help="icosphere subdivision level (5 = 10k vertices)")
    args = parser.parse_args()

    compiled = load_compiled()
    if compiled is None:
        print("compiled kernels unavailable; benchmarking the fallback only")

    mesh = shapes.icosphere(args.subdivisions)
    vertices = np.ascontiguousarray(
        shapes.smooth_warp(mesh.vertices, seed=1, amplitude=0.1)
    )
    faces = mesh.faces
    warped = np.ascontiguousarray(shapes.smooth_warp(vertices, seed=2, amplitude=0.1))
    frames_a = _ref.face_frames(vertices, faces)
    frames_b = _ref.face_frames(warped, faces)
    rng = np.random.default_rng(0)
    query = rng.normal(size=(4000, 3))
    points = rng.normal(size=(4000, 3))

    cases = [
        ("face_areas_normals", (vertices, faces)),
        ("cot_laplacian_triplets", (vertices, faces)),
        ("lumped_mass", (vertices, faces)),
        ("face_frames", (vertices, faces)),
        ("compose_jacobians", (frames_a, frames_b)),
        ("det3_batch", (frames_a,)),
        ("vertex_normals", (vertices, faces)),
        ("nn_search", (query, points)),
    ]

    print(f"mesh: {len(vertices)} vertices, {len(faces)} faces")
    header = f"{'kernel':24s} {'numpy':>10s}"
    if compiled:
        header += f" {'cython':>10s} {'speedup':>8s}"
    print(header)
    for name, call_args in cases:
        numpy_time = time_call(getattr(_ref, name), *call_args)
        line = f"{name:24s} {numpy_time * 1e3:9.2f}ms"
        if compiled:
            compiled_time = time_call(getattr(compiled, name), *call_args)
            line += f" {compiled_time * 1e3:9.2f}ms {numpy_time / compiled_time:7.1f}x"
        print(line)


if __name__ == "__main__":
    main()
