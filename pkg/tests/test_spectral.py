"""Eigenbasis properties, projections, and map conversions."""

import numpy as np
import pytest

from jacdeform import (
    FunctionalMap,
    PointwiseMap,
    build_operators,
    compute_eigenbasis,
    fmap_from_p2p,
    p2p_from_fmap,
    pullback_coordinates,
    shapes,
    soft_map_and_fmap,
    spectral_project,
)
from jacdeform.spectral import load_basis, save_basis

from conftest import random_permutation


class TestEigenbasis:
    def test_orthonormality(self, sphere_basis):
        gram = sphere_basis.evecs.T @ (
            sphere_basis.mass[:, None] * sphere_basis.evecs
        )
        assert np.abs(gram - np.eye(sphere_basis.k)).max() <= 1e-8

    def test_eigen_residual(self, sphere_ops, sphere_basis):
        lhs = sphere_ops.laplacian @ sphere_basis.evecs
        rhs = sphere_basis.mass[:, None] * sphere_basis.evecs * sphere_basis.evals
        scale = np.abs(lhs).max(axis=0) + sphere_basis.evals[-1]
        per_column = np.abs(lhs - rhs).max(axis=0) / scale
        assert per_column.max() <= 1e-6

    def test_first_eigenpair_constant(self, sphere_basis, sphere):
        assert sphere_basis.evals[0] <= 1e-8 * sphere_basis.evals[-1]
        expected = 1.0 / np.sqrt(sphere.total_area())
        np.testing.assert_allclose(
            np.abs(sphere_basis.evecs[:, 0]), expected, rtol=1e-8
        )

    def test_sphere_degenerate_triple(self):
        mesh = shapes.icosphere(4)  # 2562 vertices
        basis = compute_eigenbasis(build_operators(mesh), 4)
        triple = basis.evals[1:4]
        assert triple.max() / triple.min() <= 1.05
        assert triple.mean() == pytest.approx(2.0, rel=0.05)

    def test_full_basis_completeness(self):
        mesh = shapes.uv_sphere(4, 5)  # 22 vertices
        ops = build_operators(mesh)
        basis = compute_eigenbasis(ops, mesh.n_vertices)
        projector = basis.evecs @ (basis.evecs.T * basis.mass[None, :])
        assert np.abs(projector - np.eye(mesh.n_vertices)).max() <= 1e-8

    def test_k_out_of_range(self, sphere_ops):
        with pytest.raises(ValueError):
            compute_eigenbasis(sphere_ops, 0)
        with pytest.raises(ValueError):
            compute_eigenbasis(sphere_ops, sphere_ops.mesh.n_vertices + 1)

    def test_sign_convention(self, sphere_basis):
        for j in range(sphere_basis.k):
            column = sphere_basis.evecs[:, j]
            assert column[np.argmax(np.abs(column))] > 0

    def test_deterministic(self, sphere_ops):
        a = compute_eigenbasis(sphere_ops, 10)
        b = compute_eigenbasis(sphere_ops, 10)
        np.testing.assert_array_equal(a.evecs, b.evecs)

    def test_iterative_path_matches_dense_on_generic_mesh(self, monkeypatch):
        # A warped mesh has simple eigenvalues, so both solver paths must
        # agree after sign fixing (degenerate multiplets would not).
        import jacdeform.spectral as spectral_module

        mesh = shapes.icosphere(3).with_vertices(
            shapes.smooth_warp(shapes.icosphere(3).vertices, seed=6, amplitude=0.15)
        )
        ops = build_operators(mesh)
        dense = compute_eigenbasis(ops, 20)
        monkeypatch.setattr(spectral_module, "DENSE_EIGENSOLVE_LIMIT", 1)
        monkeypatch.setattr(spectral_module, "DENSE_FRACTION_LIMIT", 1)
        iterative = compute_eigenbasis(ops, 20)
        np.testing.assert_allclose(iterative.evals, dense.evals, atol=1e-10)
        np.testing.assert_allclose(iterative.evecs, dense.evecs, atol=1e-7)
        gram = iterative.evecs.T @ (iterative.mass[:, None] * iterative.evecs)
        assert np.abs(gram - np.eye(20)).max() <= 1e-8

    def test_cache_roundtrip(self, sphere_basis, tmp_path):
        path = tmp_path / "basis.bin"
        save_basis(path, sphere_basis)
        loaded = load_basis(path)
        np.testing.assert_array_equal(loaded.evecs, sphere_basis.evecs)
        np.testing.assert_array_equal(loaded.evals, sphere_basis.evals)
        np.testing.assert_array_equal(loaded.mass, sphere_basis.mass)


class TestProjection:
    def test_constant_preserved(self, sphere_basis):
        constant = np.full(sphere_basis.n_vertices, 3.25)
        np.testing.assert_allclose(
            spectral_project(sphere_basis, constant), constant, atol=1e-10
        )

    def test_idempotent(self, sphere_basis):
        rng = np.random.default_rng(0)
        signal = rng.normal(size=(sphere_basis.n_vertices, 3))
        once = spectral_project(sphere_basis, signal)
        twice = spectral_project(sphere_basis, once)
        np.testing.assert_allclose(once, twice, atol=1e-10)

    def test_full_basis_identity(self):
        mesh = shapes.uv_sphere(4, 5)
        ops = build_operators(mesh)
        basis = compute_eigenbasis(ops, mesh.n_vertices)
        rng = np.random.default_rng(1)
        signal = rng.normal(size=(mesh.n_vertices, 2))
        np.testing.assert_allclose(
            spectral_project(basis, signal), signal, atol=1e-8
        )

    def test_projector_fixes_basis(self, sphere_basis):
        projected = spectral_project(sphere_basis, sphere_basis.evecs)
        np.testing.assert_allclose(projected, sphere_basis.evecs, atol=1e-10)

    def test_energy_monotone_in_k(self, sphere_ops):
        basis = compute_eigenbasis(sphere_ops, 40)
        rng = np.random.default_rng(2)
        signal = rng.normal(size=sphere_ops.mesh.n_vertices)
        errors = []
        for k in (5, 10, 20, 40):
            truncated = basis.truncated(k)
            residual = signal - spectral_project(truncated, signal)
            errors.append(np.sqrt(residual @ (basis.mass * residual)))
        assert all(a >= b - 1e-12 for a, b in zip(errors, errors[1:]))

    def test_dimension_mismatch(self, sphere_basis):
        with pytest.raises(ValueError):
            spectral_project(sphere_basis, np.zeros((3, 3)))


class TestMapConversions:
    def test_identity_fmap(self, sphere, sphere_basis):
        identity = PointwiseMap.hard(np.arange(sphere.n_vertices), sphere.n_vertices)
        fmap = fmap_from_p2p(identity, sphere_basis, sphere_basis)
        assert np.abs(fmap.matrix - np.eye(sphere_basis.k)).max() <= 1e-8

    def test_permuted_pair_orthogonal(self, warped_sphere):
        # A warped sphere has a generic spectrum, so truncation cannot cut
        # a degenerate multiplet inconsistently between the two copies.
        mesh1 = warped_sphere
        n = mesh1.n_vertices
        perm = random_permutation(n, seed=5)
        inverse = np.argsort(perm)
        mesh2 = type(mesh1)(mesh1.vertices[perm], inverse[mesh1.faces])
        basis1 = compute_eigenbasis(build_operators(mesh1), 20)
        basis2 = compute_eigenbasis(build_operators(mesh2), 20)
        p2p = PointwiseMap.hard(inverse, n)
        fmap = fmap_from_p2p(p2p, basis1, basis2)
        gram = fmap.matrix.T @ fmap.matrix
        assert np.abs(gram - np.eye(20)).max() <= 1e-6

    def test_constant_row_and_column(self, sphere, sphere_basis):
        identity = PointwiseMap.hard(np.arange(sphere.n_vertices), sphere.n_vertices)
        fmap = fmap_from_p2p(identity, sphere_basis, sphere_basis)
        unit = np.zeros(sphere_basis.k)
        unit[0] = 1.0
        np.testing.assert_allclose(fmap.matrix[0], unit, atol=1e-8)
        np.testing.assert_allclose(fmap.matrix[:, 0], unit, atol=1e-8)

    def test_full_basis_roundtrip_exact(self):
        mesh = shapes.uv_sphere(6, 9)  # 56 vertices
        warped = mesh.with_vertices(
            shapes.smooth_warp(mesh.vertices, seed=3, amplitude=0.1)
        )
        ops1, ops2 = build_operators(mesh), build_operators(warped)
        k = mesh.n_vertices
        basis1 = compute_eigenbasis(ops1, k)
        basis2 = compute_eigenbasis(ops2, k)
        rng = np.random.default_rng(4)
        p2p = PointwiseMap.hard(rng.permutation(k), k)
        fmap = fmap_from_p2p(p2p, basis1, basis2)
        back = p2p_from_fmap(fmap, basis1, basis2)
        np.testing.assert_array_equal(back.indices, p2p.indices)

    def test_truncated_roundtrip_mostly_exact(self):
        # Relabeled copy of a 47-vertex mesh; oracle run measured 100%
        # recovery at k=10, frozen here as the >= 90% bound.
        base = shapes.uv_sphere(6, 9)
        mesh1 = base.with_vertices(
            shapes.smooth_warp(base.vertices, seed=1, amplitude=0.1)
        )
        n = mesh1.n_vertices
        rng = np.random.default_rng(7)
        perm = rng.permutation(n)
        inverse = np.argsort(perm)
        mesh2 = type(mesh1)(mesh1.vertices[perm], inverse[mesh1.faces])
        basis1 = compute_eigenbasis(build_operators(mesh1), 10)
        basis2 = compute_eigenbasis(build_operators(mesh2), 10)
        p2p = PointwiseMap.hard(inverse, n)
        fmap = fmap_from_p2p(p2p, basis1, basis2)
        back = p2p_from_fmap(fmap, basis1, basis2)
        recovered = (back.indices == inverse).mean()
        assert recovered >= 0.9

    def test_identity_full_roundtrip(self, sphere, sphere_basis):
        fmap = FunctionalMap(np.eye(sphere_basis.k))
        back = p2p_from_fmap(fmap, sphere_basis, sphere_basis)
        mismatches = (back.indices != np.arange(sphere.n_vertices)).sum()
        assert mismatches == 0

    def test_argmin_scale_invariance(self, sphere_basis):
        rng = np.random.default_rng(9)
        fmap = FunctionalMap(
            np.eye(sphere_basis.k) + 0.01 * rng.normal(size=(sphere_basis.k,) * 2)
        )
        a = p2p_from_fmap(fmap, sphere_basis, sphere_basis)
        scaled = FunctionalMap(fmap.matrix.copy())
        # scaling all rows of both embeddings together keeps the argmin
        big_basis = type(sphere_basis)(
            sphere_basis.evecs * 3.7, sphere_basis.evals, sphere_basis.mass
        )
        b = p2p_from_fmap(scaled, big_basis, big_basis)
        np.testing.assert_array_equal(a.indices, b.indices)


class TestPullback:
    def test_identity_full_basis(self):
        mesh = shapes.uv_sphere(5, 7)
        ops = build_operators(mesh)
        basis = compute_eigenbasis(ops, mesh.n_vertices)
        fmap = FunctionalMap(np.eye(mesh.n_vertices))
        pulled = pullback_coordinates(fmap, basis, basis, mesh.vertices)
        np.testing.assert_allclose(pulled, mesh.vertices, atol=1e-8)

    def test_identity_truncated_equals_projection(self, sphere, sphere_basis):
        fmap = FunctionalMap(np.eye(sphere_basis.k))
        pulled = pullback_coordinates(fmap, sphere_basis, sphere_basis, sphere.vertices)
        projected = spectral_project(sphere_basis, sphere.vertices)
        np.testing.assert_allclose(pulled, projected, atol=1e-10)

    def test_permuted_pair_consistency(self, sphere, sphere_basis):
        perm = random_permutation(sphere.n_vertices, seed=13)
        inverse = np.argsort(perm)
        permuted = type(sphere)(sphere.vertices[perm], inverse[sphere.faces])
        ops2 = build_operators(permuted)
        basis2 = compute_eigenbasis(ops2, sphere_basis.k)
        p2p = PointwiseMap.hard(perm, sphere.n_vertices)
        fmap = fmap_from_p2p(p2p, basis2, sphere_basis)
        pulled = pullback_coordinates(fmap, basis2, sphere_basis, sphere.vertices)
        direct = spectral_project(basis2, sphere.vertices[perm])
        assert np.abs(pulled - direct).max() <= 1e-6


class TestSoftMap:
    def test_identical_features_uniform(self, sphere_basis):
        features = np.ones((sphere_basis.n_vertices, 8))
        soft, _ = soft_map_and_fmap(
            features, features, 0.07, sphere_basis, sphere_basis
        )
        np.testing.assert_allclose(
            soft.matrix, 1.0 / sphere_basis.n_vertices, atol=1e-12
        )

    def test_low_temperature_approaches_argmax(self, sphere_basis):
        # Unit-norm features: similarity argmax is then the matching row.
        rng = np.random.default_rng(11)
        n = sphere_basis.n_vertices
        features2 = rng.normal(size=(n, 6))
        features2 /= np.linalg.norm(features2, axis=1, keepdims=True)
        picks = rng.integers(0, n, size=n)
        features1 = features2[picks]
        hard_argmax = np.argmax(features1 @ features2.T, axis=1)
        soft, _ = soft_map_and_fmap(
            features1, features2, 1e-6, sphere_basis, sphere_basis
        )
        one_hot = np.zeros((n, n))
        one_hot[np.arange(n), hard_argmax] = 1.0
        np.testing.assert_array_equal(hard_argmax, picks)
        assert np.abs(soft.matrix - one_hot).max() <= 1e-6

    def test_fmap_matches_direct_evaluation(self, sphere_basis):
        rng = np.random.default_rng(12)
        n = sphere_basis.n_vertices
        f1 = rng.normal(size=(n, 5))
        f2 = rng.normal(size=(n, 5))
        soft, fmap = soft_map_and_fmap(f1, f2, 0.07, sphere_basis, sphere_basis)
        direct = sphere_basis.evecs.T @ (
            sphere_basis.mass[:, None] * (soft.matrix @ sphere_basis.evecs)
        )
        np.testing.assert_allclose(fmap.matrix, direct, atol=1e-12)

    def test_non_positive_temperature(self, sphere_basis):
        features = np.ones((sphere_basis.n_vertices, 4))
        with pytest.raises(ValueError):
            soft_map_and_fmap(features, features, 0.0, sphere_basis, sphere_basis)

    def test_soft_rows_validated(self):
        with pytest.raises(ValueError):
            PointwiseMap.soft(np.array([[0.5, 0.4]]))
        with pytest.raises(ValueError):
            PointwiseMap.soft(np.array([[-0.1, 1.1]]))
