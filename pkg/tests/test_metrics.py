"""Map metrics: oracles, the zero/identity lattice, and scale invariance."""

import numpy as np
import pytest
from scipy.sparse.csgraph import dijkstra

from jacdeform import (
    JacobianField,
    PointwiseMap,
    build_operators,
    face_frames,
    jacobian_between,
    shapes,
)
from jacdeform.metrics import (
    MapReport,
    coverage,
    dirichlet_energy,
    evaluate_map,
    geodesic_error,
    inversion_rate,
    symmetric_dirichlet,
    symmetric_dirichlet_per_face,
    _edge_graph,
    _unit_area_vertices,
)


def identity_map(mesh):
    return PointwiseMap.hard(np.arange(mesh.n_vertices), mesh.n_vertices)


class TestGeodesicError:
    def test_identity_zero(self, sphere):
        gt = identity_map(sphere)
        assert geodesic_error(gt, gt, sphere) == 0.0

    def test_single_adjacent_swap(self, sphere):
        gt = identity_map(sphere)
        # move vertex 0 to one of its edge neighbors
        neighbor = int(sphere.faces[np.nonzero(sphere.faces == 0)[0][0], 1])
        if neighbor == 0:
            neighbor = int(sphere.faces[0, 2])
        wrong = gt.indices.copy()
        wrong[0] = neighbor
        mapped = PointwiseMap.hard(wrong, sphere.n_vertices)
        vertices = _unit_area_vertices(sphere.vertices, sphere.faces)
        edge_length = np.linalg.norm(vertices[0] - vertices[neighbor])
        expected = 100.0 * edge_length / sphere.n_vertices
        assert geodesic_error(mapped, gt, sphere) == pytest.approx(expected, rel=1e-10)

    def test_swap_adds_two_paths(self, sphere):
        gt = identity_map(sphere)
        wrong = gt.indices.copy()
        a, b = 3, 77
        wrong[a], wrong[b] = wrong[b], wrong[a]
        mapped = PointwiseMap.hard(wrong, sphere.n_vertices)
        vertices = _unit_area_vertices(sphere.vertices, sphere.faces)
        graph = _edge_graph(vertices, sphere.faces)
        dist = dijkstra(graph, directed=False, indices=[a, b])
        expected = 100.0 * (dist[0, b] + dist[1, a]) / sphere.n_vertices
        assert geodesic_error(mapped, gt, sphere) == pytest.approx(expected, rel=1e-10)

    def test_disconnected_target_rejected(self):
        one = shapes.icosphere(0)
        two = type(one)(
            np.vstack([one.vertices, one.vertices + [4.0, 0, 0]]),
            np.vstack([one.faces, one.faces + one.n_vertices]),
        )
        gt = identity_map(two)
        with pytest.raises(ValueError, match="components"):
            geodesic_error(gt, gt, two)


class TestInversion:
    def test_identity_zero(self, sphere):
        assert inversion_rate(identity_map(sphere), sphere, sphere) == 0.0

    def test_reflection_inverts_closed_convex(self):
        mesh = shapes.icosphere(2)
        reflected = mesh.vertices * np.array([1.0, 1.0, -1.0])
        # map every vertex to the nearest vertex of its mirror image
        from jacdeform.spectral import nearest_neighbor_indices

        indices = nearest_neighbor_indices(reflected, mesh.vertices)
        p2p = PointwiseMap.hard(indices, mesh.n_vertices)
        rate = inversion_rate(p2p, mesh, mesh)
        assert rate >= 95.0

    def test_partial_corruption_frozen(self):
        # Oracle run on this construction measured 16.05%; frozen bounds.
        mesh = shapes.icosphere(2)
        rng = np.random.default_rng(14)
        indices = np.arange(mesh.n_vertices)
        sample = rng.choice(mesh.n_vertices, mesh.n_vertices // 20, replace=False)
        indices[sample] = rng.integers(0, mesh.n_vertices, len(sample))
        p2p = PointwiseMap.hard(indices, mesh.n_vertices)
        rate = inversion_rate(p2p, mesh, mesh)
        assert 0.0 < rate < 100.0


class TestDirichlet:
    def test_constant_map_zero(self, sphere, sphere_ops):
        constant = PointwiseMap.hard(
            np.zeros(sphere.n_vertices, dtype=np.int64), sphere.n_vertices
        )
        assert abs(dirichlet_energy(constant, sphere_ops, sphere.vertices)) <= 1e-12

    def test_identity_equals_direct_form(self, sphere, sphere_ops):
        energy = dirichlet_energy(identity_map(sphere), sphere_ops, sphere.vertices)
        y = _unit_area_vertices(sphere.vertices, sphere.faces)
        direct = float(np.sum(y * (sphere_ops.laplacian @ y)))
        assert energy == pytest.approx(direct, rel=1e-12)

    def test_translation_invariant(self, sphere, sphere_ops):
        gt = identity_map(sphere)
        a = dirichlet_energy(gt, sphere_ops, sphere.vertices)
        b = dirichlet_energy(gt, sphere_ops, sphere.vertices + [100.0, 0.0, 0.0])
        # translation interacts with unit-area normalization only through
        # the constant offset, which the stiffness matrix annihilates
        assert a == pytest.approx(b, rel=1e-9)


class TestCoverage:
    def test_bijection_full(self, sphere, sphere_ops):
        assert coverage(identity_map(sphere), sphere_ops.mass_diagonal) == pytest.approx(100.0)

    def test_all_to_one(self, sphere, sphere_ops):
        masses = sphere_ops.mass_diagonal
        j = 17
        constant = PointwiseMap.hard(
            np.full(sphere.n_vertices, j, dtype=np.int64), sphere.n_vertices
        )
        expected = 100.0 * masses[j] / masses.sum()
        assert coverage(constant, masses) == pytest.approx(expected, rel=1e-12)

    def test_half_coverage_on_uniform_mesh(self, sphere, sphere_ops):
        n = sphere.n_vertices
        half = np.arange(n) % (n // 2)
        p2p = PointwiseMap.hard(half, n)
        value = coverage(p2p, sphere_ops.mass_diagonal)
        masses = sphere_ops.mass_diagonal
        expected = 100.0 * masses[: n // 2].sum() / masses.sum()
        assert value == pytest.approx(expected, rel=1e-12)
        assert value == pytest.approx(50.0, abs=6.0)


class TestSymmetricDirichlet:
    def test_identity_energy_four(self, sphere, sphere_frames):
        value, flagged = symmetric_dirichlet(
            JacobianField.identity(sphere.n_faces), sphere_frames, sphere.face_areas()
        )
        assert value == pytest.approx(4.0, rel=1e-12)
        assert flagged == 0

    def test_rotation_invariant(self, sphere, sphere_frames):
        rotation = shapes.random_rotation(71)
        field = jacobian_between(
            sphere_frames, face_frames(sphere.vertices @ rotation.T, sphere.faces)
        )
        value, _ = symmetric_dirichlet(field, sphere_frames, sphere.face_areas())
        assert value == pytest.approx(4.0, rel=1e-10)

    def test_in_plane_scale_closed_form(self):
        mesh = shapes.single_triangle()
        frames = face_frames(mesh)
        s = 1.7
        scaled = face_frames(mesh.vertices * s, mesh.faces)
        field = jacobian_between(frames, scaled)
        value, _ = symmetric_dirichlet(field, frames, mesh.face_areas())
        assert value == pytest.approx(2 * s**2 + 2 / s**2, rel=1e-12)

    def test_reporting_scale(self, sphere, sphere_frames):
        value, _ = symmetric_dirichlet(
            JacobianField.identity(sphere.n_faces), sphere_frames,
            sphere.face_areas(), scale=1e-2,
        )
        assert value == pytest.approx(0.04, rel=1e-12)

    def test_singular_faces_flagged(self, sphere, sphere_frames):
        mats = np.broadcast_to(np.eye(3), (sphere.n_faces, 3, 3)).copy()
        mats[5] = 0.0
        energies, flagged = symmetric_dirichlet_per_face(
            JacobianField(mats), sphere_frames
        )
        assert flagged[5]
        assert np.isnan(energies[5])
        value, n_flagged = symmetric_dirichlet(
            JacobianField(mats), sphere_frames, sphere.face_areas()
        )
        assert n_flagged == 1
        assert value == pytest.approx(4.0, rel=1e-12)


class TestLatticeAndScaling:
    def test_zero_identity_lattice(self, sphere, sphere_ops):
        gt = identity_map(sphere)
        constant = PointwiseMap.hard(
            np.zeros(sphere.n_vertices, dtype=np.int64), sphere.n_vertices
        )
        assert geodesic_error(gt, gt, sphere) == 0.0
        assert coverage(gt, sphere_ops.mass_diagonal) == pytest.approx(100.0)
        assert inversion_rate(gt, sphere, sphere) == 0.0
        assert abs(dirichlet_energy(constant, sphere_ops, sphere.vertices)) <= 1e-12

    def test_scale_invariance(self, sphere, sphere_ops, warped_sphere):
        rng = np.random.default_rng(15)
        indices = rng.integers(0, sphere.n_vertices, sphere.n_vertices)
        p2p = PointwiseMap.hard(indices, sphere.n_vertices)
        gt = identity_map(sphere)
        factor = 3.7
        big_source = sphere.with_vertices(sphere.vertices * factor)
        big_target = warped_sphere.with_vertices(warped_sphere.vertices * factor)
        big_ops = build_operators(big_source)

        a = evaluate_map(p2p, gt, sphere, sphere_ops, warped_sphere)
        b = evaluate_map(p2p, gt, big_source, big_ops, big_target)
        assert a.geodesic_error == pytest.approx(b.geodesic_error, rel=1e-8)
        assert a.inversion_pct == pytest.approx(b.inversion_pct, abs=1e-12)
        assert a.dirichlet_energy == pytest.approx(b.dirichlet_energy, rel=1e-8)
        assert a.coverage_pct == pytest.approx(b.coverage_pct, rel=1e-8)

    def test_relabeling_invariance(self, sphere, sphere_ops, warped_sphere):
        rng = np.random.default_rng(16)
        n = sphere.n_vertices
        indices = rng.integers(0, n, n)
        p2p = PointwiseMap.hard(indices, n)
        gt = identity_map(sphere)
        report = evaluate_map(p2p, gt, sphere, sphere_ops, warped_sphere)

        perm = rng.permutation(n)
        inverse = np.argsort(perm)
        relabeled_target = type(sphere)(
            warped_sphere.vertices[perm], inverse[warped_sphere.faces]
        )
        p2p_r = PointwiseMap.hard(inverse[indices], n)
        gt_r = PointwiseMap.hard(inverse[np.arange(n)], n)
        report_r = evaluate_map(p2p_r, gt_r, sphere, sphere_ops, relabeled_target)
        assert report.geodesic_error == pytest.approx(report_r.geodesic_error, rel=1e-9)
        assert report.inversion_pct == pytest.approx(report_r.inversion_pct, abs=1e-12)
        assert report.coverage_pct == pytest.approx(report_r.coverage_pct, rel=1e-9)

    def test_report_serialization(self):
        report = MapReport(1.5, 2.0, 3.0, 80.0)
        import json

        data = json.loads(report.to_json())
        assert data["coverage_pct"] == 80.0
