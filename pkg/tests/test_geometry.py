"""Face/vertex geometry, dihedral angles, Laplacian and mass assembly."""

import numpy as np
import pytest

from meshmlp import (
    Mesh,
    build_edge_adjacency,
    cotangent_laplacian,
    edge_dihedral_angles,
    face_geometry,
    mass_matrix,
    validate_mesh,
    vertex_dihedral_features,
    vertex_normals,
)
from meshmlp.geometry import COT_CLAMP, EPS_AREA, connected_component_labels
from meshmlp.shapes import icosphere, random_convex_mesh

INV_ROOT3 = 1.0 / np.sqrt(3.0)


def equilateral():
    vertices = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.5, np.sqrt(3) / 2, 0.0]])
    return Mesh(vertices, np.array([[0, 1, 2]]))


def right_angle_roof():
    """Two unit triangles meeting at a 90 degree dihedral along the y axis."""
    vertices = np.array(
        [[0.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]
    )
    faces = np.array([[0, 1, 2], [0, 3, 1]])
    return Mesh(vertices, faces)


def edge_fan(angles_deg):
    """Faces sharing the edge (0,0,0)-(0,0,1), wings fanned about it."""
    wings = [
        (np.cos(np.radians(t)), np.sin(np.radians(t)), 0.5) for t in angles_deg
    ]
    vertices = np.array([(0.0, 0.0, 0.0), (0.0, 0.0, 1.0)] + wings)
    faces = np.array([(0, 1, 2 + i) for i in range(len(wings))])
    return Mesh(vertices, faces)


class TestFaceGeometry:
    def test_equilateral_area(self):
        areas, normals, degenerate = face_geometry(equilateral())
        assert areas[0] == pytest.approx(np.sqrt(3) / 4, rel=1e-12)
        np.testing.assert_allclose(normals[0], [0, 0, 1], atol=1e-12)
        assert not degenerate.any()

    def test_degenerate_face_flagged(self):
        # collinear vertices: zero area, fallback normal, floor area
        mesh = Mesh(
            np.array([[0.0, 0, 0], [1.0, 0, 0], [2.0, 0, 0]]), np.array([[0, 1, 2]])
        )
        areas, normals, degenerate = face_geometry(mesh)
        assert degenerate[0]
        assert areas[0] == EPS_AREA
        np.testing.assert_array_equal(normals[0], [0, 0, 1])

    def test_winding_flips_normal(self):
        mesh = equilateral()
        flipped = Mesh(mesh.vertices, mesh.faces[:, ::-1])
        _, n1, _ = face_geometry(mesh)
        _, n2, _ = face_geometry(flipped)
        np.testing.assert_allclose(n1, -n2, atol=1e-12)


class TestVertexNormals:
    def test_cube_corner(self):
        # three equal right triangles with outward normals +x, +y, +z
        vertices = np.array([[1.0, 1, 1], [1.0, 0, 1], [1.0, 1, 0], [0.0, 1, 1]])
        faces = np.array([[0, 1, 2], [0, 2, 3], [0, 3, 1]])
        normals = vertex_normals(Mesh(vertices, faces))
        np.testing.assert_allclose(normals[0], [INV_ROOT3] * 3, atol=1e-12)

    def test_unit_length(self):
        mesh = icosphere(2)
        normals = vertex_normals(mesh)
        np.testing.assert_allclose(np.linalg.norm(normals, axis=1), 1.0, atol=1e-12)

    def test_sphere_normals_point_outward(self):
        mesh = icosphere(2)
        radial = mesh.vertices / np.linalg.norm(mesh.vertices, axis=1, keepdims=True)
        dots = np.einsum("ij,ij->i", vertex_normals(mesh), radial)
        assert dots.min() > 0.99

    def test_isolated_vertex_fallback(self):
        vertices = np.vstack([equilateral().vertices, [[9.0, 9.0, 9.0]]])
        normals = vertex_normals(Mesh(vertices, np.array([[0, 1, 2]])))
        np.testing.assert_array_equal(normals[3], [0, 0, 1])


class TestEdgeAdjacency:
    def test_tetrahedron_edges(self):
        mesh = Mesh(
            np.array([[0.0, 0, 0], [1.0, 0, 0], [0, 1.0, 0], [0, 0, 1.0]]),
            np.array([[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]]),
        )
        adj = build_edge_adjacency(mesh)
        assert adj.edges.shape == (6, 2)
        np.testing.assert_array_equal(adj.counts, 2)
        assert not adj.boundary.any()
        assert not adj.nonmanifold.any()

    def test_rows_sorted(self):
        adj = build_edge_adjacency(icosphere(1))
        assert (adj.edges[:, 0] <= adj.edges[:, 1]).all()
        codes = adj.edges[:, 0] * icosphere(1).n_vertices + adj.edges[:, 1]
        assert (np.diff(codes) > 0).all()

    def test_boundary_and_nonmanifold(self):
        mesh = edge_fan([0.0, 90.0, 180.0])
        adj = build_edge_adjacency(mesh)
        assert adj.nonmanifold.sum() == 1
        assert adj.counts.max() == 3
        assert adj.boundary.sum() == 6


class TestDihedralAngles:
    def test_right_angle(self):
        mesh = right_angle_roof()
        adj = build_edge_adjacency(mesh)
        angles, interior = edge_dihedral_angles(mesh, adj)
        assert interior.sum() == 1
        assert angles[interior][0] == pytest.approx(np.pi / 2, abs=1e-12)

    def test_coplanar_is_zero(self):
        vertices = np.array([[0.0, 0, 0], [1.0, 0, 0], [0.5, 1.0, 0], [0.5, -1.0, 0]])
        faces = np.array([[0, 1, 2], [0, 3, 1]])
        angles, interior = edge_dihedral_angles(Mesh(vertices, faces))
        assert angles[interior][0] == pytest.approx(0.0, abs=1e-7)

    def test_boundary_edges_zero_and_exterior(self):
        angles, interior = edge_dihedral_angles(equilateral())
        assert not interior.any()
        np.testing.assert_array_equal(angles, 0.0)

    def test_nonmanifold_mean_over_pairs(self):
        # wings at 0/45/135 degrees: pairwise normal angles {45, 90, 135},
        # whose mean is exactly pi/2
        mesh = edge_fan([0.0, 45.0, 135.0])
        adj = build_edge_adjacency(mesh)
        angles, interior = edge_dihedral_angles(mesh, adj)
        shared = adj.counts == 3
        assert angles[shared][0] == pytest.approx(np.pi / 2, abs=1e-12)


class TestVertexDihedralFeatures:
    def test_columns(self):
        mesh = right_angle_roof()
        feats = vertex_dihedral_features(mesh)
        assert feats.shape == (4, 4)
        # shared edge vertices see exactly one interior angle: pi/2
        for v in (0, 1):
            np.testing.assert_allclose(
                feats[v], [np.pi / 2, np.pi / 2, np.pi / 2, 0.0], atol=1e-12
            )
        # wing vertices touch no interior edge
        np.testing.assert_array_equal(feats[2], 0.0)
        np.testing.assert_array_equal(feats[3], 0.0)

    def test_mean_min_max_std(self):
        mesh = edge_fan([0.0, 45.0, 135.0])
        feats = vertex_dihedral_features(mesh)
        angle = np.pi / 2
        for v in (0, 1):
            assert feats[v, 0] == pytest.approx(angle)
            assert feats[v, 1] == pytest.approx(angle)
            assert feats[v, 2] == pytest.approx(angle)
            assert feats[v, 3] == pytest.approx(0.0, abs=1e-12)

    def test_min_max_ordering(self):
        rng = np.random.default_rng(5)
        mesh = random_convex_mesh(rng, 40)
        feats = vertex_dihedral_features(mesh)
        assert (feats[:, 1] <= feats[:, 0] + 1e-12).all()
        assert (feats[:, 0] <= feats[:, 2] + 1e-12).all()
        assert (feats[:, 3] >= 0).all()


class TestCotangentLaplacian:
    def test_equilateral_entries(self):
        L = cotangent_laplacian(equilateral()).toarray()
        off = -1.0 / (2.0 * np.sqrt(3.0))  # -cot(60)/2 = -0.288675...
        expected = np.full((3, 3), off)
        np.fill_diagonal(expected, -2 * off)
        np.testing.assert_allclose(L, expected, atol=1e-12)
        assert L[0, 1] == pytest.approx(-0.2886751, abs=1e-7)

    def test_right_triangle_zero_weight(self):
        # edge opposite the right angle gets cot(90)/2 = 0
        vertices = np.array([[0.0, 0, 0], [1.0, 0, 0], [0.0, 1.0, 0]])
        L = cotangent_laplacian(Mesh(vertices, np.array([[0, 1, 2]]))).toarray()
        assert L[1, 2] == pytest.approx(0.0, abs=1e-12)
        assert L[0, 1] == pytest.approx(-0.5, abs=1e-12)
        assert L[0, 2] == pytest.approx(-0.5, abs=1e-12)

    def test_symmetric_rows_sum_zero(self):
        rng = np.random.default_rng(0)
        mesh = random_convex_mesh(rng, 60)
        L = cotangent_laplacian(mesh)
        dense = L.toarray()
        np.testing.assert_allclose(dense, dense.T, atol=1e-12)
        np.testing.assert_allclose(dense.sum(axis=1), 0.0, atol=1e-10)

    def test_positive_semidefinite(self):
        rng = np.random.default_rng(1)
        mesh = random_convex_mesh(rng, 50)
        eigenvalues = np.linalg.eigvalsh(cotangent_laplacian(mesh).toarray())
        assert eigenvalues.min() > -1e-9

    def test_sliver_cotangent_clamped(self):
        # nearly collinear triangle: unclamped cot would be ~1e8
        vertices = np.array([[0.0, 0, 0], [1.0, 0, 0], [0.5, 1e-9, 0.0]])
        L = cotangent_laplacian(Mesh(vertices, np.array([[0, 1, 2]]))).toarray()
        assert np.abs(L).max() <= COT_CLAMP + 1e-9


class TestMassMatrix:
    def test_equilateral_thirds(self):
        M = mass_matrix(equilateral())
        np.testing.assert_allclose(M.diagonal(), np.sqrt(3) / 12.0, atol=1e-12)

    def test_trace_is_total_area(self):
        rng = np.random.default_rng(2)
        mesh = random_convex_mesh(rng, 80)
        areas, _, _ = face_geometry(mesh)
        assert mass_matrix(mesh).diagonal().sum() == pytest.approx(
            areas.sum(), rel=1e-12
        )

    def test_isolated_vertex_gets_floor(self):
        vertices = np.vstack([equilateral().vertices, [[5.0, 5.0, 5.0]]])
        M = mass_matrix(Mesh(vertices, np.array([[0, 1, 2]])))
        diag = M.diagonal()
        assert diag[3] > 0.0
        assert diag[3] < diag[:3].min()

    def test_diagonal_only(self):
        M = mass_matrix(icosphere(1)).tocoo()
        np.testing.assert_array_equal(M.row, M.col)


class TestValidateMesh:
    def test_tetrahedron_watertight(self):
        mesh = Mesh(
            np.array([[0.0, 0, 0], [1.0, 0, 0], [0, 1.0, 0], [0, 0, 1.0]]),
            np.array([[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]]),
        )
        report = validate_mesh(mesh)
        assert report.watertight and report.edge_manifold
        assert report.n_components == 1
        assert report.n_boundary_edges == 0
        assert report.n_isolated_vertices == 0

    def test_single_triangle_boundary(self):
        report = validate_mesh(equilateral())
        assert not report.watertight
        assert report.n_boundary_edges == 3
        assert report.edge_manifold

    def test_two_components(self):
        vertices = np.vstack(
            [equilateral().vertices, equilateral().vertices + [[10.0, 0, 0]]]
        )
        faces = np.array([[0, 1, 2], [3, 4, 5]])
        report = validate_mesh(Mesh(vertices, faces))
        assert report.n_components == 2

    def test_nonmanifold_reported(self):
        report = validate_mesh(edge_fan([0.0, 90.0, 180.0]))
        assert report.n_nonmanifold_edges == 1
        assert not report.edge_manifold
        assert not report.watertight

    def test_isolated_vertex_not_a_component(self):
        vertices = np.vstack([equilateral().vertices, [[5.0, 5, 5]]])
        report = validate_mesh(Mesh(vertices, np.array([[0, 1, 2]])))
        assert report.n_isolated_vertices == 1
        assert report.n_components == 1

    def test_degenerate_count(self):
        vertices = np.array([[0.0, 0, 0], [1.0, 0, 0], [2.0, 0, 0], [0, 1.0, 0]])
        faces = np.array([[0, 1, 3], [0, 1, 2]])
        report = validate_mesh(Mesh(vertices, faces))
        assert report.n_degenerate_faces == 1

    def test_component_labels_isolated_own_id(self):
        vertices = np.vstack([equilateral().vertices, [[5.0, 5, 5]]])
        labels = connected_component_labels(Mesh(vertices, np.array([[0, 1, 2]])))
        assert labels[0] == labels[1] == labels[2]
        assert labels[3] != labels[0]

    def test_report_to_dict(self):
        report = validate_mesh(equilateral())
        d = report.to_dict()
        assert d["n_faces"] == 1 and d["n_vertices"] == 3
