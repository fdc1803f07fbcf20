"""Discrete differential geometry on triangle meshes.

All operators here tolerate imperfect meshes. Degenerate faces are
given a floor area and an arbitrary normal, sliver angles have their
cotangents clamped, and boundary or non-manifold edges are carried
through with flags instead of exceptions. The numbers that feed the
learning pipeline must exist for every mesh a scanner can produce.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components as _csgraph_components

from .mesh import Mesh

# Floor for face areas and mass entries; slivers below this count as degenerate.
EPS_AREA = 1e-12
# Corner angles are clamped to [EPS_ANGLE, pi - EPS_ANGLE] via their cotangent.
EPS_ANGLE = 1e-4
COT_CLAMP = float(np.cos(EPS_ANGLE) / np.sin(EPS_ANGLE))
FALLBACK_NORMAL = np.array([0.0, 0.0, 1.0])


def face_geometry(mesh: Mesh) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-face areas and unit normals.

    Returns (areas, normals, degenerate) where degenerate marks faces
    whose true area fell below EPS_AREA; those faces get area EPS_AREA
    and the fallback normal so downstream sums stay finite.
    """
    v = mesh.vertices
    f = mesh.faces
    cross = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
    double_area = np.linalg.norm(cross, axis=1)
    areas = 0.5 * double_area
    degenerate = areas < EPS_AREA
    areas = np.where(degenerate, EPS_AREA, areas)
    normals = np.empty_like(cross)
    safe = ~degenerate
    normals[safe] = cross[safe] / double_area[safe, None]
    normals[degenerate] = FALLBACK_NORMAL
    return areas, normals, degenerate


def vertex_normals(mesh: Mesh) -> np.ndarray:
    """Area-weighted average of incident face normals, unit length.

    Vertices with no incident faces, or whose incident normals cancel
    exactly, fall back to +z.
    """
    areas, normals, _ = face_geometry(mesh)
    acc = np.zeros((mesh.n_vertices, 3))
    weighted = normals * areas[:, None]
    for corner in range(3):
        np.add.at(acc, mesh.faces[:, corner], weighted)
    norms = np.linalg.norm(acc, axis=1)
    ok = norms > 1e-20
    out = np.tile(FALLBACK_NORMAL, (mesh.n_vertices, 1))
    out[ok] = acc[ok] / norms[ok, None]
    return out


@dataclass
class EdgeAdjacency:
    """Undirected edges of a mesh and the faces touching each one.

    edges: (E, 2) int64, each row sorted low-high, rows in lexicographic order.
    edge_faces: per-edge arrays of incident face indices.
    counts: (E,) number of incident faces.
    """

    edges: np.ndarray
    edge_faces: list[np.ndarray]
    counts: np.ndarray

    @property
    def boundary(self) -> np.ndarray:
        return self.counts == 1

    @property
    def nonmanifold(self) -> np.ndarray:
        return self.counts > 2


def build_edge_adjacency(mesh: Mesh) -> EdgeAdjacency:
    f = mesh.faces
    n = mesh.n_vertices
    halfedges = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    halfedges.sort(axis=1)
    face_of = np.tile(np.arange(f.shape[0]), 3)
    # encode each undirected edge as a single integer for grouping
    codes = halfedges[:, 0] * np.int64(n) + halfedges[:, 1]
    order = np.argsort(codes, kind="stable")
    codes_sorted = codes[order]
    unique_codes, starts, counts = np.unique(
        codes_sorted, return_index=True, return_counts=True
    )
    edges = np.stack([unique_codes // n, unique_codes % n], axis=1)
    grouped = face_of[order]
    edge_faces = [
        grouped[start : start + count] for start, count in zip(starts, counts)
    ]
    return EdgeAdjacency(edges.astype(np.int64), edge_faces, counts.astype(np.int64))


def edge_dihedral_angles(
    mesh: Mesh, adjacency: EdgeAdjacency | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Angle between face normals across each edge, in [0, pi].

    Interior edges with exactly two faces use those two normals.
    Non-manifold edges average over every unordered pair of incident
    faces. Boundary edges get angle 0 and interior=False.

    Returns (angles, interior) aligned with adjacency.edges.
    """
    if adjacency is None:
        adjacency = build_edge_adjacency(mesh)
    _, normals, _ = face_geometry(mesh)
    angles = np.zeros(adjacency.edges.shape[0])
    interior = adjacency.counts >= 2
    for e in np.nonzero(interior)[0]:
        ns = normals[adjacency.edge_faces[e]]
        dots = np.clip(ns @ ns.T, -1.0, 1.0)
        iu = np.triu_indices(ns.shape[0], k=1)
        angles[e] = np.arccos(dots[iu]).mean()
    return angles, interior


def vertex_dihedral_features(
    mesh: Mesh, adjacency: EdgeAdjacency | None = None
) -> np.ndarray:
    """(n, 4) per-vertex summary of incident interior-edge dihedral angles.

    Columns are mean, min, max, and population standard deviation.
    Vertices without any interior edge (isolated, or only boundary
    edges) get all four set to 0.
    """
    if adjacency is None:
        adjacency = build_edge_adjacency(mesh)
    angles, interior = edge_dihedral_angles(mesh, adjacency)
    n = mesh.n_vertices

    ends = adjacency.edges[interior].ravel()
    vals = np.repeat(angles[interior], 2)
    count = np.zeros(n)
    total = np.zeros(n)
    total_sq = np.zeros(n)
    low = np.full(n, np.inf)
    high = np.full(n, -np.inf)
    np.add.at(count, ends, 1.0)
    np.add.at(total, ends, vals)
    np.add.at(total_sq, ends, vals * vals)
    np.minimum.at(low, ends, vals)
    np.maximum.at(high, ends, vals)

    out = np.zeros((n, 4))
    touched = count > 0
    mean = total[touched] / count[touched]
    var = np.maximum(total_sq[touched] / count[touched] - mean * mean, 0.0)
    out[touched, 0] = mean
    out[touched, 1] = low[touched]
    out[touched, 2] = high[touched]
    out[touched, 3] = np.sqrt(var)
    return out


def _corner_cotangents(mesh: Mesh) -> np.ndarray:
    """(F, 3) clamped cotangents of the angles at corners 0, 1, 2."""
    v = mesh.vertices
    f = mesh.faces
    cots = np.empty((f.shape[0], 3))
    for corner in range(3):
        a = v[f[:, corner]]
        b = v[f[:, (corner + 1) % 3]]
        c = v[f[:, (corner + 2) % 3]]
        u = b - a
        w = c - a
        cross = np.linalg.norm(np.cross(u, w), axis=1)
        dot = np.einsum("ij,ij->i", u, w)
        with np.errstate(divide="ignore", invalid="ignore"):
            cot = dot / cross
        # zero cross product means a fully collapsed corner; treat as sliver
        cot[~np.isfinite(cot)] = COT_CLAMP
        cots[:, corner] = np.clip(cot, -COT_CLAMP, COT_CLAMP)
    return cots


def cotangent_laplacian(mesh: Mesh) -> sp.csr_matrix:
    """Symmetric cotangent stiffness matrix, positive semi-definite.

    Off-diagonal entries are -(cot a + cot b) / 2 over the angles
    opposite each edge, summed over every incident triangle, so
    boundary and non-manifold edges need no special casing. Diagonals
    make each row sum to zero. Cotangents are clamped so sliver
    triangles cannot inject unbounded weights.
    """
    f = mesh.faces
    n = mesh.n_vertices
    halfw = 0.5 * _corner_cotangents(mesh)
    # corner k is opposite the edge (k+1, k+2)
    i = f[:, [1, 2, 0]].ravel()
    j = f[:, [2, 0, 1]].ravel()
    w = halfw.ravel()
    rows = np.concatenate([i, j, i, j])
    cols = np.concatenate([j, i, i, j])
    vals = np.concatenate([-w, -w, w, w])
    lap = sp.coo_matrix((vals, (rows, cols)), shape=(n, n))
    return lap.tocsr()


def mass_matrix(mesh: Mesh) -> sp.csr_matrix:
    """Lumped barycentric vertex masses as a diagonal sparse matrix.

    Each face donates a third of its area to each corner, so the trace
    equals the total surface area. Vertices in no face get a tiny mass
    proportional to the mean vertex mass, keeping the matrix positive
    definite for generalized eigensolves.
    """
    areas, _, _ = face_geometry(mesh)
    n = mesh.n_vertices
    diag = np.zeros(n)
    for corner in range(3):
        np.add.at(diag, mesh.faces[:, corner], areas / 3.0)
    floor = 1e-12 * (areas.sum() / n)
    diag[diag <= 0.0] = floor
    return sp.dia_matrix((diag[None, :], [0]), shape=(n, n)).tocsr()


@dataclass
class MeshReport:
    """Topology and quality summary produced by validate_mesh."""

    n_vertices: int
    n_faces: int
    n_degenerate_faces: int
    n_boundary_edges: int
    n_nonmanifold_edges: int
    n_isolated_vertices: int
    n_components: int
    edge_manifold: bool
    watertight: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def connected_component_labels(mesh: Mesh) -> np.ndarray:
    """Component id per vertex; isolated vertices get their own ids."""
    adjacency = build_edge_adjacency(mesh)
    e = adjacency.edges
    graph = sp.coo_matrix(
        (np.ones(e.shape[0]), (e[:, 0], e[:, 1])),
        shape=(mesh.n_vertices, mesh.n_vertices),
    )
    _, labels = _csgraph_components(graph, directed=False)
    return labels


def validate_mesh(mesh: Mesh) -> MeshReport:
    """Inspect connectivity without rejecting anything.

    Components are counted over vertices referenced by at least one
    face; isolated vertices are reported separately rather than padding
    the component count.
    """
    adjacency = build_edge_adjacency(mesh)
    _, _, degenerate = face_geometry(mesh)
    used = np.zeros(mesh.n_vertices, dtype=bool)
    used[mesh.faces.ravel()] = True
    labels = connected_component_labels(mesh)
    n_components = int(np.unique(labels[used]).size) if used.any() else 0
    boundary = int(adjacency.boundary.sum())
    nonmanifold = int(adjacency.nonmanifold.sum())
    return MeshReport(
        n_vertices=mesh.n_vertices,
        n_faces=mesh.n_faces,
        n_degenerate_faces=int(degenerate.sum()),
        n_boundary_edges=boundary,
        n_nonmanifold_edges=nonmanifold,
        n_isolated_vertices=int((~used).sum()),
        n_components=n_components,
        edge_manifold=nonmanifold == 0,
        watertight=boundary == 0 and nonmanifold == 0,
    )
