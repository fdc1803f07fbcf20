"""Synthetic meshes and toy datasets.

Small generators used by the test-suite and by the README walkthrough,
so the pipeline can be exercised without downloading scan data. All
randomness flows through an explicit numpy Generator.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
from scipy.spatial import ConvexHull

from .manifest import DatasetManifest, ManifestEntry, save_manifest
from .mesh import Mesh, write_labeled_mesh

_PHI = (1.0 + math.sqrt(5.0)) / 2.0

_ICO_VERTS = np.array(
    [
        (-1, _PHI, 0), (1, _PHI, 0), (-1, -_PHI, 0), (1, -_PHI, 0),
        (0, -1, _PHI), (0, 1, _PHI), (0, -1, -_PHI), (0, 1, -_PHI),
        (_PHI, 0, -1), (_PHI, 0, 1), (-_PHI, 0, -1), (-_PHI, 0, 1),
    ],
    dtype=np.float64,
)

_ICO_FACES = np.array(
    [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ],
    dtype=np.int64,
)


def icosphere(subdivisions: int = 2, radius: float = 1.0) -> Mesh:
    """Geodesic sphere from repeated midpoint subdivision of an icosahedron.

    Face count is 20 * 4**subdivisions, outward wound.
    """
    verts = [v / np.linalg.norm(v) for v in _ICO_VERTS]
    faces = [tuple(f) for f in _ICO_FACES]
    for _ in range(subdivisions):
        midpoint_cache: dict[tuple[int, int], int] = {}

        def midpoint(a: int, b: int) -> int:
            key = (a, b) if a < b else (b, a)
            if key not in midpoint_cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                midpoint_cache[key] = len(verts) - 1
            return midpoint_cache[key]

        next_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            next_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = next_faces
    return Mesh(np.array(verts) * radius, np.array(faces, dtype=np.int64))


def _weld(vertices: np.ndarray, faces: np.ndarray, decimals: int = 9) -> Mesh:
    keys = np.round(vertices, decimals)
    _, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    return Mesh(vertices[first], inverse[faces])


def cube(segments: int = 6, size: float = 1.0) -> Mesh:
    """Axis-aligned cube surface; each side is a segments^2 quad grid split
    into triangles. Side seams are welded so the result is watertight.
    """
    grid = np.linspace(-0.5, 0.5, segments + 1) * size
    u, w = np.meshgrid(grid, grid, indexing="ij")
    u, w = u.ravel(), w.ravel()
    half = 0.5 * size

    verts_list = []
    faces_list = []
    offset = 0
    # (axis held fixed, sign of that axis); remaining two axes span the side
    for axis, sign in ((0, 1), (0, -1), (1, 1), (1, -1), (2, 1), (2, -1)):
        side = np.empty((u.size, 3))
        side[:, axis] = sign * half
        side[:, (axis + 1) % 3] = u
        side[:, (axis + 2) % 3] = w
        verts_list.append(side)
        idx = np.arange(u.size).reshape(segments + 1, segments + 1)
        a = idx[:-1, :-1].ravel()
        b = idx[1:, :-1].ravel()
        c = idx[1:, 1:].ravel()
        d = idx[:-1, 1:].ravel()
        if sign > 0:
            quads = np.stack([np.stack([a, b, c], 1), np.stack([a, c, d], 1)])
        else:
            quads = np.stack([np.stack([a, c, b], 1), np.stack([a, d, c], 1)])
        faces_list.append(quads.reshape(-1, 3) + offset)
        offset += u.size
    return _weld(np.concatenate(verts_list), np.concatenate(faces_list))


def random_convex_mesh(rng: np.random.Generator, n_points: int = 120) -> Mesh:
    """Convex hull of random sphere samples, anisotropically stretched.

    Every sample lies on its own hull, so the vertex count is exactly
    n_points and the triangulation is watertight and manifold. Faces
    are rewound to point outward.
    """
    raw = rng.standard_normal((n_points, 3))
    raw /= np.linalg.norm(raw, axis=1, keepdims=True)
    hull = ConvexHull(raw)
    faces = hull.simplices.copy()
    centroids = raw[faces].mean(axis=1)
    normals = np.cross(
        raw[faces[:, 1]] - raw[faces[:, 0]], raw[faces[:, 2]] - raw[faces[:, 0]]
    )
    flip = np.einsum("ij,ij->i", normals, centroids) < 0
    faces[flip] = faces[flip][:, [0, 2, 1]]
    stretch = rng.uniform(0.6, 1.6, size=3)
    jitter = rng.normal(scale=0.01, size=raw.shape)
    return Mesh(raw * stretch + jitter, faces)


def jittered(mesh: Mesh, rng: np.random.Generator, sigma: float = 0.01) -> Mesh:
    """Copy of the mesh with gaussian noise added to every vertex."""
    noisy = mesh.vertices + rng.normal(scale=sigma, size=mesh.vertices.shape)
    return Mesh(noisy, mesh.faces, mesh.face_labels)


def hemisphere_labels(mesh: Mesh, plane_z: float = 0.1) -> np.ndarray:
    """Per-face binary labels: 1 where the face centroid sits above plane_z.

    The default plane is offset from z=0 because subdivided icospheres
    carry an exact equator ring of vertices there; cutting between
    vertex rings keeps the boundary crisp.
    """
    centroids = mesh.vertices[mesh.faces].mean(axis=1)
    return (centroids[:, 2] > plane_z).astype(np.int64)


def make_classification_dataset(
    out_dir: str | Path,
    per_class: int = 10,
    held_out: int = 5,
    sigma: float = 0.02,
    seed: int = 0,
) -> Path:
    """Write a two-class sphere-versus-cube dataset and return its manifest path.

    per_class meshes of each class go to the train split and held_out
    meshes of each class to the test split.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    entries = []
    base = {"sphere": icosphere(2), "cube": cube(6)}
    for class_id, (name, proto) in enumerate(base.items()):
        for i in range(per_class + held_out):
            mesh = jittered(proto, rng, sigma)
            fname = f"{name}_{i:02d}.obj"
            write_labeled_mesh(out_dir / fname, mesh)
            entries.append(
                ManifestEntry(
                    mesh=fname,
                    split="train" if i < per_class else "test",
                    class_id=class_id,
                )
            )
    manifest = DatasetManifest("classification", 2, entries, root=out_dir)
    path = out_dir / "manifest.json"
    save_manifest(manifest, path)
    return path


def make_segmentation_dataset(
    out_dir: str | Path,
    train: int = 15,
    held_out: int = 5,
    sigma: float = 0.005,
    plane_z: float = 0.1,
    seed: int = 0,
) -> Path:
    """Write a hemisphere-labeling dataset of jittered icospheres.

    Each mesh gets a per-face label file; labels are computed from the
    jittered geometry so they stay consistent with what the network sees.
    Returns the manifest path.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    proto = icosphere(2)
    entries = []
    for i in range(train + held_out):
        mesh = jittered(proto, rng, sigma)
        labels = hemisphere_labels(mesh, plane_z)
        mesh_name = f"sphere_{i:02d}.obj"
        label_name = f"sphere_{i:02d}_labels.txt"
        write_labeled_mesh(out_dir / mesh_name, mesh)
        (out_dir / label_name).write_text("\n".join(str(l) for l in labels) + "\n")
        entries.append(
            ManifestEntry(
                mesh=mesh_name,
                split="train" if i < train else "test",
                labels=label_name,
            )
        )
    manifest = DatasetManifest("segmentation", 2, entries, root=out_dir)
    path = out_dir / "manifest.json"
    save_manifest(manifest, path)
    return path
