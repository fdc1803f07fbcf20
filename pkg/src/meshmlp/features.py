"""Per-vertex feature assembly and dataset loading.

The feature matrix is a fixed-order concatenation of four blocks:

    [ xyz (3) | vertex normal (3) | dihedral stats (4) | HKS (16) ]

with any block removable for ablations. Positions and normals rotate
with the mesh; the dihedral and spectral blocks are rigid-motion
invariant by construction, so train-time rotation augmentation only
ever touches the first six columns.
"""

from __future__ import annotations

import hashlib
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import cache as feature_cache
from .errors import MeshMlpError
from .geometry import (
    cotangent_laplacian,
    mass_matrix,
    vertex_dihedral_features,
    vertex_normals,
)
from .manifest import DatasetManifest, ManifestEntry
from .mesh import Mesh, attach_face_labels, load_face_labels, normalize_unit_scale, parse_mesh
from .spectral import (
    DEFAULT_EIGENPAIRS,
    DEFAULT_SCALES,
    compute_hks,
    solve_eigs,
    standardize_channels,
)

BLOCK_ORDER = ("xyz", "normal", "dihedral", "hks")
ROTATION_ANGLES = (0.0, np.pi / 2.0, np.pi)
THREADS_ENV = "MESHMLP_THREADS"


@dataclass(frozen=True)
class FeatureConfig:
    """Which feature blocks to assemble and how deep the spectrum goes."""

    xyz: bool = True
    normal: bool = True
    dihedral: bool = True
    hks: bool = True
    eigenpairs: int = DEFAULT_EIGENPAIRS
    hks_scales: int = DEFAULT_SCALES

    def __post_init__(self):
        if not (self.xyz or self.normal or self.dihedral or self.hks):
            raise ValueError("at least one feature block must be enabled")

    def block_widths(self) -> dict[str, int]:
        widths = {"xyz": 3, "normal": 3, "dihedral": 4, "hks": self.hks_scales}
        return {name: widths[name] for name in BLOCK_ORDER if getattr(self, name)}

    @property
    def channels(self) -> int:
        return sum(self.block_widths().values())

    def block_slices(self) -> dict[str, slice]:
        slices = {}
        start = 0
        for name, width in self.block_widths().items():
            slices[name] = slice(start, start + width)
            start += width
        return slices

    @classmethod
    def from_names(cls, names: str, **kwargs) -> "FeatureConfig":
        wanted = [n.strip() for n in names.split(",") if n.strip()]
        unknown = set(wanted) - set(BLOCK_ORDER)
        if unknown:
            raise ValueError(
                f"unknown feature blocks {sorted(unknown)}, valid: {list(BLOCK_ORDER)}"
            )
        flags = {name: name in wanted for name in BLOCK_ORDER}
        return cls(**flags, **kwargs)

    def names(self) -> str:
        return ",".join(self.block_widths())


def assemble_features(mesh: Mesh, config: FeatureConfig | None = None) -> np.ndarray:
    """Build the (n, C) float32 feature matrix for one mesh.

    The mesh is used as given; run normalize_unit_scale first if the
    dataset is not already at a common scale. HKS channels are
    standardized per mesh so their magnitudes are comparable across
    meshes of different area.
    """
    config = config or FeatureConfig()
    blocks = []
    if config.xyz:
        blocks.append(mesh.vertices)
    if config.normal:
        blocks.append(vertex_normals(mesh))
    if config.dihedral:
        blocks.append(vertex_dihedral_features(mesh))
    if config.hks:
        basis = solve_eigs(
            cotangent_laplacian(mesh),
            mass_matrix(mesh),
            k=min(config.eigenpairs, mesh.n_vertices),
        )
        hks = compute_hks(basis, config.hks_scales)
        blocks.append(standardize_channels(hks.values))
    return np.concatenate(blocks, axis=1).astype(np.float32)


def rotation_matrix(axis: int, angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    u, v = (axis + 1) % 3, (axis + 2) % 3
    rot = np.eye(3)
    rot[u, u] = c
    rot[u, v] = -s
    rot[v, u] = s
    rot[v, v] = c
    return rot


def augment_rotation(
    features: np.ndarray, config: FeatureConfig, rng: np.random.Generator
) -> np.ndarray:
    """Rotate the pose-dependent feature columns by a random axis flip.

    One axis (x, y, or z) and one angle (0, pi/2, or pi) are drawn; the
    xyz and normal blocks are rotated in place on a copy, every other
    block is untouched. Returns the augmented copy.
    """
    axis = int(rng.integers(3))
    angle = ROTATION_ANGLES[int(rng.integers(len(ROTATION_ANGLES)))]
    out = features.copy()
    rot_t = rotation_matrix(axis, angle).T.astype(features.dtype)
    slices = config.block_slices()
    for block in ("xyz", "normal"):
        if block in slices:
            out[:, slices[block]] = out[:, slices[block]] @ rot_t
    return out


def derive_vertex_targets(mesh: Mesh, num_classes: int) -> tuple[np.ndarray, int]:
    """Majority vote of incident face labels per vertex.

    Ties resolve to the smallest class id. Vertices in no face get
    class 0; their count comes back alongside so callers can report
    them. Requires face labels on the mesh.
    """
    if mesh.face_labels is None:
        raise MeshMlpError("mesh has no face labels to derive vertex targets from")
    votes = np.zeros((mesh.n_vertices, num_classes))
    for corner in range(3):
        np.add.at(votes, (mesh.faces[:, corner], mesh.face_labels), 1.0)
    targets = votes.argmax(axis=1).astype(np.int64)
    untouched = int((votes.sum(axis=1) == 0).sum())
    return targets, untouched


@dataclass
class Sample:
    """One mesh ready for the network."""

    mesh_id: str
    features: np.ndarray
    target: int | None = None
    vertex_targets: np.ndarray | None = None
    faces: np.ndarray | None = None
    face_labels: np.ndarray | None = None


def _cache_file(cache_dir: Path, mesh_path: Path, config: FeatureConfig) -> Path:
    tag = f"{mesh_path.resolve()}|{config.names()}|k{config.eigenpairs}|t{config.hks_scales}"
    key = hashlib.blake2b(tag.encode(), digest_size=8).hexdigest()
    return cache_dir / f"{mesh_path.stem}-{key}.mmlpft"


def mesh_features(
    mesh_path: str | Path, config: FeatureConfig, cache_dir: str | Path | None
) -> tuple[np.ndarray, bool]:
    """Features for one mesh file, through the cache when possible.

    Returns (features, reused) where reused says whether a valid cache
    entry was hit. The cache key covers the feature configuration and
    the entry stores a digest of the mesh bytes, so both config changes
    and mesh edits force recomputation.
    """
    mesh_path = Path(mesh_path)
    cache_dir = Path(cache_dir) if cache_dir is not None else None
    source_hash = feature_cache.content_hash(mesh_path)
    target = None
    if cache_dir is not None:
        target = _cache_file(cache_dir, mesh_path, config)
        if target.exists():
            try:
                features, stored_hash = feature_cache.read_feature_cache(target)
            except MeshMlpError:
                features, stored_hash = None, None
            if (
                features is not None
                and stored_hash == source_hash
                and features.shape[1] == config.channels
            ):
                return features, True
    mesh = normalize_unit_scale(parse_mesh(mesh_path))
    features = assemble_features(mesh, config)
    if target is not None:
        cache_dir.mkdir(parents=True, exist_ok=True)
        feature_cache.write_feature_cache(target, features, source_hash)
    return features, False


def load_sample(
    manifest: DatasetManifest,
    entry: ManifestEntry,
    config: FeatureConfig,
    cache_dir: str | Path | None = None,
) -> Sample:
    mesh_path = manifest.mesh_path(entry)
    features, _ = mesh_features(mesh_path, config, cache_dir)
    sample = Sample(mesh_id=mesh_path.stem, features=features)
    if manifest.task == "classification":
        sample.target = entry.class_id
    else:
        mesh = parse_mesh(mesh_path)
        mesh = attach_face_labels(mesh, load_face_labels(manifest.labels_path(entry)))
        targets, _ = derive_vertex_targets(mesh, manifest.num_classes)
        sample.vertex_targets = targets
        sample.faces = mesh.faces
        sample.face_labels = mesh.face_labels
    return sample


def load_split(
    manifest: DatasetManifest,
    split: str,
    config: FeatureConfig,
    cache_dir: str | Path | None = None,
) -> list[Sample]:
    return [
        load_sample(manifest, entry, config, cache_dir)
        for entry in manifest.split_entries(split)
    ]


def worker_count(requested: int | None = None) -> int:
    """Thread count for precomputation: argument, then MESHMLP_THREADS, then 1."""
    if requested is not None:
        return max(1, requested)
    env = os.environ.get(THREADS_ENV, "")
    try:
        return max(1, int(env))
    except ValueError:
        return 1


def precompute_features(
    manifest: DatasetManifest,
    config: FeatureConfig,
    cache_dir: str | Path,
    workers: int | None = None,
) -> dict:
    """Fill the feature cache for every manifest entry.

    Failures are collected per mesh instead of aborting the run, so one
    broken scan cannot hold the rest of the dataset hostage. Returns
    {"computed", "reused", "failed", "failures": [{"mesh", "error"}]}.
    """
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)

    def one(entry: ManifestEntry):
        try:
            _, reused = mesh_features(manifest.mesh_path(entry), config, cache_dir)
            return entry.mesh, "reused" if reused else "computed", ""
        except (MeshMlpError, OSError) as exc:
            return entry.mesh, "failed", str(exc)

    with ThreadPoolExecutor(max_workers=worker_count(workers)) as pool:
        results = list(pool.map(one, manifest.entries))

    report = {"computed": 0, "reused": 0, "failed": 0, "failures": []}
    for mesh_name, status, error in results:
        report[status] += 1
        if status == "failed":
            report["failures"].append({"mesh": mesh_name, "error": error})
    return report
