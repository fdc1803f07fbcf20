"""Triangle mesh container plus OFF/OBJ reading and writing.

Parsing is deliberately forgiving about layout (comments, blank lines,
polygon faces) and strict about meaning: every face index must resolve
to a real vertex and every label file must line up with the face list.
Non-manifold connectivity is accepted here; topology diagnostics live
in :mod:`meshmlp.geometry`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateMeshError,
    EmptyMeshError,
    LengthMismatchError,
    NonIntegerLabelError,
    ParseError,
)

# Kelly-ish high-contrast colors, cycled when a task has more classes.
LABEL_PALETTE = (
    (0.894, 0.102, 0.110),
    (0.216, 0.494, 0.722),
    (0.302, 0.686, 0.290),
    (0.596, 0.306, 0.639),
    (1.000, 0.498, 0.000),
    (1.000, 1.000, 0.200),
    (0.651, 0.337, 0.157),
    (0.969, 0.506, 0.749),
    (0.600, 0.600, 0.600),
    (0.090, 0.745, 0.812),
    (0.737, 0.741, 0.133),
    (0.122, 0.467, 0.706),
    (0.682, 0.780, 0.910),
    (0.890, 0.467, 0.761),
    (0.498, 0.498, 0.078),
    (0.086, 0.286, 0.235),
)


@dataclass
class Mesh:
    """Shared-vertex triangle mesh.

    vertices: (n, 3) float64 positions.
    faces: (F, 3) int64 vertex indices, 0-based.
    face_labels: optional (F,) int64 per-face class ids.
    """

    vertices: np.ndarray
    faces: np.ndarray
    face_labels: np.ndarray | None = None
    source: str = field(default="", compare=False)

    def __post_init__(self) -> None:
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if self.n_vertices < 3 or self.n_faces < 1:
            raise EmptyMeshError(
                f"mesh needs at least 3 vertices and 1 face, "
                f"got {self.n_vertices} vertices and {self.n_faces} faces"
            )
        if self.faces.min() < 0 or self.faces.max() >= self.n_vertices:
            raise ParseError(
                f"face index out of range [0, {self.n_vertices}) in {self.source or 'mesh'}"
            )
        if self.face_labels is not None:
            self.face_labels = np.asarray(self.face_labels, dtype=np.int64).reshape(-1)
            if self.face_labels.shape[0] != self.n_faces:
                raise LengthMismatchError(
                    f"{self.face_labels.shape[0]} labels for {self.n_faces} faces"
                )

    @property
    def n_vertices(self) -> int:
        return int(self.vertices.shape[0])

    @property
    def n_faces(self) -> int:
        return int(self.faces.shape[0])


def _fan_triangulate(polygon: list[int]) -> list[tuple[int, int, int]]:
    return [(polygon[0], polygon[i], polygon[i + 1]) for i in range(1, len(polygon) - 1)]


def _content_lines(path: Path) -> list[tuple[int, str]]:
    """Non-empty, non-comment lines with their original 1-based numbers."""
    out = []
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            out.append((lineno, line))
    return out


def _parse_off(path: Path) -> Mesh:
    lines = _content_lines(path)
    if not lines:
        raise ParseError(f"{path}: empty file")
    lineno, header = lines[0]
    rest = lines[1:]
    if not header.upper().startswith("OFF"):
        raise ParseError(f"{path}:{lineno}: expected OFF header, got {header!r}")
    trailing = header[3:].split()
    if trailing:
        # counts packed onto the header line, a common variant
        counts_tokens, counts_lineno = trailing, lineno
    else:
        if not rest:
            raise ParseError(f"{path}: missing count line")
        counts_lineno, counts_line = rest[0]
        counts_tokens, rest = counts_line.split(), rest[1:]
    try:
        n_vertices, n_faces = int(counts_tokens[0]), int(counts_tokens[1])
    except (IndexError, ValueError):
        raise ParseError(f"{path}:{counts_lineno}: bad count line") from None

    if len(rest) < n_vertices + n_faces:
        raise ParseError(
            f"{path}: declared {n_vertices} vertices and {n_faces} faces "
            f"but only {len(rest)} data lines follow"
        )
    vertices = np.empty((n_vertices, 3), dtype=np.float64)
    for row, (lineno, line) in enumerate(rest[:n_vertices]):
        parts = line.split()
        try:
            vertices[row] = [float(parts[0]), float(parts[1]), float(parts[2])]
        except (IndexError, ValueError):
            raise ParseError(f"{path}:{lineno}: bad vertex line {line!r}") from None

    triangles: list[tuple[int, int, int]] = []
    for lineno, line in rest[n_vertices : n_vertices + n_faces]:
        parts = line.split()
        try:
            arity = int(parts[0])
            polygon = [int(tok) for tok in parts[1 : 1 + arity]]
        except (IndexError, ValueError):
            raise ParseError(f"{path}:{lineno}: bad face line {line!r}") from None
        if arity < 3 or len(polygon) != arity:
            raise ParseError(f"{path}:{lineno}: face needs at least 3 indices")
        triangles.extend(_fan_triangulate(polygon))

    return Mesh(vertices, np.array(triangles, dtype=np.int64), source=str(path))


def _parse_obj(path: Path) -> Mesh:
    positions: list[list[float]] = []
    triangles: list[tuple[int, int, int]] = []

    def resolve(token: str, lineno: int) -> int:
        index_text = token.split("/", 1)[0]
        try:
            index = int(index_text)
        except ValueError:
            raise ParseError(f"{path}:{lineno}: bad face index {token!r}") from None
        if index == 0:
            raise ParseError(f"{path}:{lineno}: OBJ indices are 1-based, got 0")
        # negative indices count back from the most recent vertex
        resolved = index - 1 if index > 0 else len(positions) + index
        if not 0 <= resolved < len(positions):
            raise ParseError(f"{path}:{lineno}: face index {index} out of range")
        return resolved

    for lineno, line in _content_lines(path):
        parts = line.split()
        keyword = parts[0]
        if keyword == "v":
            try:
                positions.append([float(parts[1]), float(parts[2]), float(parts[3])])
            except (IndexError, ValueError):
                raise ParseError(f"{path}:{lineno}: bad vertex line {line!r}") from None
        elif keyword == "f":
            polygon = [resolve(tok, lineno) for tok in parts[1:]]
            if len(polygon) < 3:
                raise ParseError(f"{path}:{lineno}: face needs at least 3 indices")
            triangles.extend(_fan_triangulate(polygon))
        # vt/vn/usemtl/mtllib/o/g/s carry no connectivity, skip them

    if not positions:
        raise ParseError(f"{path}: no vertex lines found")
    return Mesh(
        np.array(positions, dtype=np.float64),
        np.array(triangles, dtype=np.int64).reshape(-1, 3),
        source=str(path),
    )


def parse_mesh(path: str | Path) -> Mesh:
    """Read a triangle mesh from an OFF or OBJ file.

    Polygon faces are fan-triangulated. The format is chosen by file
    extension, case-insensitive. Raises ParseError on malformed input
    and EmptyMeshError when fewer than 3 vertices or 1 face survive.
    """
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".off":
        return _parse_off(path)
    if suffix == ".obj":
        return _parse_obj(path)
    raise ParseError(f"{path}: unsupported mesh extension {suffix!r}, expected .off or .obj")


def normalize_unit_scale(mesh: Mesh) -> Mesh:
    """Translate the vertex centroid to the origin and scale the mesh into the unit ball.

    The scale factor is the largest distance from the centroid, so the
    result satisfies max ||v|| == 1 exactly up to rounding. Connectivity
    and labels are shared with the input, not copied.
    """
    centered = mesh.vertices - mesh.vertices.mean(axis=0)
    radius = float(np.linalg.norm(centered, axis=1).max())
    if radius <= 0.0:
        raise DegenerateMeshError("all vertices coincide, cannot normalize scale")
    return Mesh(centered / radius, mesh.faces, mesh.face_labels, source=mesh.source)


def load_face_labels(path: str | Path) -> np.ndarray:
    """Read one integer class id per line, ignoring blanks and # comments."""
    labels = []
    for lineno, line in _content_lines(Path(path)):
        try:
            labels.append(int(line))
        except ValueError:
            raise NonIntegerLabelError(f"{path}:{lineno}: not an integer: {line!r}") from None
    return np.array(labels, dtype=np.int64)


def attach_face_labels(mesh: Mesh, labels: np.ndarray) -> Mesh:
    """Return the mesh with per-face labels attached.

    Raises LengthMismatchError when the label count differs from the
    face count, which is the usual symptom of a mesh/label file pairing
    mistake in a manifest.
    """
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if labels.shape[0] != mesh.n_faces:
        raise LengthMismatchError(
            f"{labels.shape[0]} labels for {mesh.n_faces} faces ({mesh.source or 'mesh'})"
        )
    return Mesh(mesh.vertices, mesh.faces, labels, source=mesh.source)


def class_color(class_id: int) -> tuple[float, float, float]:
    return LABEL_PALETTE[class_id % len(LABEL_PALETTE)]


def write_labeled_mesh(path: str | Path, mesh: Mesh) -> None:
    """Write the mesh as OBJ, coloring faces by label through a sidecar MTL.

    Face order is preserved; a `usemtl` statement is emitted whenever the
    class id changes between consecutive faces, so re-parsing the file
    yields the identical vertex and face lists. Without labels a plain
    OBJ is written and no MTL file is produced.
    """
    path = Path(path)
    lines: list[str] = []
    labels = mesh.face_labels
    if labels is not None:
        mtl_path = path.with_suffix(".mtl")
        classes = sorted(int(c) for c in np.unique(labels))
        mtl_lines = []
        for class_id in classes:
            r, g, b = class_color(class_id)
            mtl_lines += [f"newmtl class_{class_id}", f"Kd {r:.4f} {g:.4f} {b:.4f}", ""]
        mtl_path.write_text("\n".join(mtl_lines))
        lines.append(f"mtllib {mtl_path.name}")

    for x, y, z in mesh.vertices:
        lines.append(f"v {x:.9g} {y:.9g} {z:.9g}")
    current = None
    for row, (i, j, k) in enumerate(mesh.faces):
        if labels is not None and (current is None or labels[row] != current):
            current = int(labels[row])
            lines.append(f"usemtl class_{current}")
        lines.append(f"f {i + 1} {j + 1} {k + 1}")
    path.write_text("\n".join(lines) + "\n")
