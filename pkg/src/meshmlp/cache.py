"""On-disk cache for per-vertex feature matrices.

Layout, all little-endian:

    7 bytes   magic "MMLPFT1"
    u64       n rows
    u64       C columns
    n*C f32   feature values, row-major
    u64       content hash of the source mesh file

The trailing hash ties the cache entry to the bytes of the mesh it was
computed from; a modified mesh invalidates the entry without any mtime
guesswork.
"""

from __future__ import annotations

import hashlib
import struct
from pathlib import Path

import numpy as np

from .errors import ParseError

MAGIC = b"MMLPFT1"
_HEAD = struct.Struct("<QQ")
_TAIL = struct.Struct("<Q")


def content_hash(path: str | Path) -> int:
    """64-bit digest of a file's bytes."""
    digest = hashlib.blake2b(Path(path).read_bytes(), digest_size=8).digest()
    return _TAIL.unpack(digest)[0]


def write_feature_cache(path: str | Path, features: np.ndarray, source_hash: int) -> None:
    features = np.ascontiguousarray(features, dtype="<f4")
    if features.ndim != 2:
        raise ValueError(f"feature matrix must be 2-D, got shape {features.shape}")
    n, c = features.shape
    blob = MAGIC + _HEAD.pack(n, c) + features.tobytes() + _TAIL.pack(source_hash)
    Path(path).write_bytes(blob)


def read_feature_cache(path: str | Path) -> tuple[np.ndarray, int]:
    """Return (features, source_hash); raises ParseError on any corruption."""
    blob = Path(path).read_bytes()
    if len(blob) < len(MAGIC) + _HEAD.size + _TAIL.size:
        raise ParseError(f"{path}: truncated feature cache")
    if blob[: len(MAGIC)] != MAGIC:
        raise ParseError(f"{path}: bad magic, not a feature cache")
    n, c = _HEAD.unpack_from(blob, len(MAGIC))
    body_start = len(MAGIC) + _HEAD.size
    body_size = n * c * 4
    if len(blob) != body_start + body_size + _TAIL.size:
        raise ParseError(f"{path}: size does not match declared {n}x{c} payload")
    features = np.frombuffer(blob, dtype="<f4", count=n * c, offset=body_start)
    (source_hash,) = _TAIL.unpack_from(blob, body_start + body_size)
    return features.reshape(n, c).copy(), source_hash
