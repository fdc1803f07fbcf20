"""Binary checkpoints that round-trip training state exactly.

Layout, little-endian:

    9 bytes  magic "MMLPCKPT1"
    u32      format version (1)
    u16+...  network config digest, ascii
    u32      parameter count
    per parameter:
        u16+...  name
        u32 u32  rows, cols
        f32[]    values
        f32[]    Adam first moment
        f32[]    Adam second moment
        u64      step count
    u32      buffer array count (batch-norm running stats)
    per buffer:
        u16+...  name ("<layer>.mean" / "<layer>.var")
        u32 u32  rows, cols
        f32[]    values

The architecture itself travels as JSON in a sidecar file "<path>.json"
so a checkpoint can be inspected without this package; the digest in
the header ties the two files together.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .autodiff import Parameter
from .errors import ParseError
from .model import ModelState, NetworkConfig, init_network

MAGIC = b"MMLPCKPT1"
VERSION = 1


def _pack_str(text: str) -> bytes:
    raw = text.encode()
    return struct.pack("<H", len(raw)) + raw


def _pack_array(arr: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(arr, dtype="<f4")
    rows, cols = arr.shape
    return struct.pack("<II", rows, cols) + arr.tobytes()


class _Reader:
    def __init__(self, blob: bytes, path: Path):
        self.blob = blob
        self.path = path
        self.offset = 0

    def take(self, fmt: str):
        s = struct.Struct(fmt)
        if self.offset + s.size > len(self.blob):
            raise ParseError(f"{self.path}: truncated checkpoint")
        values = s.unpack_from(self.blob, self.offset)
        self.offset += s.size
        return values if len(values) > 1 else values[0]

    def take_str(self) -> str:
        length = self.take("<H")
        raw = self.blob[self.offset : self.offset + length]
        if len(raw) != length:
            raise ParseError(f"{self.path}: truncated checkpoint")
        self.offset += length
        return raw.decode()

    def take_array(self) -> np.ndarray:
        rows, cols = self.take("<II")
        count = rows * cols
        end = self.offset + 4 * count
        if end > len(self.blob):
            raise ParseError(f"{self.path}: truncated checkpoint")
        arr = np.frombuffer(self.blob, dtype="<f4", count=count, offset=self.offset)
        self.offset = end
        return arr.reshape(rows, cols).copy()


def config_path(path: str | Path) -> Path:
    return Path(str(path) + ".json")


def save_checkpoint(path: str | Path, state: ModelState) -> None:
    """Write parameters, optimizer state, and the config sidecar."""
    path = Path(path)
    parts = [MAGIC, struct.pack("<I", VERSION), _pack_str(state.config.digest())]
    parts.append(struct.pack("<I", len(state.params)))
    for name in sorted(state.params):
        p = state.params[name]
        parts += [
            _pack_str(name),
            _pack_array(p.data),
            p.adam_m.astype("<f4").tobytes(),
            p.adam_v.astype("<f4").tobytes(),
            struct.pack("<Q", p.step_count),
        ]
    flat_buffers = {
        f"{layer}.{key}": arr
        for layer, stats in state.buffers.items()
        for key, arr in stats.items()
    }
    parts.append(struct.pack("<I", len(flat_buffers)))
    for name in sorted(flat_buffers):
        parts += [_pack_str(name), _pack_array(flat_buffers[name])]
    path.write_bytes(b"".join(parts))
    config_path(path).write_text(json.dumps(state.config.to_dict(), indent=2) + "\n")


def load_checkpoint(path: str | Path) -> ModelState:
    """Rebuild a ModelState; raises ParseError on any structural mismatch."""
    path = Path(path)
    sidecar = config_path(path)
    if not sidecar.exists():
        raise ParseError(f"{sidecar}: missing config sidecar for checkpoint")
    config = NetworkConfig.from_dict(json.loads(sidecar.read_text()))

    reader = _Reader(path.read_bytes(), path)
    if reader.blob[: len(MAGIC)] != MAGIC:
        raise ParseError(f"{path}: bad magic, not a checkpoint")
    reader.offset = len(MAGIC)
    version = reader.take("<I")
    if version != VERSION:
        raise ParseError(f"{path}: unsupported checkpoint version {version}")
    digest = reader.take_str()
    if digest != config.digest():
        raise ParseError(
            f"{path}: checkpoint digest {digest} does not match config sidecar"
        )

    state = init_network(config)
    n_params = reader.take("<I")
    if n_params != len(state.params):
        raise ParseError(
            f"{path}: {n_params} parameters stored, architecture has {len(state.params)}"
        )
    for _ in range(n_params):
        name = reader.take_str()
        if name not in state.params:
            raise ParseError(f"{path}: unknown parameter {name!r}")
        p = state.params[name]
        data = reader.take_array()
        if data.shape != p.data.shape:
            raise ParseError(
                f"{path}: parameter {name!r} has shape {data.shape}, "
                f"expected {p.data.shape}"
            )
        count = data.size
        if reader.offset + 8 * count > len(reader.blob):
            raise ParseError(f"{path}: truncated checkpoint")
        moments = np.frombuffer(
            reader.blob, dtype="<f4", count=2 * count, offset=reader.offset
        )
        reader.offset += 8 * count
        state.params[name] = replacement = Parameter(data, name=name)
        replacement.adam_m = moments[:count].reshape(data.shape).copy()
        replacement.adam_v = moments[count:].reshape(data.shape).copy()
        replacement.step_count = reader.take("<Q")

    n_buffers = reader.take("<I")
    for _ in range(n_buffers):
        name = reader.take_str()
        layer, _, key = name.rpartition(".")
        if layer not in state.buffers or key not in state.buffers[layer]:
            raise ParseError(f"{path}: unknown buffer {name!r}")
        arr = reader.take_array()
        if arr.shape != state.buffers[layer][key].shape:
            raise ParseError(f"{path}: buffer {name!r} has wrong shape {arr.shape}")
        state.buffers[layer][key] = arr
    return state
