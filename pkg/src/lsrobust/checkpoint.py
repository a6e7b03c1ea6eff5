"""Binary model checkpoints.

Layout: magic string, format version (u32 LE), JSON architecture descriptor
with training metadata, little-endian float64 weight payload in layer order
(weights row-major, then bias, per layer), trailing CRC32. Round-trips are
bit-identical, so a reloaded model produces exactly the same logits.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .network import DenseLayer, Model

MAGIC = b"LSROBUSTCKPT"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    """Raised for unreadable or corrupt checkpoint files."""


@dataclass(frozen=True)
class Checkpoint:
    model: Model
    meta: dict
    format_version: int


def save_checkpoint(model: Model, meta: dict, path) -> None:
    """Write ``model`` plus (JSON-serializable) metadata to ``path``."""
    descriptor = {
        "layer_sizes": model.layer_sizes(),
        "activations": [lay.activation for lay in model.layers],
        "meta": meta,
    }
    header = json.dumps(descriptor, sort_keys=True).encode("utf-8")
    payload = b"".join(
        lay.weight.astype("<f8").tobytes() + lay.bias.astype("<f8").tobytes()
        for lay in model.layers
    )
    body = (MAGIC + struct.pack("<I", FORMAT_VERSION)
            + struct.pack("<I", len(header)) + header + payload)
    with open(path, "wb") as f:
        f.write(body)
        f.write(struct.pack("<I", zlib.crc32(body)))


def load_checkpoint(path) -> Checkpoint:
    """Read a checkpoint, verifying magic, version and checksum."""
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < len(MAGIC) + 12 or not blob.startswith(MAGIC):
        raise CheckpointError(f"{path}: not a checkpoint file")
    body, (crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) != crc:
        raise CheckpointError(f"{path}: checksum mismatch (file corrupted)")
    off = len(MAGIC)
    version, header_len = struct.unpack_from("<II", body, off)
    if version > FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: unsupported format version {version} "
            f"(this build reads <= {FORMAT_VERSION})"
        )
    off += 8
    try:
        descriptor = json.loads(body[off:off + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: bad architecture descriptor") from exc
    off += header_len
    sizes = descriptor["layer_sizes"]
    activations = descriptor["activations"]
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(sizes, sizes[1:])):
        w_count = fan_out * fan_in
        w = np.frombuffer(body, dtype="<f8", count=w_count, offset=off)
        off += w_count * 8
        b = np.frombuffer(body, dtype="<f8", count=fan_out, offset=off)
        off += fan_out * 8
        if w.size != w_count or b.size != fan_out:
            raise CheckpointError(f"{path}: truncated weight payload")
        layers.append(DenseLayer(w.reshape(fan_out, fan_in).copy(),
                                 b.copy(), activations[i]))
    if off != len(body):
        raise CheckpointError(f"{path}: trailing bytes in weight payload")
    return Checkpoint(Model(tuple(layers)), descriptor.get("meta", {}), version)
