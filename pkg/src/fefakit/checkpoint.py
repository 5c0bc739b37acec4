"""Binary checkpoint format.

Layout::

    b"FEFACKPT"                      8-byte magic
    manifest length                  uint64, little-endian
    manifest                         UTF-8 JSON, sorted keys
    payload                          contiguous little-endian float64

The manifest holds ``format_version``, ``config_hash``, free-form ``meta``
and a ``tensors`` list of ``{name, shape, dtype, offset}`` where ``offset``
is the byte offset into the payload.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"FEFACKPT"
FORMAT_VERSION = 1
_DTYPE = np.dtype("<f8")


class CheckpointError(ValueError):
    pass


class ConfigHashMismatch(CheckpointError):
    pass


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=True)


def hash_config(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()


@dataclass
class Checkpoint:
    tensors: dict
    config_hash: str = ""
    meta: dict = field(default_factory=dict)

    def manifest(self):
        entries, offset = [], 0
        for name, arr in self.tensors.items():
            arr = np.asarray(arr)
            entries.append({"name": name, "shape": list(arr.shape), "dtype": "<f8",
                            "offset": offset})
            offset += arr.size * _DTYPE.itemsize
        return {"format_version": FORMAT_VERSION, "config_hash": self.config_hash,
                "meta": self.meta, "tensors": entries}


def to_bytes(ckpt: Checkpoint) -> bytes:
    manifest = canonical_json(ckpt.manifest()).encode()
    payload = b"".join(np.ascontiguousarray(v, dtype=_DTYPE).tobytes()
                       for v in ckpt.tensors.values())
    return MAGIC + struct.pack("<Q", len(manifest)) + manifest + payload


def from_bytes(blob: bytes, expected_hash: str | None = None) -> Checkpoint:
    if blob[:8] != MAGIC:
        raise CheckpointError("not a FEFA checkpoint (bad magic)")
    if len(blob) < 16:
        raise CheckpointError("truncated header")
    (mlen,) = struct.unpack("<Q", blob[8:16])
    if 16 + mlen > len(blob):
        raise CheckpointError("truncated manifest")
    try:
        manifest = json.loads(blob[16:16 + mlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"unreadable manifest: {exc}") from exc
    if not isinstance(manifest, dict) or not isinstance(manifest.get("tensors"), list):
        raise CheckpointError("manifest has no tensor list")
    if manifest.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported format version {manifest.get('format_version')}")
    payload = memoryview(blob)[16 + mlen:]
    tensors, spans = {}, []
    for entry in manifest["tensors"]:
        if entry["dtype"] != "<f8":
            raise CheckpointError(f"unsupported dtype {entry['dtype']}")
        shape = tuple(int(s) for s in entry["shape"])
        start = int(entry["offset"])
        stop = start + int(np.prod(shape, dtype=np.int64)) * _DTYPE.itemsize
        if start < 0 or stop > len(payload):
            raise CheckpointError(f"tensor {entry['name']} out of bounds")
        spans.append((start, stop, entry["name"]))
        tensors[entry["name"]] = np.frombuffer(payload[start:stop], dtype=_DTYPE).reshape(shape).copy()
    spans.sort()
    for (_, stop, name), (start, _, other) in zip(spans, spans[1:]):
        if start < stop:
            raise CheckpointError(f"tensors {name} and {other} overlap")
    ckpt = Checkpoint(tensors, manifest["config_hash"], manifest.get("meta", {}))
    if expected_hash is not None and ckpt.config_hash != expected_hash:
        raise ConfigHashMismatch(
            f"checkpoint config hash {ckpt.config_hash[:12]} does not match "
            f"configuration {expected_hash[:12]}")
    return ckpt


def save(ckpt: Checkpoint, path) -> None:
    with open(path, "wb") as fh:
        fh.write(to_bytes(ckpt))


def load(path, expected_hash: str | None = None) -> Checkpoint:
    with open(path, "rb") as fh:
        return from_bytes(fh.read(), expected_hash)
