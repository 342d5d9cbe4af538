"""Binary trajectory files and model checkpoints.

Trajectory file layout (little-endian throughout)::

    b"SLGTRAJ\\0" | uint64 header length | UTF-8 JSON header | float64 blob

The header lists every array with its byte offset into the blob and stores
the SHA-256 of the blob. A checkpoint is a JSON manifest next to a raw
float64 blob (``name.json`` + ``name.bin``).
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import ModelConfig, ModelParams, param_shapes
from .nnad import Tensor

MAGIC = b"SLGTRAJ\0"
FORMAT_VERSION = 1
_LE_F64 = np.dtype("<f8")


class FormatError(ValueError):
    """Raised for unreadable or inconsistent files."""


def canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, indent=1, allow_nan=False).encode("utf-8")


def _to_le(a: np.ndarray) -> bytes:
    return np.ascontiguousarray(a, dtype=_LE_F64).tobytes()


@dataclass
class TrajectoryFile:
    """A sequence of coarse states plus per-step records.

    ``arrays`` maps a field name to an array whose leading axis counts records
    (states for ``U``/``f``, transitions for ``xi``/``eta``/``dt``).
    """

    header: dict
    arrays: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def states(self) -> np.ndarray:
        return self.arrays[self.header.get("state_field", "U")]

    @property
    def n_states(self) -> int:
        return int(self.states.shape[0])

    def to_bytes(self) -> bytes:
        entries, chunks, offset = [], [], 0
        for name in sorted(self.arrays):
            a = np.asarray(self.arrays[name], dtype=float)
            if not np.all(np.isfinite(a)):
                raise ValueError(f"field {name!r} contains non-finite values")
            raw = _to_le(a)
            entries.append({"name": name, "shape": list(a.shape), "dtype": "<f8",
                            "offset": offset, "nbytes": len(raw)})
            chunks.append(raw)
            offset += len(raw)
        blob = b"".join(chunks)
        header = dict(self.header)
        header.update({"format": "slgraph-trajectory", "version": FORMAT_VERSION,
                       "fields": entries, "blob_sha256": hashlib.sha256(blob).hexdigest()})
        hbytes = canonical_json(header)
        return MAGIC + struct.pack("<Q", len(hbytes)) + hbytes + blob

    def write(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(self.to_bytes())
        return path

    @classmethod
    def from_bytes(cls, raw: bytes) -> TrajectoryFile:
        if len(raw) < 16 or raw[:8] != MAGIC:
            raise FormatError("not a trajectory file (bad magic)")
        (hlen,) = struct.unpack("<Q", raw[8:16])
        if 16 + hlen > len(raw):
            raise FormatError("truncated header")
        try:
            header = json.loads(raw[16:16 + hlen].decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise FormatError(f"corrupt header: {exc}") from None
        if header.get("version") != FORMAT_VERSION:
            raise FormatError(f"unsupported format version {header.get('version')!r}")
        blob = raw[16 + hlen:]
        if hashlib.sha256(blob).hexdigest() != header.get("blob_sha256"):
            raise FormatError("blob checksum mismatch")
        arrays = {}
        for e in header["fields"]:
            lo, n = e["offset"], e["nbytes"]
            shape = tuple(e["shape"])
            if lo + n > len(blob) or n != 8 * int(np.prod(shape, dtype=np.int64)):
                raise FormatError(f"field {e['name']!r} has inconsistent length")
            arrays[e["name"]] = np.frombuffer(blob, dtype=_LE_F64, count=n // 8,
                                              offset=lo).reshape(shape).astype(float)
        return cls(header, arrays)

    @classmethod
    def read(cls, path) -> TrajectoryFile:
        return cls.from_bytes(Path(path).read_bytes())


def checkpoint_paths(path) -> tuple[Path, Path]:
    path = Path(path)
    if path.suffix in (".json", ".bin"):
        path = path.with_suffix("")
    return path.with_suffix(".json"), path.with_suffix(".bin")


def save_checkpoint(path, params: ModelParams, meta: dict | None = None) -> Path:
    """Write manifest and blob; returns the manifest path."""
    manifest_path, blob_path = checkpoint_paths(path)
    manifest_path.parent.mkdir(parents=True, exist_ok=True)
    entries, chunks, offset = [], [], 0
    for name, t in params:
        raw = _to_le(t.data)
        entries.append({"name": name, "shape": list(t.shape), "dtype": "<f8",
                        "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    blob = b"".join(chunks)
    manifest = {"format": "slgraph-checkpoint", "version": FORMAT_VERSION,
                "config": params.config.to_dict(), "meta": meta or {},
                "blob": blob_path.name, "blob_sha256": hashlib.sha256(blob).hexdigest(),
                "tensors": entries}
    blob_path.write_bytes(blob)
    manifest_path.write_bytes(canonical_json(manifest))
    return manifest_path


def load_checkpoint(path) -> tuple[ModelParams, dict]:
    manifest_path, _ = checkpoint_paths(path)
    try:
        manifest = json.loads(manifest_path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read checkpoint manifest: {exc}") from None
    if manifest.get("format") != "slgraph-checkpoint":
        raise FormatError("not a checkpoint manifest")
    blob = (manifest_path.parent / manifest["blob"]).read_bytes()
    if hashlib.sha256(blob).hexdigest() != manifest["blob_sha256"]:
        raise FormatError("checkpoint blob checksum mismatch")
    cfg = ModelConfig.from_dict(manifest["config"])
    expected = param_shapes(cfg)
    tensors = {}
    for e in manifest["tensors"]:
        shape = tuple(e["shape"])
        if e["name"] not in expected or expected[e["name"]][0] != shape:
            raise FormatError(f"tensor {e['name']!r} does not match the config")
        data = np.frombuffer(blob, dtype=_LE_F64, count=e["nbytes"] // 8,
                             offset=e["offset"]).reshape(shape).astype(float)
        tensors[e["name"]] = Tensor(data, requires_grad=True, name=e["name"])
    if set(tensors) != set(expected):
        raise FormatError("checkpoint is missing tensors")
    ordered = {k: tensors[k] for k in expected}
    return ModelParams(cfg, ordered), manifest["meta"]


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def dataset_hash(paths) -> str:
    h = hashlib.sha256()
    for digest in sorted(file_sha256(p) for p in paths):
        h.update(digest.encode())
    return h.hexdigest()
