"""Single-file checkpoints: JSON manifest followed by raw float64 payloads.

Layout (all integers little-endian)::

    bytes 0..7     magic b"DEPFUSE1"
    bytes 8..15    uint64 manifest length L
    next L bytes   UTF-8 JSON manifest
    remainder      parameter payloads, float64 little-endian, row-major,
                   concatenated in manifest order

The manifest holds ``params`` (name, shape, offset in bytes from the
payload start, count), ``config``, ``config_hash`` (sha256 of the
canonical config JSON) and ``seed``.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from depfuse.errors import CheckpointError

MAGIC = b"DEPFUSE1"


def config_hash(config: dict) -> str:
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def save_checkpoint(path, params, config: dict, seed: int, extra: dict | None = None) -> None:
    entries = []
    payload = []
    offset = 0
    for p in params:
        arr = np.ascontiguousarray(p.data, dtype="<f8")
        entries.append({"name": p.name, "shape": list(arr.shape), "offset": offset, "count": int(arr.size)})
        payload.append(arr.tobytes())
        offset += arr.nbytes
    manifest = {
        "format": 1,
        "params": entries,
        "config": config,
        "config_hash": config_hash(config),
        "seed": int(seed),
        "extra": extra or {},
    }
    blob = json.dumps(manifest, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for chunk in payload:
            fh.write(chunk)


def read_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise CheckpointError(f"{path}: bad magic")
    (mlen,) = struct.unpack("<Q", raw[8:16])
    manifest = json.loads(raw[16:16 + mlen].decode("utf-8"))
    if manifest.get("config_hash") != config_hash(manifest["config"]):
        raise CheckpointError(f"{path}: config hash mismatch")
    base = 16 + mlen
    arrays = {}
    for e in manifest["params"]:
        start = base + e["offset"]
        buf = raw[start:start + 8 * e["count"]]
        if len(buf) != 8 * e["count"]:
            raise CheckpointError(f"{path}: truncated payload for {e['name']}")
        arrays[e["name"]] = np.frombuffer(buf, dtype="<f8").astype(np.float64).reshape(e["shape"])
    return manifest, arrays


def load_into(params, arrays: dict[str, np.ndarray]) -> None:
    for p in params:
        if p.name not in arrays:
            raise CheckpointError(f"checkpoint lacks parameter {p.name}")
        arr = arrays[p.name]
        if arr.shape != p.data.shape:
            raise CheckpointError(f"{p.name}: shape {arr.shape} != {p.data.shape}")
        p.data[...] = arr
