"""Checkpoint serialization.

Layout (all integers u64 little-endian, all floats f64 little-endian):

    magic "TRIVQACK"
    version (currently 1)
    config_len, config JSON bytes (canonical compact form, sorted keys)
    hash_len, sha256 hex of the config bytes (ascii)
    n_blocks
    per block: name_len, name bytes (utf-8), ndim, dims...
    per block, same order: raw f64 payload

Blocks are the model parameters in declared order, then normalization
statistics (norm.v_mean, norm.v_std, norm.q_mean, norm.q_std) when the
run normalized its features. Optimizer velocity is not persisted.
"""

from __future__ import annotations

import hashlib
import json
import struct

import numpy as np

from .errors import CheckpointError

MAGIC = b"TRIVQACK"
VERSION = 1
_U64 = struct.Struct("<Q")


def _pack_u64(value: int) -> bytes:
    return _U64.pack(value)


class _Reader:
    def __init__(self, blob: bytes, path):
        self.blob = blob
        self.pos = 0
        self.path = path

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.blob):
            raise CheckpointError(
                f"checkpoint {self.path} is truncated while reading {what}"
            )
        chunk = self.blob[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u64(self, what: str) -> int:
        return _U64.unpack(self.take(8, what))[0]


def save_checkpoint(path, canonical_config: dict, blocks: dict[str, np.ndarray]) -> str:
    config_bytes = json.dumps(
        canonical_config, sort_keys=True, separators=(",", ":")
    ).encode()
    hash_hex = hashlib.sha256(config_bytes).hexdigest().encode("ascii")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_pack_u64(VERSION))
        fh.write(_pack_u64(len(config_bytes)))
        fh.write(config_bytes)
        fh.write(_pack_u64(len(hash_hex)))
        fh.write(hash_hex)
        fh.write(_pack_u64(len(blocks)))
        for name, arr in blocks.items():
            nb = name.encode("utf-8")
            fh.write(_pack_u64(len(nb)))
            fh.write(nb)
            fh.write(_pack_u64(arr.ndim))
            for dim in arr.shape:
                fh.write(_pack_u64(dim))
        for arr in blocks.values():
            fh.write(np.ascontiguousarray(arr, dtype=np.float64).astype("<f8").tobytes())
    return hash_hex.decode("ascii")


def load_checkpoint(path) -> tuple[dict, dict[str, np.ndarray], str]:
    """Returns (canonical config, blocks by name, config hash)."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except FileNotFoundError as exc:
        raise CheckpointError(f"checkpoint not found: {path}") from exc
    r = _Reader(blob, path)
    if r.take(len(MAGIC), "magic") != MAGIC:
        raise CheckpointError(f"checkpoint {path} has wrong magic")
    version = r.u64("version")
    if version != VERSION:
        raise CheckpointError(
            f"checkpoint {path} has version {version}, expected {VERSION}"
        )
    config_bytes = r.take(r.u64("config length"), "config")
    stored_hash = r.take(r.u64("hash length"), "config hash").decode("ascii")
    actual = hashlib.sha256(config_bytes).hexdigest()
    if stored_hash != actual:
        raise CheckpointError(
            f"checkpoint {path} config hash mismatch: stored {stored_hash}, "
            f"recomputed {actual}"
        )
    try:
        canonical = json.loads(config_bytes.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"checkpoint {path} config is unreadable: {exc}") from exc
    n_blocks = r.u64("block count")
    headers: list[tuple[str, tuple]] = []
    for b in range(n_blocks):
        name = r.take(r.u64("block name length"), "block name").decode("utf-8")
        ndim = r.u64("block ndim")
        shape = tuple(r.u64("block dim") for _ in range(ndim))
        headers.append((name, shape))
    names = [h[0] for h in headers]
    if len(set(names)) != len(names):
        raise CheckpointError(f"checkpoint {path} repeats a block name")
    blocks: dict[str, np.ndarray] = {}
    for name, shape in headers:
        count = int(np.prod(shape)) if shape else 1
        payload = r.take(count * 8, f"payload of block {name}")
        arr = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(shape)
        # ascontiguousarray would promote 0-d blocks to 1-D; astype already
        # copied, so only reassert contiguity on real arrays
        if arr.ndim and not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)
        blocks[name] = arr
    if r.pos != len(blob):
        raise CheckpointError(
            f"checkpoint {path} has {len(blob) - r.pos} trailing bytes"
        )
    return canonical, blocks, stored_hash
