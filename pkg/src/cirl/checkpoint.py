"""Binary tensor container: magic ``CIRL``, version, tensor table, CRC32.

Layout (all integers little-endian):

====================  ========================================
bytes                 meaning
====================  ========================================
0-3                   magic ``CIRL``
4-7                   format version (u32)
8-11                  tensor count (u32)
per tensor            name length (u16), UTF-8 name,
                      rank (u8), dims (u64 each),
                      float32 data (row-major)
trailing 4 bytes      CRC32 of everything after the magic
====================  ========================================

Model checkpoints and embedding dumps share the container; they differ
only in the expected tensor-name schema, which the loader validates.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

from cirl.errors import ChecksumError, SchemaError

MAGIC = b"CIRL"
FORMAT_VERSION = 1

EMBEDDINGS_TENSOR = "embeddings"


def save_tensors(path, tensors: dict[str, np.ndarray]) -> None:
    """Write tensors (insertion order preserved) as float32."""
    payload = bytearray()
    payload += struct.pack("<I", FORMAT_VERSION)
    payload += struct.pack("<I", len(tensors))
    for name, array in tensors.items():
        arr = np.ascontiguousarray(array, dtype=np.float32)
        encoded = name.encode("utf-8")
        payload += struct.pack("<H", len(encoded))
        payload += encoded
        payload += struct.pack("<B", arr.ndim)
        for dim in arr.shape:
            payload += struct.pack("<Q", dim)
        payload += arr.tobytes()
    crc = zlib.crc32(bytes(payload)) & 0xFFFFFFFF
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(payload)
        fh.write(struct.pack("<I", crc))


def load_tensors(path) -> dict[str, np.ndarray]:
    """Read a container; verifies magic, version and CRC."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12 or blob[:4] != MAGIC:
        raise SchemaError("not a CIRL checkpoint (bad magic)")
    payload, crc_bytes = blob[4:-4], blob[-4:]
    (stored_crc,) = struct.unpack("<I", crc_bytes)
    if zlib.crc32(payload) & 0xFFFFFFFF != stored_crc:
        raise ChecksumError("checkpoint payload failed CRC32 verification")
    offset = 0

    def take(fmt: str):
        nonlocal offset
        size = struct.calcsize(fmt)
        values = struct.unpack_from(fmt, payload, offset)
        offset += size
        return values[0] if len(values) == 1 else values

    version = take("<I")
    if version != FORMAT_VERSION:
        raise SchemaError(f"unsupported checkpoint version {version}")
    count = take("<I")
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        name_len = take("<H")
        name = payload[offset : offset + name_len].decode("utf-8")
        offset += name_len
        rank = take("<B")
        dims = tuple(take("<Q") for _ in range(rank))
        n_items = int(np.prod(dims)) if dims else 1
        data = np.frombuffer(payload, dtype="<f4", count=n_items, offset=offset).copy()
        offset += n_items * 4
        tensors[name] = data.reshape(dims)
    if offset != len(payload):
        raise SchemaError("trailing bytes after last tensor")
    return tensors


def save_model_tensors(model, path) -> None:
    """Persist all trainable tensors (frozen vision map excluded: it is
    re-derived from the seed)."""
    save_tensors(path, {name: t.data for name, t in model.params.items()})


def load_model_tensors(model, path) -> None:
    """Load tensors into an already-built model; the name set must match
    the model's schema exactly."""
    tensors = load_tensors(path)
    expected = set(model.params)
    got = set(tensors)
    if expected != got:
        missing = sorted(expected - got)
        extra = sorted(got - expected)
        raise SchemaError(f"tensor name set mismatch: missing={missing} extra={extra}")
    for name, arr in tensors.items():
        current = model.params[name]
        if tuple(arr.shape) != tuple(current.data.shape):
            raise SchemaError(
                f"tensor {name}: shape {arr.shape} != expected {current.data.shape}"
            )
        current.data = arr.astype(np.float64)


def save_embeddings(path, embeddings: np.ndarray) -> None:
    save_tensors(path, {EMBEDDINGS_TENSOR: np.asarray(embeddings)})


def load_embeddings(path) -> np.ndarray:
    tensors = load_tensors(path)
    if set(tensors) != {EMBEDDINGS_TENSOR}:
        raise SchemaError("embedding dump must hold exactly one 'embeddings' tensor")
    return tensors[EMBEDDINGS_TENSOR].astype(np.float64)
