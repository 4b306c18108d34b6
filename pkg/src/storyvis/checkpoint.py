"""Single-file binary checkpoint format.

Layout (all integers little-endian):

    magic    8 bytes  b"ISVCKPT1"
    version  u32      format schema version
    confhash 32 bytes sha256 of the canonical config JSON
    n_blobs  u32
    blobs    n_blobs records:
        name_len u16, name utf-8,
        dtype    u8 (see _DTYPE_CODES), ndim u8, dims ndim x u64,
        nbytes   u64, raw little-endian data, crc32 u32

One blob named "manifest" holds a JSON document (config, counters, loss
history, blob index); the rest are named numpy arrays.  Loading reads and
verifies everything before returning, so a corrupt file never yields
partial state.
"""

from __future__ import annotations

import hashlib
import json
import struct
import zlib

import numpy as np

from .errors import CheckpointCorruptError, CheckpointError, CheckpointVersionError

MAGIC = b"ISVCKPT1"
FORMAT_VERSION = 1

_DTYPE_CODES = {
    np.dtype(np.float32): 1,
    np.dtype(np.float64): 2,
    np.dtype(np.int64): 3,
    np.dtype(np.uint8): 4,
}
_CODE_DTYPES = {v: k for k, v in _DTYPE_CODES.items()}

MANIFEST_BLOB = "manifest"


def config_hash(config: dict) -> bytes:
    canon = json.dumps(config, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(canon).digest()


def _pack_blob(name: str, arr: np.ndarray) -> bytes:
    dtype = np.dtype(arr.dtype)
    if dtype not in _DTYPE_CODES:
        raise CheckpointError(f"unsupported dtype {dtype} for blob {name!r}")
    data = np.ascontiguousarray(arr).astype(dtype.newbyteorder("<"), copy=False).tobytes()
    name_b = name.encode("utf-8")
    head = struct.pack("<H", len(name_b)) + name_b
    head += struct.pack("<BB", _DTYPE_CODES[dtype], arr.ndim)
    head += struct.pack(f"<{arr.ndim}Q", *arr.shape)
    head += struct.pack("<Q", len(data))
    return head + data + struct.pack("<I", zlib.crc32(data) & 0xFFFFFFFF)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointCorruptError("truncated checkpoint file")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def write_checkpoint(path: str, manifest: dict, blobs: dict[str, np.ndarray]):
    """Write manifest + named arrays; the config hash goes into the header."""
    if MANIFEST_BLOB in blobs:
        raise CheckpointError(f"blob name {MANIFEST_BLOB!r} is reserved")
    manifest = dict(manifest)
    manifest["blob_index"] = sorted(blobs)
    manifest_arr = np.frombuffer(
        json.dumps(manifest, sort_keys=True).encode("utf-8"), dtype=np.uint8
    )
    out = [MAGIC, struct.pack("<I", FORMAT_VERSION),
           config_hash(manifest.get("config", {})),
           struct.pack("<I", len(blobs) + 1),
           _pack_blob(MANIFEST_BLOB, manifest_arr)]
    for name in sorted(blobs):
        out.append(_pack_blob(name, blobs[name]))
    with open(path, "wb") as f:
        f.write(b"".join(out))


def read_checkpoint(path: str) -> tuple[dict, dict[str, np.ndarray]]:
    """Read and fully verify a checkpoint; returns (manifest, blobs)."""
    try:
        with open(path, "rb") as f:
            buf = f.read()
    except FileNotFoundError as e:
        raise CheckpointError(f"no checkpoint at {path!r}") from e
    r = _Reader(buf)
    if r.take(len(MAGIC)) != MAGIC:
        raise CheckpointError(f"{path!r} is not a checkpoint file (bad magic)")
    (version,) = r.unpack("<I")
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"checkpoint format version {version} != supported {FORMAT_VERSION}"
        )
    header_hash = r.take(32)
    (n_blobs,) = r.unpack("<I")

    blobs: dict[str, np.ndarray] = {}
    for _ in range(n_blobs):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode("utf-8")
        code, ndim = r.unpack("<BB")
        if code not in _CODE_DTYPES:
            raise CheckpointCorruptError(f"unknown dtype code {code} in blob {name!r}")
        shape = r.unpack(f"<{ndim}Q") if ndim else ()
        (nbytes,) = r.unpack("<Q")
        data = r.take(nbytes)
        (crc,) = r.unpack("<I")
        if (zlib.crc32(data) & 0xFFFFFFFF) != crc:
            raise CheckpointCorruptError(f"checksum mismatch in blob {name!r}")
        dtype = _CODE_DTYPES[code]
        arr = np.frombuffer(data, dtype=dtype.newbyteorder("<")).astype(dtype, copy=True)
        blobs[name] = arr.reshape(shape)
    if r.pos != len(buf):
        raise CheckpointCorruptError("trailing bytes after last blob")

    manifest_arr = blobs.pop(MANIFEST_BLOB, None)
    if manifest_arr is None:
        raise CheckpointCorruptError("checkpoint has no manifest blob")
    manifest = json.loads(manifest_arr.tobytes().decode("utf-8"))
    if config_hash(manifest.get("config", {})) != header_hash:
        raise CheckpointCorruptError("header config hash does not match manifest")
    if sorted(blobs) != manifest.get("blob_index"):
        raise CheckpointCorruptError("blob index does not match manifest")
    return manifest, blobs
