"""Content-addressed on-disk store for encoder outputs.

Layout: <cache_root>/<backend_id>/<first-2-hex-of-key>/<key>.vec where key is
the sha256 of (backend_id, backend version, content key). Entry format,
little-endian: magic b"EMB1", u32 dim, dim x f32 values, u32 CRC32 of the
payload (the dim + values bytes). Writes go through a temp file + rename so a
crashed run never leaves a torn entry; corrupt entries are treated as misses
and rewritten.
"""

from __future__ import annotations

import hashlib
import os
import struct
import tempfile
import zlib
from pathlib import Path
from typing import Callable

import numpy as np

from .core import CacheCorrupt, Embedding, EncoderSpec

MAGIC = b"EMB1"


def cache_key(backend_id: str, backend_version: str, content_key: bytes) -> str:
    h = hashlib.sha256()
    h.update(backend_id.encode("utf-8"))
    h.update(b"\x00")
    h.update(backend_version.encode("utf-8"))
    h.update(b"\x00")
    h.update(content_key)
    return h.hexdigest()


def entry_path(cache_root: str | Path, backend_id: str, key: str) -> Path:
    return Path(cache_root) / backend_id / key[:2] / f"{key}.vec"


def write_entry(path: Path, embedding: Embedding) -> None:
    payload = struct.pack("<I", embedding.dim) + embedding.values.astype(
        "<f4"
    ).tobytes()
    blob = MAGIC + payload + struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_entry(path: Path, backend_id: str) -> Embedding:
    blob = path.read_bytes()
    if len(blob) < 12 or blob[:4] != MAGIC:
        raise CacheCorrupt(f"{path}: bad magic or truncated")
    payload, (stored_crc,) = blob[4:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(payload) & 0xFFFFFFFF != stored_crc:
        raise CacheCorrupt(f"{path}: checksum mismatch")
    (dim,) = struct.unpack("<I", payload[:4])
    values = np.frombuffer(payload[4:], dtype="<f4")
    if values.shape[0] != dim:
        raise CacheCorrupt(f"{path}: dim {dim} != {values.shape[0]} stored values")
    return Embedding(values=values.copy(), dim=int(dim), backend_id=backend_id)


def cached_embed(
    cache_root: str | Path,
    spec: EncoderSpec,
    content_key: bytes,
    produce: Callable[[], Embedding],
    backend_version: str = "1",
) -> Embedding:
    """Return the stored vector for this content, producing and persisting on miss.

    Hits are bit-identical to the originally produced vector. A corrupt entry
    is recomputed and repaired in place.
    """
    key = cache_key(spec.backend_id, backend_version, content_key)
    path = entry_path(cache_root, spec.backend_id, key)
    if path.exists():
        try:
            return read_entry(path, spec.backend_id)
        except CacheCorrupt:
            pass  # fall through: recompute and rewrite
    embedding = produce()
    write_entry(path, embedding)
    return embedding
