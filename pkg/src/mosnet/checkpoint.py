"""Binary checkpoint files.

Layout (all integers little-endian)::

    b"MOSNETCK"                      magic, 8 bytes
    u32 version
    u32 n, then n bytes of UTF-8     model config as key=value lines
    u32 count of parameter arrays
    per array:
        u16 n, n bytes of UTF-8      parameter name
        u8 ndim, ndim x u32          shape
        float32 data, row-major
    u64 checksum                     first 8 bytes of BLAKE2b over all prior bytes
"""

from __future__ import annotations

import hashlib
import os
import struct

import numpy as np

from .models import ModelConfig, build_model

MAGIC = b"MOSNETCK"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


class ChecksumError(CheckpointError):
    pass


class VersionError(CheckpointError):
    pass


class ArchitectureMismatchError(CheckpointError):
    pass


def _checksum(payload: bytes) -> bytes:
    return hashlib.blake2b(payload, digest_size=8).digest()


def encode(model) -> bytes:
    parts = [MAGIC, struct.pack("<I", FORMAT_VERSION)]
    cfg = model.config.to_text().encode("utf-8")
    parts += [struct.pack("<I", len(cfg)), cfg]
    params = model.state_dict()
    parts.append(struct.pack("<I", len(params)))
    for name in sorted(params):
        value = np.ascontiguousarray(params[name], dtype="<f4")
        raw = name.encode("utf-8")
        parts += [struct.pack("<H", len(raw)), raw, struct.pack("<B", value.ndim),
                  struct.pack(f"<{value.ndim}I", *value.shape), value.tobytes()]
    payload = b"".join(parts)
    return payload + _checksum(payload)


def decode(blob: bytes) -> tuple[ModelConfig, dict[str, np.ndarray]]:
    if len(blob) < len(MAGIC) + 12:
        raise ChecksumError("checkpoint is truncated")
    payload, digest = blob[:-8], blob[-8:]
    if _checksum(payload) != digest:
        raise ChecksumError("checkpoint checksum mismatch (corrupted or truncated file)")
    if payload[:len(MAGIC)] != MAGIC:
        raise CheckpointError("not a MOSNet checkpoint")
    pos = len(MAGIC)

    def take(fmt):
        nonlocal pos
        vals = struct.unpack_from(fmt, payload, pos)
        pos += struct.calcsize(fmt)
        return vals

    (version,) = take("<I")
    if version != FORMAT_VERSION:
        raise VersionError(f"checkpoint format version {version}, expected {FORMAT_VERSION}")
    (n,) = take("<I")
    config = ModelConfig.from_text(payload[pos:pos + n].decode("utf-8"))
    pos += n
    (count,) = take("<I")
    params = {}
    for _ in range(count):
        (n,) = take("<H")
        name = payload[pos:pos + n].decode("utf-8")
        pos += n
        (ndim,) = take("<B")
        shape = take(f"<{ndim}I")
        size = int(np.prod(shape, dtype=np.int64))
        params[name] = np.frombuffer(payload, dtype="<f4", count=size, offset=pos).reshape(shape)
        pos += 4 * size
    if pos != len(payload):
        raise CheckpointError("trailing bytes after parameter arrays")
    return config, params


def save_checkpoint(model, path: str | os.PathLike) -> None:
    with open(path, "wb") as fh:
        fh.write(encode(model))


def load_checkpoint(path: str | os.PathLike, expected: ModelConfig | None = None):
    """Rebuild the model stored at ``path``.

    If ``expected`` is given, the stored config must match it exactly.
    """
    with open(path, "rb") as fh:
        config, params = decode(fh.read())
    if expected is not None and expected != config:
        raise ArchitectureMismatchError(
            f"checkpoint holds {config.to_text()!r}, expected {expected.to_text()!r}")
    model = build_model(config, seed=0)
    model.load_state_dict({k: v.astype(np.float32) for k, v in params.items()})
    return model


def load_into(model, path: str | os.PathLike):
    """Load weights from ``path`` into an existing model of the same config."""
    loaded = load_checkpoint(path, expected=model.config)
    model.load_state_dict(loaded.state_dict())
    return model
