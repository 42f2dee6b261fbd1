"""Binary checkpoint format (all integers little-endian uint32)::

    b"KPGAN\\0"  version
    meta_len  meta (UTF-8 JSON, sorted keys)
    n_tokens  { len token }*
    n_tensors { len name  ndim  dim*  float32 values }*

Tensors are written in sorted name order so save -> load -> save is
byte-identical.
"""

import json
import os
import struct
import tempfile
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"KPGAN\0"
VERSION = 1


class CheckpointError(ValueError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


@dataclass
class Checkpoint:
    meta: dict
    vocab: list
    tensors: dict = field(default_factory=dict)

    @property
    def stages(self):
        return list(self.meta.get("stages", []))


def _u32(value):
    return struct.pack("<I", value)


def _blob(raw):
    return _u32(len(raw)) + raw


def to_bytes(ckpt):
    parts = [MAGIC, _u32(VERSION)]
    parts.append(_blob(json.dumps(ckpt.meta, sort_keys=True, separators=(",", ":")).encode("utf-8")))
    parts.append(_u32(len(ckpt.vocab)))
    parts.extend(_blob(tok.encode("utf-8")) for tok in ckpt.vocab)
    parts.append(_u32(len(ckpt.tensors)))
    for name in sorted(ckpt.tensors):
        arr = np.asarray(ckpt.tensors[name])
        parts.append(_blob(name.encode("utf-8")))
        parts.append(_u32(arr.ndim))
        parts.extend(_u32(d) for d in arr.shape)
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, raw):
        self.raw, self.pos = raw, 0

    def take(self, n):
        if self.pos + n > len(self.raw):
            raise CheckpointError("truncated checkpoint")
        chunk = self.raw[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self):
        return struct.unpack("<I", self.take(4))[0]

    def blob(self):
        return self.take(self.u32())


def from_bytes(raw):
    reader = _Reader(raw)
    if reader.take(len(MAGIC)) != MAGIC:
        raise CheckpointError("not a KPGAN checkpoint (bad magic)")
    version = reader.u32()
    if version != VERSION:
        raise CheckpointVersionError(f"checkpoint version {version} is not supported (expected {VERSION})")
    meta = json.loads(reader.blob().decode("utf-8"))
    vocab = [reader.blob().decode("utf-8") for _ in range(reader.u32())]
    tensors = {}
    for _ in range(reader.u32()):
        name = reader.blob().decode("utf-8")
        shape = tuple(reader.u32() for _ in range(reader.u32()))
        count = int(np.prod(shape)) if shape else 1
        data = np.frombuffer(reader.take(4 * count), dtype="<f4").reshape(shape)
        tensors[name] = data.astype(np.float64)
    if reader.pos != len(raw):
        raise CheckpointError("trailing bytes after checkpoint payload")
    return Checkpoint(meta, vocab, tensors)


def save(ckpt, path):
    """Write atomically: temp file in the target directory, then rename."""
    payload = to_bytes(ckpt)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".ckpt-", dir=directory)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load(path):
    with open(path, "rb") as fh:
        return from_bytes(fh.read())
