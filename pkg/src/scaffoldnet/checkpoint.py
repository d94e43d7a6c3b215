"""Binary checkpoint files.

Layout (little-endian, no padding)::

    b"SCFN"            magic
    u32                format version (1)
    u16                tensor count
    per tensor:        u16 name length, UTF-8 name, u8 rank, u32[rank] dims, f32 data
    u32 epoch, f32 val_loss, f32 val_accuracy, f32 val_mae, u64 seed
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import BadMagicError, CorruptCheckpointError, TruncatedCheckpointError, UnsupportedVersionError
from .layers import ModelParams
from .training import Checkpoint

MAGIC = b"SCFN"
VERSION = 1
_META = struct.Struct("<IfffQ")
_EXPECTED_SHAPES = {
    "conv1.kernels": (3, 3, 1, 32),
    "conv1.bias": (32,),
    "conv2.kernels": (3, 3, 32, 32),
    "conv2.bias": (32,),
    "conv3.kernels": (3, 3, 32, 64),
    "conv3.bias": (64,),
    "dense1.weights": (64, 32),
    "dense1.bias": (32,),
    "dense2.weights": (32, 3),
    "dense2.bias": (3,),
}


def checkpoint_to_bytes(ckpt: Checkpoint):
    tensors = ckpt.params.named_tensors()
    out = [MAGIC, struct.pack("<IH", VERSION, len(tensors))]
    for name, t in tensors.items():
        encoded = name.encode("utf-8")
        out.append(struct.pack("<H", len(encoded)))
        out.append(encoded)
        out.append(struct.pack(f"<B{t.ndim}I", t.ndim, *t.shape))
        out.append(np.ascontiguousarray(t, dtype="<f4").tobytes())
    out.append(_META.pack(int(ckpt.epoch), ckpt.val_loss, ckpt.val_accuracy, ckpt.val_mae, int(ckpt.seed)))
    return b"".join(out)


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.data):
            raise TruncatedCheckpointError(
                f"checkpoint truncated: needed {n} bytes at offset {self.pos}, file has {len(self.data)}"
            )
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt):
        s = struct.Struct("<" + fmt)
        return s.unpack(self.take(s.size))


def checkpoint_from_bytes(data):
    r = _Reader(data)
    if len(data) < len(MAGIC) or data[:len(MAGIC)] != MAGIC:
        raise BadMagicError(f"bad magic {bytes(data[:4])!r}, expected {MAGIC!r}")
    r.take(len(MAGIC))
    (version,) = r.unpack("I")
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported checkpoint version {version}")
    (count,) = r.unpack("H")
    tensors = {}
    for _ in range(count):
        (name_len,) = r.unpack("H")
        try:
            name = r.take(name_len).decode("utf-8")
        except UnicodeDecodeError:
            raise CorruptCheckpointError("tensor name is not valid UTF-8") from None
        (rank,) = r.unpack("B")
        dims = r.unpack(f"{rank}I")
        size = int(np.prod(dims, dtype=np.int64))
        tensors[name] = np.frombuffer(r.take(4 * size), dtype="<f4").astype(np.float32).reshape(dims)
    epoch, val_loss, val_acc, val_mae, seed = _META.unpack(r.take(_META.size))
    if r.pos != len(data):
        raise CorruptCheckpointError(f"{len(data) - r.pos} trailing bytes after metadata")
    shapes = {k: v.shape for k, v in tensors.items()}
    if shapes != _EXPECTED_SHAPES:
        raise CorruptCheckpointError(f"tensor layout does not match the model: {shapes}")
    return Checkpoint(ModelParams.from_named(tensors), epoch, val_loss, val_acc, val_mae, seed)


def checkpoint_save(ckpt: Checkpoint, path):
    Path(path).write_bytes(checkpoint_to_bytes(ckpt))


def checkpoint_load(path):
    return checkpoint_from_bytes(Path(path).read_bytes())
