"""Model checkpoint serialization.

Binary layout (little-endian):
  magic "SPLM" | version u32 = 1 | d_model u32 | U u32 | L u32
  then named tensors until end of file, each:
  name_len u16 | name UTF-8 | rank u8 | dims u32 x rank | f32 data

Tensor names are the stable identifiers documented in the README
(embed.table, attn.cross1.src.wq, han.src.c, fusion.proj.w,
clf.out.b, labels.embed, ...). Non-tensor run settings (label names,
head count, provider selection) live in a sidecar JSON file at
``<checkpoint>.json`` because the binary table carries floats only.
"""

from __future__ import annotations

import json
import struct
from typing import BinaryIO, Dict, Tuple

import numpy as np

from .errors import FormatError
from .tensor import Tensor

MAGIC = b"SPLM"
VERSION = 1


def _read_exact(fh: BinaryIO, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise FormatError(f"truncated checkpoint: expected {n} bytes for {what}, "
                          f"got {len(buf)}")
    return buf


def save_checkpoint(path: str, d_model: int, U: int, L: int,
                    tensors: Dict[str, Tensor], config: dict) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IIII", VERSION, d_model, U, L))
        for name in sorted(tensors):
            data = np.asarray(tensors[name].data, dtype="<f4")
            name_bytes = name.encode("utf-8")
            if len(name_bytes) > 0xFFFF:
                raise FormatError(f"tensor name too long: {name[:32]}...")
            fh.write(struct.pack("<H", len(name_bytes)))
            fh.write(name_bytes)
            fh.write(struct.pack("<B", data.ndim))
            for dim in data.shape:
                fh.write(struct.pack("<I", dim))
            fh.write(data.tobytes())
    with open(sidecar_path(path), "w", encoding="utf-8") as fh:
        json.dump(config, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path: str) -> Tuple[dict, Dict[str, np.ndarray], dict]:
    """Return (header, name -> float32 array, sidecar config)."""
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4, "magic")
        if magic != MAGIC:
            raise FormatError(f"bad magic: expected {MAGIC!r}, got {magic!r}")
        version, d_model, U, L = struct.unpack("<IIII", _read_exact(fh, 16, "header"))
        if version != VERSION:
            raise FormatError(f"version mismatch: expected {VERSION}, got {version}")
        tensors: Dict[str, np.ndarray] = {}
        while True:
            head = fh.read(2)
            if not head:
                break
            if len(head) != 2:
                raise FormatError("truncated checkpoint: partial tensor name length")
            (name_len,) = struct.unpack("<H", head)
            name = _read_exact(fh, name_len, "tensor name").decode("utf-8")
            (rank,) = struct.unpack("<B", _read_exact(fh, 1, f"{name} rank"))
            dims = struct.unpack(f"<{rank}I",
                                 _read_exact(fh, 4 * rank, f"{name} dims"))
            count = int(np.prod(dims, dtype=np.int64)) if rank else 1
            data = np.frombuffer(_read_exact(fh, 4 * count, f"{name} data"),
                                 dtype="<f4").reshape(dims)
            if name in tensors:
                raise FormatError(f"duplicate tensor name {name!r}")
            tensors[name] = data
    header = {"d_model": d_model, "U": U, "L": L}
    try:
        with open(sidecar_path(path), "r", encoding="utf-8") as fh:
            config = json.load(fh)
    except FileNotFoundError:
        raise FormatError(f"missing sidecar config {sidecar_path(path)}") from None
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid sidecar config: {exc}") from None
    return header, tensors, config


def sidecar_path(path: str) -> str:
    return path + ".json"
