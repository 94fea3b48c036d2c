"""Binary on-disk format for pathway masks.

Layout (all integers little-endian):

    magic     4 bytes   b"NPWY"
    version   u16       format version, currently 1
    layers    u32       number of layers k
    dims      k * 3*u32 per-layer (channels, height, width)
    payload   per layer: flattened row-major mask bits, packed LSB-first
              within each byte, padded to a byte boundary per layer
    checksum  u32       CRC-32 of the payload bytes

Round-trips are bit-exact; the checksum is verified on read.
"""
from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np
import torch

from .errors import DataFormatError
from .masks import PathwayMask, Shape3

MAGIC = b"NPWY"
FORMAT_VERSION = 1


def _pack_layer(mask: torch.Tensor) -> bytes:
    bits = (mask.detach().cpu().numpy() != 0).astype(np.uint8).ravel()
    return np.packbits(bits, bitorder="little").tobytes()


def _unpack_layer(data: bytes, shape: Shape3) -> torch.Tensor:
    total = int(np.prod(shape))
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8), bitorder="little")[:total]
    return torch.from_numpy(bits.astype(np.float32).reshape(shape))


def write_mask(path: str | Path, mask: PathwayMask) -> None:
    """Persist a finalized single-sample mask."""
    if mask.batched:
        raise ValueError("mask files hold one sample; write batched masks per sample")
    mask.validate_binary()
    header = MAGIC + struct.pack("<HI", FORMAT_VERSION, len(mask.masks))
    for c, h, w in mask.layer_shapes:
        header += struct.pack("<III", c, h, w)
    payload = b"".join(_pack_layer(m) for m in mask.masks)
    checksum = struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(header + payload + checksum)


def read_mask(path: str | Path) -> PathwayMask:
    path = Path(path)
    if not path.exists():
        raise DataFormatError(f"mask file not found: {path}")
    raw = path.read_bytes()
    if len(raw) < 10 or raw[:4] != MAGIC:
        raise DataFormatError(f"{path}: not a pathway mask file (bad magic)")
    version, layers = struct.unpack_from("<HI", raw, 4)
    if version != FORMAT_VERSION:
        raise DataFormatError(f"{path}: unsupported mask format version {version}")
    offset = 10
    shapes: list[Shape3] = []
    for _ in range(layers):
        if offset + 12 > len(raw):
            raise DataFormatError(f"{path}: truncated header")
        shapes.append(struct.unpack_from("<III", raw, offset))
        offset += 12
    payload_len = sum((int(np.prod(s)) + 7) // 8 for s in shapes)
    if offset + payload_len + 4 != len(raw):
        raise DataFormatError(
            f"{path}: size mismatch, expected {offset + payload_len + 4} bytes, got {len(raw)}"
        )
    payload = raw[offset : offset + payload_len]
    (stored,) = struct.unpack_from("<I", raw, offset + payload_len)
    actual = zlib.crc32(payload) & 0xFFFFFFFF
    if stored != actual:
        raise DataFormatError(
            f"{path}: checksum mismatch (stored {stored:#010x}, computed {actual:#010x})"
        )
    masks = []
    cursor = 0
    for s in shapes:
        nbytes = (int(np.prod(s)) + 7) // 8
        masks.append(_unpack_layer(payload[cursor : cursor + nbytes], s))
        cursor += nbytes
    return PathwayMask(masks)
