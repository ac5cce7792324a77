"""Minimal PNG codec: 8/16-bit, grayscale and RGB.

Pillow silently narrows 16-bit RGB PNGs to 8 bits on read and cannot write
them at all, so the 16-bit paths are handled here. Written files always use
filter type 0 and a fixed zlib level, which keeps output bytes deterministic
for a given array.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

_SIGNATURE = b"\x89PNG\r\n\x1a\n"
_ZLIB_LEVEL = 6


class PngError(Exception):
    """Malformed or unsupported PNG data."""


def _chunk(tag: bytes, data: bytes) -> bytes:
    crc = zlib.crc32(tag + data) & 0xFFFFFFFF
    return struct.pack(">I", len(data)) + tag + data + struct.pack(">I", crc)


def encode(arr: np.ndarray) -> bytes:
    """Encode a uint8/uint16 array of shape (H, W) or (H, W, 3) as PNG bytes."""
    if arr.dtype == np.uint8:
        depth = 8
    elif arr.dtype == np.uint16:
        depth = 16
    else:
        raise PngError(f"unsupported dtype {arr.dtype}, expected uint8 or uint16")
    if arr.ndim == 2:
        color = 0
    elif arr.ndim == 3 and arr.shape[2] == 3:
        color = 2
    else:
        raise PngError(f"unsupported array shape {arr.shape}")

    h, w = arr.shape[:2]
    ihdr = struct.pack(">IIBBBBB", w, h, depth, color, 0, 0, 0)
    raw = arr.astype(">u2").tobytes() if depth == 16 else arr.tobytes()
    stride = w * (1 if color == 0 else 3) * (depth // 8)
    scanlines = b"".join(
        b"\x00" + raw[y * stride : (y + 1) * stride] for y in range(h)
    )
    return (
        _SIGNATURE
        + _chunk(b"IHDR", ihdr)
        + _chunk(b"IDAT", zlib.compress(scanlines, _ZLIB_LEVEL))
        + _chunk(b"IEND", b"")
    )


def bit_depth(data: bytes) -> int:
    """Read the bit depth (8 or 16) from PNG header bytes."""
    if data[:8] != _SIGNATURE or data[12:16] != b"IHDR":
        raise PngError("not a PNG file")
    depth = data[24]
    if depth not in (8, 16):
        raise PngError(f"unsupported bit depth {depth}")
    return depth


def decode(data: bytes) -> np.ndarray:
    """Decode PNG bytes to a uint8/uint16 array, shape (H, W) or (H, W, 3)."""
    if data[:8] != _SIGNATURE:
        raise PngError("not a PNG file (bad signature)")
    pos = 8
    ihdr = None
    idat = []
    while pos + 8 <= len(data):
        (length,) = struct.unpack(">I", data[pos : pos + 4])
        tag = data[pos + 4 : pos + 8]
        body = data[pos + 8 : pos + 8 + length]
        if len(body) != length:
            raise PngError("truncated chunk")
        (crc,) = struct.unpack(">I", data[pos + 8 + length : pos + 12 + length])
        if crc != zlib.crc32(tag + body) & 0xFFFFFFFF:
            raise PngError(f"CRC mismatch in {tag!r} chunk")
        if tag == b"IHDR":
            ihdr = struct.unpack(">IIBBBBB", body)
        elif tag == b"IDAT":
            idat.append(body)
        elif tag == b"IEND":
            break
        pos += 12 + length
    if ihdr is None:
        raise PngError("missing IHDR chunk")
    w, h, depth, color, comp, filt, interlace = ihdr
    if comp != 0 or filt != 0:
        raise PngError("unsupported compression or filter method")
    if interlace != 0:
        raise PngError("interlaced PNG not supported")
    if depth not in (8, 16):
        raise PngError(f"unsupported bit depth {depth}")
    if color not in (0, 2):
        raise PngError(f"unsupported color type {color} (need grayscale or RGB)")

    channels = 1 if color == 0 else 3
    bpp = channels * (depth // 8)
    stride = w * bpp
    raw = zlib.decompress(b"".join(idat))
    if len(raw) != h * (stride + 1):
        raise PngError("decompressed size does not match dimensions")

    rows = np.frombuffer(raw, dtype=np.uint8).reshape(h, stride + 1)
    filters = rows[:, 0]
    recon = _unfilter(rows[:, 1:], filters, bpp)

    if depth == 16:
        arr = recon.reshape(h, stride).view(">u2").astype(np.uint16)
        arr = arr.reshape(h, w, channels)
    else:
        arr = recon.reshape(h, w, channels)
    return arr[:, :, 0] if channels == 1 else arr


def _unfilter(filtered: np.ndarray, filters: np.ndarray, bpp: int) -> np.ndarray:
    """Undo PNG scanline filters. Our own files are all filter 0 (fast path)."""
    if not filters.any():
        return filtered.copy()
    h, stride = filtered.shape
    out = np.zeros((h, stride), dtype=np.uint8)
    prior = np.zeros(stride, dtype=np.uint8)
    for y in range(h):
        row = filtered[y]
        f = filters[y]
        if f == 0:
            rec = row.copy()
        elif f == 1:  # Sub: cumulative sum per byte lane, modulo 256
            lanes = row.reshape(-1, bpp).astype(np.int64)
            rec = (np.cumsum(lanes, axis=0) % 256).astype(np.uint8).reshape(-1)
        elif f == 2:  # Up
            rec = row + prior
        elif f == 3:  # Average (left-dependent, per-pixel walk)
            rec = np.empty(stride, dtype=np.uint8)
            left = np.zeros(bpp, dtype=np.int64)
            p = prior.astype(np.int64)
            r = row.astype(np.int64)
            for x in range(0, stride, bpp):
                px = (r[x : x + bpp] + (left + p[x : x + bpp]) // 2) % 256
                rec[x : x + bpp] = px
                left = px
        elif f == 4:  # Paeth
            rec = np.empty(stride, dtype=np.uint8)
            left = np.zeros(bpp, dtype=np.int64)
            upleft = np.zeros(bpp, dtype=np.int64)
            p = prior.astype(np.int64)
            r = row.astype(np.int64)
            for x in range(0, stride, bpp):
                up = p[x : x + bpp]
                est = left + up - upleft
                pa, pb, pc = abs(est - left), abs(est - up), abs(est - upleft)
                pred = np.where((pa <= pb) & (pa <= pc), left, np.where(pb <= pc, up, upleft))
                px = (r[x : x + bpp] + pred) % 256
                rec[x : x + bpp] = px
                left = px
                upleft = up
        else:
            raise PngError(f"unknown filter type {f}")
        out[y] = rec
        prior = rec
    return out
