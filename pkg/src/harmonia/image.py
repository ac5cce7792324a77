"""Core image/mask representation and the shared pixel-level operations.

Images are float64 arrays of shape (H, W, C) with C in {1, 3}, values in
[0, 1]. Masks are float64 arrays of shape (H, W) in [0, 1] and may be soft;
nothing in the engine ever binarizes them. All public operations clamp
their output back into [0, 1].
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import pngio


class ImageIOError(Exception):
    """Image file could not be read or written; carries path and cause."""

    def __init__(self, path, cause):
        self.path = Path(path)
        self.cause = cause
        super().__init__(f"{path}: {cause}")


class ManifestError(Exception):
    """Dataset manifest is malformed or references missing files."""


def as_image(arr) -> np.ndarray:
    """Coerce to a float64 (H, W, C) image, validating shape and range."""
    img = np.asarray(arr, dtype=np.float64)
    if img.ndim == 2:
        img = img[:, :, None]
    if img.ndim != 3 or img.shape[2] not in (1, 3):
        raise ValueError(f"expected (H, W, 1|3) image, got shape {img.shape}")
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains non-finite values")
    if img.min() < 0.0 or img.max() > 1.0:
        raise ValueError("image values outside [0, 1]")
    return img


def as_mask(arr) -> np.ndarray:
    """Coerce to a float64 (H, W) mask in [0, 1]."""
    m = np.asarray(arr, dtype=np.float64)
    if m.ndim == 3 and m.shape[2] == 1:
        m = m[:, :, 0]
    if m.ndim != 2:
        raise ValueError(f"expected (H, W) mask, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("mask contains non-finite values")
    if m.min() < 0.0 or m.max() > 1.0:
        raise ValueError("mask values outside [0, 1]")
    return m


def _check_spatial(name_a: str, a: np.ndarray, name_b: str, b: np.ndarray) -> None:
    if a.shape[:2] != b.shape[:2]:
        mismatched = []
        if a.shape[0] != b.shape[0]:
            mismatched.append("height")
        if a.shape[1] != b.shape[1]:
            mismatched.append("width")
        raise ValueError(
            f"{name_a} {a.shape[:2]} and {name_b} {b.shape[:2]} differ in "
            + " and ".join(mismatched)
        )


def composite(fg: np.ndarray, bg: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Alpha-composite: per pixel M*F + (1-M)*B.

    Evaluated as B + M*(F-B) with the M=1 pixels taken from F directly, so
    the result is bit-exact wherever M is 0, wherever M is 1, and wherever
    F equals B (pasting an image onto itself is a no-op).
    """
    fg = as_image(fg)
    bg = as_image(bg)
    mask = as_mask(mask)
    if fg.shape != bg.shape:
        _check_spatial("foreground", fg, "background", bg)
        raise ValueError(
            f"foreground channels {fg.shape[2]} != background channels {bg.shape[2]}"
        )
    _check_spatial("mask", mask, "foreground", fg)
    m = mask[:, :, None]
    blended = np.where(m == 1.0, fg, bg + m * (fg - bg))
    return np.clip(blended, 0.0, 1.0)


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resample with half-pixel-centered sampling (align-corners off).

    Source coordinate for output index i is (i + 0.5) * in/out - 0.5, edges
    clamped. Separable; each axis is a lerp a + t*(b - a), so constant inputs
    are preserved bit-for-bit and outputs never leave the input value hull.
    """
    img = np.asarray(img, dtype=np.float64)
    squeeze = img.ndim == 2
    if squeeze:
        img = img[:, :, None]
    if out_h < 1 or out_w < 1:
        raise ValueError(f"target size {out_h}x{out_w} must be at least 1x1")
    if (out_h, out_w) == img.shape[:2]:
        out = img.copy()
        return out[:, :, 0] if squeeze else out
    out = _lerp_axis(img, out_h, axis=0)
    out = _lerp_axis(out, out_w, axis=1)
    out = np.clip(out, 0.0, 1.0)
    return out[:, :, 0] if squeeze else out


def _lerp_axis(arr: np.ndarray, out_size: int, axis: int) -> np.ndarray:
    in_size = arr.shape[axis]
    if out_size == in_size:
        return arr
    pos = (np.arange(out_size) + 0.5) * (in_size / out_size) - 0.5
    lo = np.floor(pos).astype(np.int64)
    t = pos - lo
    i0 = np.clip(lo, 0, in_size - 1)
    i1 = np.clip(lo + 1, 0, in_size - 1)
    a = np.take(arr, i0, axis=axis)
    b = np.take(arr, i1, axis=axis)
    shape = [1, 1, 1]
    shape[axis] = out_size
    t = t.reshape(shape)
    return a + t * (b - a)


def dilate_mask(mask: np.ndarray, radius: int) -> np.ndarray:
    """Grayscale max-dilation with a Euclidean disc of the given radius."""
    mask = as_mask(mask)
    if radius < 0:
        raise ValueError(f"radius must be >= 0, got {radius}")
    if radius == 0:
        return mask.copy()
    yy, xx = np.ogrid[-radius : radius + 1, -radius : radius + 1]
    disc = yy * yy + xx * xx <= radius * radius
    return ndimage.maximum_filter(mask, footprint=disc, mode="constant", cval=0.0)


def adjust_brightness(img: np.ndarray, mask: np.ndarray, factor: float) -> np.ndarray:
    """Scale pixel intensity under the mask by `factor`, clamped to [0, 1].

    Pixels where the mask is 0 are returned bit-for-bit unchanged; soft mask
    values blend between original and scaled.
    """
    img = as_image(img)
    mask = as_mask(mask)
    _check_spatial("mask", mask, "image", img)
    if not factor > 0.0:
        raise ValueError(f"brightness factor must be positive, got {factor}")
    scaled = np.clip(img * factor, 0.0, 1.0)
    m = mask[:, :, None]
    return np.clip(img + m * (scaled - img), 0.0, 1.0)


def decode_image(data: bytes) -> np.ndarray:
    """Decode 8- or 16-bit PNG bytes to a float image in [0, 1]."""
    arr = pngio.decode(data)
    scale = 65535.0 if arr.dtype == np.uint16 else 255.0
    return as_image(arr.astype(np.float64) / scale)


def encode_image(img: np.ndarray, bit_depth: int = 8) -> bytes:
    """Encode a float image in [0, 1] as PNG bytes."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    if bit_depth == 8:
        quant = np.round(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)
    elif bit_depth == 16:
        quant = np.round(np.clip(arr, 0.0, 1.0) * 65535.0).astype(np.uint16)
    else:
        raise ValueError(f"bit_depth must be 8 or 16, got {bit_depth}")
    return pngio.encode(quant)


def load_image(path) -> np.ndarray:
    """Load an 8- or 16-bit PNG as a float image in [0, 1]."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise ImageIOError(path, e) from e
    try:
        return decode_image(data)
    except pngio.PngError as e:
        raise ImageIOError(path, e) from e


def load_mask(path) -> np.ndarray:
    """Load a grayscale PNG as a (H, W) mask; RGB inputs use the first channel."""
    img = load_image(path)
    return img[:, :, 0]


def save_image(img: np.ndarray, path, bit_depth: int = 8) -> None:
    """Write an image or mask to PNG at the requested bit depth."""
    path = Path(path)
    try:
        path.write_bytes(encode_image(img, bit_depth))
    except (OSError, pngio.PngError) as e:
        raise ImageIOError(path, e) from e


@dataclass(frozen=True)
class ManifestEntry:
    """One dataset record; paths are resolved relative to the manifest file."""

    id: str
    image: Path
    mask: Path
    retouched: Path | None = None


def load_manifest(path, require_retouched: bool = False) -> list[ManifestEntry]:
    """Read a JSON Lines manifest.

    Each line is an object with keys "id", "image", "mask" and, for
    retouching triplets, "retouched". Ids must be unique and every
    referenced file must exist.
    """
    path = Path(path)
    base = path.parent
    entries: list[ManifestEntry] = []
    seen: set[str] = set()
    try:
        lines = path.read_text().splitlines()
    except OSError as e:
        raise ManifestError(f"{path}: {e}") from e
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as e:
            raise ManifestError(f"{path}:{lineno}: invalid JSON ({e})") from e
        for key in ("id", "image", "mask"):
            if key not in rec:
                raise ManifestError(f"{path}:{lineno}: missing key {key!r}")
        if require_retouched and "retouched" not in rec:
            raise ManifestError(f"{path}:{lineno}: missing key 'retouched'")
        if rec["id"] in seen:
            raise ManifestError(f"{path}:{lineno}: duplicate id {rec['id']!r}")
        seen.add(rec["id"])
        entry = ManifestEntry(
            id=rec["id"],
            image=base / rec["image"],
            mask=base / rec["mask"],
            retouched=(base / rec["retouched"]) if "retouched" in rec else None,
        )
        for field in ("image", "mask", "retouched"):
            p = getattr(entry, field)
            if p is not None and not p.exists():
                raise ManifestError(f"{path}:{lineno}: {field} file not found: {p}")
        entries.append(entry)
    return entries
