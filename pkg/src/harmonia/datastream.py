"""Training-sample construction for both data streams.

Stream 1 (supervised) turns an artist retouch triplet (original, retouched,
mask) into two composites: foreground-only retouched with the original as
ground truth, and background-only retouched with the retouched image as
ground truth. Stream 2 (unsupervised) pastes the foreground of one image
onto the inpainted background of another; the matching "real" sample for the
discriminator pastes a foreground back onto its own inpainted background so
inpainting seams exist in both classes.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .image import (
    ManifestEntry,
    adjust_brightness,
    as_image,
    as_mask,
    composite,
    dilate_mask,
    load_image,
    load_mask,
    resize_bilinear,
    save_image,
)


class Stream(Enum):
    SUPERVISED = "s1"
    UNSUPERVISED = "s2"


class DataConfigError(ValueError):
    """Sampling requested from a stream with no usable manifest."""


@dataclass(frozen=True)
class RetouchTriplet:
    original: np.ndarray
    retouched: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        o = as_image(self.original)
        r = as_image(self.retouched)
        m = as_mask(self.mask)
        if o.shape != r.shape or o.shape[:2] != m.shape:
            raise ValueError(
                f"triplet dimensions differ: original {o.shape}, retouched {r.shape}, mask {m.shape}"
            )
        object.__setattr__(self, "original", o)
        object.__setattr__(self, "retouched", r)
        object.__setattr__(self, "mask", m)


@dataclass(frozen=True)
class CompositeSample:
    """One training example. target is present exactly for supervised samples."""

    composite: np.ndarray
    background: np.ndarray
    mask: np.ndarray
    target: np.ndarray | None
    stream: Stream

    def __post_init__(self):
        if (self.stream is Stream.SUPERVISED) != (self.target is not None):
            raise ValueError("target must be present iff the sample is supervised")
        shapes = {self.composite.shape[:2], self.background.shape[:2], self.mask.shape[:2]}
        if self.target is not None:
            shapes.add(self.target.shape[:2])
        if len(shapes) != 1:
            raise ValueError(f"sample tensors disagree on spatial dims: {shapes}")


def stream1_samples(t: RetouchTriplet) -> tuple[CompositeSample, CompositeSample]:
    """Both supervised composites from one retouch triplet.

    Sample A composites the retouched foreground over the original (target:
    original); sample B composites the original foreground over the
    retouched image (target: retouched). The background field is the
    composite with the foreground zeroed, the model's context buffer.
    """
    comp_a = composite(t.retouched, t.original, t.mask)
    comp_b = composite(t.original, t.retouched, t.mask)
    inv = (1.0 - t.mask)[:, :, None]
    return (
        CompositeSample(comp_a, comp_a * inv, t.mask, t.original, Stream.SUPERVISED),
        CompositeSample(comp_b, comp_b * inv, t.mask, t.retouched, Stream.SUPERVISED),
    )


def naive_inpaint(img: np.ndarray, mask: np.ndarray, tol: float = 1e-4, max_iters: int = 500) -> np.ndarray:
    """Diffusion fill: Jacobi iteration of the discrete Laplace equation.

    Pixels with mask > 0 are unknowns initialized to the mean of the known
    region and repeatedly replaced by their 4-neighbor average until the
    largest per-iteration change drops below tol (or max_iters). Pixels with
    mask == 0 are returned bit-for-bit.
    """
    img = as_image(img)
    mask = as_mask(mask)
    if img.shape[:2] != mask.shape:
        raise ValueError(f"image {img.shape[:2]} and mask {mask.shape} dimensions differ")
    hole = mask > 0.0
    if hole.all():
        raise ValueError("mask covers the whole image; no source pixels to diffuse from")
    if not hole.any():
        return img.copy()
    out = img.copy()
    out[hole] = img[~hole].mean(axis=0)
    hole3 = hole[:, :, None]
    for _ in range(max_iters):
        padded = np.pad(out, ((1, 1), (1, 1), (0, 0)), mode="edge")
        neighbors = (
            padded[:-2, 1:-1] + padded[2:, 1:-1] + padded[1:-1, :-2] + padded[1:-1, 2:]
        ) * 0.25
        new = np.where(hole3, neighbors, out)
        delta = float(np.max(np.abs(new - out)))
        out = new
        if delta < tol:
            break
    return np.clip(out, 0.0, 1.0)


def stream2_composite(
    fg_src: tuple[np.ndarray, np.ndarray],
    bg_src: tuple[np.ndarray, np.ndarray],
    inpaint,
    dilation: int = 30,
) -> CompositeSample:
    """Unsupervised composite: foreground of j over the inpainted background of i.

    Both sources must already share dimensions. The background donor's mask
    is dilated before inpainting so no trace of its own subject remains.
    """
    fg_img, fg_mask = as_image(fg_src[0]), as_mask(fg_src[1])
    bg_img, bg_mask = as_image(bg_src[0]), as_mask(bg_src[1])
    if fg_img.shape != bg_img.shape:
        raise ValueError(f"sources differ in shape: {fg_img.shape} vs {bg_img.shape}")
    background = inpaint(bg_img, dilate_mask(bg_mask, dilation))
    comp = composite(fg_img, background, fg_mask)
    return CompositeSample(comp, background, fg_mask, None, Stream.UNSUPERVISED)


def make_real_sample(img: np.ndarray, mask: np.ndarray, inpaint, dilation: int = 30) -> np.ndarray:
    """Discriminator "real" class: a foreground pasted back onto its own
    inpainted background, so inpainting seams are not a real/fake cue."""
    img = as_image(img)
    mask = as_mask(mask)
    background = inpaint(img, dilate_mask(mask, dilation))
    return composite(img, background, mask)


class CachingInpainter:
    """Disk cache around an inpaint callable.

    Files live at <cache_dir>/<sha256 of image+mask bytes>.png as 16-bit
    PNGs. On a cache hit, unmasked pixels are restored from the live input
    so the provider contract (mask == 0 pixels untouched) holds bit-for-bit
    despite PNG quantization.
    """

    def __init__(self, base, cache_dir):
        self.base = base
        self.cache_dir = Path(cache_dir)
        self.cache_dir.mkdir(parents=True, exist_ok=True)

    def __call__(self, img: np.ndarray, mask: np.ndarray) -> np.ndarray:
        img = as_image(img)
        mask = as_mask(mask)
        digest = hashlib.sha256()
        digest.update(np.ascontiguousarray(img).tobytes())
        digest.update(np.ascontiguousarray(mask).tobytes())
        path = self.cache_dir / f"{digest.hexdigest()}.png"
        if path.exists():
            cached = load_image(path)
            return np.where(mask[:, :, None] > 0.0, cached, img)
        out = self.base(img, mask)
        save_image(out, path, bit_depth=16)
        return np.where(mask[:, :, None] > 0.0, out, img)


class SubprocessInpainter:
    """Adapter for an external inpainting tool.

    Invoked as `cmd in.png mask.png out.png`, exit 0 on success. Unmasked
    pixels are restored from the input afterwards, which keeps the provider
    contract exact regardless of what the tool writes there.
    """

    def __init__(self, cmd: list[str]):
        self.cmd = list(cmd)

    def __call__(self, img: np.ndarray, mask: np.ndarray) -> np.ndarray:
        import subprocess
        import tempfile

        img = as_image(img)
        mask = as_mask(mask)
        with tempfile.TemporaryDirectory(prefix="harmonia-inpaint-") as tmp:
            tmp = Path(tmp)
            save_image(img, tmp / "in.png", bit_depth=16)
            save_image(mask, tmp / "mask.png", bit_depth=16)
            proc = subprocess.run(
                [*self.cmd, str(tmp / "in.png"), str(tmp / "mask.png"), str(tmp / "out.png")],
                capture_output=True,
                text=True,
            )
            if proc.returncode != 0:
                raise RuntimeError(
                    f"external inpainter failed (exit {proc.returncode}): {proc.stderr.strip()}"
                )
            out = load_image(tmp / "out.png")
        if out.shape != img.shape:
            raise RuntimeError(f"external inpainter changed shape: {out.shape} vs {img.shape}")
        return np.where(mask[:, :, None] > 0.0, out, img)


@dataclass
class TrainingData:
    """Manifest-backed sample sources at a fixed training resolution."""

    stream1: list[ManifestEntry] | None = None
    stream2: list[ManifestEntry] | None = None
    resolution: int = 64
    inpaint: object = naive_inpaint
    dilation: int = 30
    brightness_range: tuple = (0.5, 1.5)
    _images: dict = field(default_factory=dict, repr=False)
    _masks: dict = field(default_factory=dict, repr=False)
    _inpainted: dict = field(default_factory=dict, repr=False)

    def _image(self, path) -> np.ndarray:
        key = str(path)
        if key not in self._images:
            img = load_image(path)
            if img.shape[2] == 1:
                img = np.repeat(img, 3, axis=2)
            self._images[key] = resize_bilinear(img, self.resolution, self.resolution)
        return self._images[key]

    def _mask(self, path) -> np.ndarray:
        key = str(path)
        if key not in self._masks:
            self._masks[key] = resize_bilinear(load_mask(path), self.resolution, self.resolution)
        return self._masks[key]

    def memo_inpaint(self, img: np.ndarray, mask: np.ndarray) -> np.ndarray:
        """Inpaint with per-content memoization; each background is computed once."""
        key = hashlib.sha256(img.tobytes() + mask.tobytes()).hexdigest()
        if key not in self._inpainted:
            self._inpainted[key] = self.inpaint(img, mask)
        return self._inpainted[key]

    def triplet(self, index: int) -> RetouchTriplet:
        e = self.stream1[index]
        return RetouchTriplet(self._image(e.image), self._image(e.retouched), self._mask(e.mask))

    def pair(self, index: int) -> tuple[np.ndarray, np.ndarray]:
        e = self.stream2[index]
        return self._image(e.image), self._mask(e.mask)


def draw_supervised(rng: np.random.Generator, data: TrainingData) -> tuple[CompositeSample, np.ndarray]:
    """One stream-1 sample with on-the-fly foreground brightness augmentation.

    Returns (sample, discriminator real image); the real class for this
    stream is the ground-truth target itself.
    """
    if not data.stream1:
        raise DataConfigError("supervised stream requested but no triplet manifest is loaded")
    t = data.triplet(int(rng.integers(len(data.stream1))))
    pick = int(rng.integers(2))
    sample = stream1_samples(t)[pick]
    lo, hi = data.brightness_range
    factor = float(rng.uniform(lo, hi))
    aug = adjust_brightness(sample.composite, sample.mask, factor)
    inv = (1.0 - sample.mask)[:, :, None]
    sample = CompositeSample(aug, aug * inv, sample.mask, sample.target, Stream.SUPERVISED)
    return sample, sample.target


def draw_unsupervised(rng: np.random.Generator, data: TrainingData) -> tuple[CompositeSample, np.ndarray]:
    """One stream-2 sample from a uniformly drawn i != j pair.

    Returns (sample, discriminator real image); the real image reuses the
    background donor i per the real-class construction.
    """
    if not data.stream2 or len(data.stream2) < 2:
        raise DataConfigError("unsupervised stream needs a manifest with at least 2 images")
    n = len(data.stream2)
    i = int(rng.integers(n))
    j = int(rng.integers(n - 1))
    if j >= i:
        j += 1
    bg_img, bg_mask = data.pair(i)
    fg_img, fg_mask = data.pair(j)
    sample = stream2_composite((fg_img, fg_mask), (bg_img, bg_mask), data.memo_inpaint, data.dilation)
    real = make_real_sample(bg_img, bg_mask, data.memo_inpaint, data.dilation)
    return sample, real


def sample_batch(
    rng: np.random.Generator,
    data: TrainingData,
    batch: int,
    stream_probability: float = 0.5,
) -> list[CompositeSample]:
    """Draw `batch` independent samples; each is stream 1 with probability
    stream_probability, else stream 2."""
    out = []
    for _ in range(batch):
        if rng.random() < stream_probability:
            sample, _ = draw_supervised(rng, data)
        else:
            sample, _ = draw_unsupervised(rng, data)
        out.append(sample)
    return out
