"""How training data is formed.

Stream 1: an artist retouch triplet yields two supervised composites
(foreground-only and background-only edits) with their ground truths.
Stream 2: unsupervised composites paste the subject of one photo onto the
diffusion-inpainted background of another; the discriminator's "real" class
pastes a subject back onto its own inpainted background.
"""

from pathlib import Path

import numpy as np

from harmonia.datastream import (
    RetouchTriplet,
    make_real_sample,
    naive_inpaint,
    stream1_samples,
    stream2_composite,
)
from harmonia.image import resize_bilinear, save_image

OUT = Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)


def photo(rng, size=96):
    return np.clip(resize_bilinear(rng.random((6, 6, 3)), size, size), 0, 1)


def blob_mask(cy, cx, r, size=96):
    yy, xx = np.mgrid[0:size, 0:size]
    return (((yy - cy) ** 2 + (xx - cx) ** 2) <= r * r).astype(float)


def main():
    rng = np.random.default_rng(2)

    # ---- stream 1: supervised pairs from a retouch triplet
    original = photo(rng)
    mask = blob_mask(55, 48, 22)
    retouched = np.clip(original * np.array([1.25, 1.1, 0.85]) + 0.05, 0, 1)
    fg_edit, bg_edit = stream1_samples(RetouchTriplet(original, retouched, mask))
    save_image(fg_edit.composite, OUT / "s1_fg_edited.png")
    save_image(bg_edit.composite, OUT / "s1_bg_edited.png")
    print("stream 1: two composites per triplet")
    print(f"  fg-edited composite, target = original  (L1 gap {np.abs(fg_edit.composite - fg_edit.target).mean():.4f})")
    print(f"  bg-edited composite, target = retouched (L1 gap {np.abs(bg_edit.composite - bg_edit.target).mean():.4f})")

    # ---- stream 2: unsupervised composite over an inpainted donor background
    donor = photo(rng)
    donor_mask = blob_mask(40, 40, 18)
    subject = photo(rng)
    subject_mask = blob_mask(60, 55, 20)

    sample = stream2_composite(
        (subject, subject_mask), (donor, donor_mask), naive_inpaint, dilation=8
    )
    save_image(sample.background, OUT / "s2_inpainted_bg.png")
    save_image(sample.composite, OUT / "s2_composite.png")
    print("stream 2: composite has no ground truth:", sample.target is None)

    hole = donor_mask > 0
    changed = np.abs(sample.background - donor)[hole].mean()
    print(f"  donor subject removed by diffusion fill (mean change in hole {changed:.4f})")

    real = make_real_sample(donor, donor_mask, naive_inpaint, dilation=8)
    save_image(real, OUT / "s2_real_class.png")
    print("  real class pastes the donor subject back over its own inpainted background,")
    print("  so inpainting seams appear in both classes and are useless to the critic")


if __name__ == "__main__":
    main()
