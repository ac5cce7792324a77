"""Reconstruction and adversarial objectives.

The discriminator is trained per pixel: real images carry an all-ones target
map, fake (harmonized) images carry the inverted foreground mask 1-M, since
only foreground pixels can be synthetic. Written out as masked binary
cross-entropy this is numerically total; every log argument is clamped at a
small epsilon. The generator term averages -log D over foreground pixels
only (mask-weighted): the transform cannot change the background, so
background scores are constant with respect to the generator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


@dataclass(frozen=True)
class LossWeights:
    lam: float = 0.92  # weight on reconstruction vs adversarial term
    eps: float = 1e-7  # log clamp floor

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must be in [0, 1], got {self.lam}")
        if not self.eps > 0:
            raise ValueError(f"epsilon must be positive, got {self.eps}")


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else ad.constant(np.asarray(x, dtype=np.float64))


def l1_loss(pred, target) -> Tensor:
    """Mean absolute difference over all elements."""
    pred = _lift(pred)
    target_arr = target.value if isinstance(target, Tensor) else np.asarray(target, dtype=np.float64)
    if pred.value.shape != target_arr.shape:
        raise ValueError(f"shape mismatch: pred {pred.value.shape}, target {target_arr.shape}")
    return ad.mean_t(ad.abs_t(ad.sub(pred, ad.constant(target_arr))))


def disc_loss(real_scores, fake_scores, fake_mask, w: LossWeights = LossWeights()) -> Tensor:
    """Per-pixel discriminator objective.

    Real pixels have target 1: mean of -log D(real). Fake pixels have target
    1-M: mean of -[(1-M) log D + M log(1-D)]. Either side may be None, which
    drops that term (useful for isolating one class).
    """
    terms = []
    if real_scores is not None:
        r = _lift(real_scores)
        terms.append(ad.mean_t(-ad.log_clamped(r, w.eps)))
    if fake_scores is not None:
        f = _lift(fake_scores)
        m = np.asarray(fake_mask, dtype=np.float64)
        if m.shape != f.value.shape:
            raise ValueError(f"fake mask {m.shape} does not match scores {f.value.shape}")
        pos = ad.mul(ad.constant(1.0 - m), ad.log_clamped(f, w.eps))
        neg = ad.mul(ad.constant(m), ad.log_clamped(ad.sub(1.0, f), w.eps))
        terms.append(ad.mean_t(-ad.add(pos, neg)))
    if not terms:
        raise ValueError("disc_loss needs at least one of real_scores/fake_scores")
    out = terms[0]
    for t in terms[1:]:
        out = ad.add(out, t)
    return out


def gen_loss(fake_scores, fake_mask, w: LossWeights = LossWeights()) -> Tensor:
    """Mask-weighted mean of -log D over the generator-controlled pixels."""
    f = _lift(fake_scores)
    m = np.asarray(fake_mask, dtype=np.float64)
    if m.shape != f.value.shape:
        raise ValueError(f"fake mask {m.shape} does not match scores {f.value.shape}")
    total = m.sum()
    if total == 0.0:
        raise ValueError("gen_loss undefined for an all-zero mask (no generator-controlled pixels)")
    weighted = ad.sum_t(ad.mul(ad.constant(m), -ad.log_clamped(f, w.eps)))
    return ad.div(weighted, ad.constant(total))


def combined_supervised_loss(pred, target, fake_scores, mask, w: LossWeights = LossWeights()) -> Tensor:
    """lambda * L1 + (1 - lambda) * generator loss."""
    rec = l1_loss(pred, target)
    if w.lam == 1.0:
        return rec
    adv = gen_loss(fake_scores, mask, w)
    return ad.add(ad.mul(rec, w.lam), ad.mul(adv, 1.0 - w.lam))


def unsupervised_loss(fake_scores, mask, w: LossWeights = LossWeights()) -> Tensor:
    """(1 - lambda) * generator loss; the no-ground-truth stream objective."""
    return ad.mul(gen_loss(fake_scores, mask, w), 1.0 - w.lam)
