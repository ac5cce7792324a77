"""Quantitative evaluation: MSE/PSNR/SSIM over benchmark manifests, and
Bradley-Terry maximum-likelihood ranking of pairwise preference data.

MSE is computed on the 0..255 scale so PSNR follows
10*log10(255^2 / MSE); identical images report the 99 dB sentinel instead
of infinity. SSIM uses the standard 11x11 Gaussian window (sigma 1.5,
K1 = 0.01, K2 = 0.03) on luma at unit dynamic range.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import correlate1d

from .image import as_image, load_image, load_manifest, resize_bilinear

PSNR_SENTINEL_DB = 99.0

_SSIM_WINDOW = 11
_SSIM_SIGMA = 1.5
_SSIM_K1 = 0.01
_SSIM_K2 = 0.03


def mse_255(pred: np.ndarray, gt: np.ndarray) -> float:
    """Mean over elements of (255 * (pred - gt))^2."""
    pred = as_image(pred)
    gt = as_image(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    diff = 255.0 * (pred - gt)
    return float(np.mean(diff * diff))


def psnr(pred: np.ndarray, gt: np.ndarray) -> float:
    """10*log10(255^2 / MSE) in dB; identical inputs return the 99 dB sentinel."""
    mse = mse_255(pred, gt)
    if mse == 0.0:
        return PSNR_SENTINEL_DB
    return float(10.0 * np.log10(255.0**2 / mse))


def _luma(img: np.ndarray) -> np.ndarray:
    if img.shape[2] == 1:
        return img[:, :, 0]
    return 0.299 * img[:, :, 0] + 0.587 * img[:, :, 1] + 0.114 * img[:, :, 2]


def _gaussian_kernel():
    r = _SSIM_WINDOW // 2
    x = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * _SSIM_SIGMA**2))
    return k / k.sum()


def _filter_valid(img: np.ndarray) -> np.ndarray:
    """Separable Gaussian filter, cropped to the valid region."""
    k = _gaussian_kernel()
    r = _SSIM_WINDOW // 2
    out = correlate1d(img, k, axis=0, mode="constant")
    out = correlate1d(out, k, axis=1, mode="constant")
    return out[r:-r, r:-r]


def ssim(pred: np.ndarray, gt: np.ndarray) -> float:
    """Mean local structural similarity on luma, in [-1, 1]."""
    pred = as_image(pred)
    gt = as_image(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    if pred.shape[0] < _SSIM_WINDOW or pred.shape[1] < _SSIM_WINDOW:
        raise ValueError(
            f"image {pred.shape[:2]} smaller than the {_SSIM_WINDOW}x{_SSIM_WINDOW} SSIM window"
        )
    x = _luma(pred)
    y = _luma(gt)
    c1 = (_SSIM_K1 * 1.0) ** 2
    c2 = (_SSIM_K2 * 1.0) ** 2

    mu_x = _filter_valid(x)
    mu_y = _filter_valid(y)
    xx = _filter_valid(x * x) - mu_x * mu_x
    yy = _filter_valid(y * y) - mu_y * mu_y
    xy = _filter_valid(x * y) - mu_x * mu_y

    num = (2 * mu_x * mu_y + c1) * (2 * xy + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (xx + yy + c2)
    return float(np.mean(num / den))


@dataclass
class MetricReport:
    n: int
    resolution: int
    mse: float
    psnr: float
    ssim: float
    per_image: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(
            {
                "n": self.n,
                "resolution": self.resolution,
                "mse": self.mse,
                "psnr": self.psnr,
                "ssim": self.ssim,
                "lpips": None,
                "per_image": self.per_image,
            }
        )


def run_benchmark(pred_manifest, gt_manifest, resolution: int) -> MetricReport:
    """Resize prediction/ground-truth pairs (aligned by id) and aggregate
    per-image metrics; PSNR is averaged per image, benchmark style."""
    preds = {e.id: e for e in load_manifest(pred_manifest)}
    gts = {e.id: e for e in load_manifest(gt_manifest)}
    missing_gt = sorted(set(preds) - set(gts))
    missing_pred = sorted(set(gts) - set(preds))
    if missing_gt or missing_pred:
        raise ValueError(
            f"manifest ids misaligned; missing from gt: {missing_gt}, missing from pred: {missing_pred}"
        )
    per_image = []
    for key in sorted(preds):
        p = resize_bilinear(_rgb(load_image(preds[key].image)), resolution, resolution)
        g = resize_bilinear(_rgb(load_image(gts[key].image)), resolution, resolution)
        per_image.append(
            {"id": key, "mse": mse_255(p, g), "psnr": psnr(p, g), "ssim": ssim(p, g)}
        )
    return MetricReport(
        n=len(per_image),
        resolution=resolution,
        mse=float(np.mean([r["mse"] for r in per_image])),
        psnr=float(np.mean([r["psnr"] for r in per_image])),
        ssim=float(np.mean([r["ssim"] for r in per_image])),
        per_image=per_image,
    )


def _rgb(img: np.ndarray) -> np.ndarray:
    return np.repeat(img, 3, axis=2) if img.shape[2] == 1 else img


# --------------------------------------------------------------------------
# Bradley-Terry ranking


@dataclass(frozen=True)
class PairwiseComparisons:
    methods: tuple
    records: tuple  # (method_a, method_b, winner) triples

    def __post_init__(self):
        names = set(self.methods)
        appearing = set()
        for a, b, winner in self.records:
            if a not in names or b not in names:
                raise ValueError(f"record references unknown method: {(a, b)}")
            if winner not in (a, b):
                raise ValueError(f"winner {winner!r} is neither {a!r} nor {b!r}")
            appearing.update((a, b))
        missing = names - appearing
        if missing:
            raise ValueError(f"methods never compared: {sorted(missing)}")


def load_comparisons_csv(path) -> PairwiseComparisons:
    """CSV with header method_a,method_b,winner; winner is a method name."""
    records = []
    methods = []
    seen = set()
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        required = {"method_a", "method_b", "winner"}
        if reader.fieldnames is None or not required <= set(reader.fieldnames):
            raise ValueError(f"{path}: expected header with columns {sorted(required)}")
        for row in reader:
            a, b, winner = row["method_a"], row["method_b"], row["winner"]
            for name in (a, b):
                if name not in seen:
                    seen.add(name)
                    methods.append(name)
            records.append((a, b, winner))
    if not records:
        raise ValueError(f"{path}: no comparison records")
    return PairwiseComparisons(tuple(methods), tuple(records))


def _components(methods, records):
    index = {m: i for i, m in enumerate(methods)}
    parent = list(range(len(methods)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for a, b, _ in records:
        ra, rb = find(index[a]), find(index[b])
        if ra != rb:
            parent[ra] = rb
    groups: dict[int, list] = {}
    for m in methods:
        groups.setdefault(find(index[m]), []).append(m)
    return list(groups.values())


def bt_fit(data: PairwiseComparisons, iters: int = 100_000, tol: float = 1e-10) -> dict[str, float]:
    """Maximum-likelihood Bradley-Terry strengths, normalized to sum 1.

    P(a beats b) = s_a / (s_a + s_b), fit by the minorization-maximization
    iteration s_i <- wins_i / sum_j n_ij / (s_i + s_j). The comparison graph
    must be connected. Methods with zero wins converge to score 0 (no
    regularization is added).
    """
    comps = _components(data.methods, data.records)
    if len(comps) > 1:
        raise ValueError(f"comparison graph is disconnected; components: {comps}")

    methods = list(data.methods)
    index = {m: i for i, m in enumerate(methods)}
    k = len(methods)
    wins = np.zeros(k)
    n_pairs = np.zeros((k, k))
    for a, b, winner in data.records:
        ia, ib = index[a], index[b]
        n_pairs[ia, ib] += 1
        n_pairs[ib, ia] += 1
        wins[index[winner]] += 1

    s = np.full(k, 1.0 / k)
    for _ in range(iters):
        denom = np.zeros(k)
        for i in range(k):
            active = n_pairs[i] > 0
            denom[i] = np.sum(n_pairs[i, active] / (s[i] + s[active]))
        new = np.where(denom > 0, wins / np.maximum(denom, 1e-300), 0.0)
        total = new.sum()
        if total == 0:
            raise ValueError("degenerate comparison data: no wins recorded")
        new /= total
        if np.max(np.abs(new - s)) < tol:
            s = new
            break
        s = new
    s /= s.sum()
    return {m: float(s[index[m]]) for m in methods}
