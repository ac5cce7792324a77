"""A miniature end-to-end training run.

Synthesizes a toy retouch dataset on disk, runs the dual-stream loop for a
few epochs at 32x32, and plots the loss traces from the JSONL metrics log.
Small on purpose: a couple of minutes on a laptop CPU.
"""

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from harmonia.image import resize_bilinear, save_image
from harmonia.trainer import TrainConfig, run_training

OUT = Path(__file__).parent / "output" / "toy_run"
DATA = Path(__file__).parent / "output" / "toy_data"


def build_dataset(rng, n_triplets=4, n_unpaired=4, size=32):
    DATA.mkdir(parents=True, exist_ok=True)
    s1, s2 = [], []
    for i in range(n_triplets):
        img = np.clip(resize_bilinear(rng.random((5, 5, 3)), size, size), 0, 1)
        gain = rng.uniform(0.7, 1.3, 3)
        ret = np.clip(img * gain, 0, 1)
        mask = np.zeros((size, size))
        mask[6:26, 8:28] = 1.0
        save_image(img, DATA / f"i{i}.png")
        save_image(ret, DATA / f"o{i}.png")
        save_image(mask, DATA / f"m{i}.png")
        s1.append({"id": f"t{i}", "image": f"i{i}.png", "retouched": f"o{i}.png", "mask": f"m{i}.png"})
    for i in range(n_unpaired):
        img = np.clip(resize_bilinear(rng.random((5, 5, 3)), size, size), 0, 1)
        mask = np.zeros((size, size))
        mask[4 + 2 * i : 20 + 2 * i, 10:26] = 1.0
        save_image(img, DATA / f"u{i}.png")
        save_image(mask, DATA / f"um{i}.png")
        s2.append({"id": f"u{i}", "image": f"u{i}.png", "mask": f"um{i}.png"})
    (DATA / "s1.jsonl").write_text("\n".join(json.dumps(r) for r in s1) + "\n")
    (DATA / "s2.jsonl").write_text("\n".join(json.dumps(r) for r in s2) + "\n")


def main():
    rng = np.random.default_rng(3)
    build_dataset(rng)

    cfg = TrainConfig(
        epochs=4,
        batch=4,
        resolution=32,
        widths=(8, 16, 32),
        disc_widths=(8, 16),
        steps_per_epoch=30,
        seed=11,
        dilation=4,
        lr=2e-4,
        decay_interval=2,
    )
    final = run_training(
        cfg,
        stream1_manifest=DATA / "s1.jsonl",
        stream2_manifest=DATA / "s2.jsonl",
        out_dir=OUT,
    )
    print(f"final checkpoint: {final}")

    rows = [json.loads(l) for l in (OUT / "metrics.jsonl").read_text().splitlines()]
    steps = [r["step"] for r in rows]
    fig, axes = plt.subplots(1, 2, figsize=(10, 3.5))
    axes[0].plot(steps, [r["gen"] for r in rows], label="generator")
    axes[0].plot(steps, [r["disc"] for r in rows], label="discriminator")
    axes[0].set_xlabel("step")
    axes[0].legend()
    axes[0].set_title("adversarial losses")
    s1_rows = [r for r in rows if r["rec"] is not None]
    axes[1].plot([r["step"] for r in s1_rows], [r["rec"] for r in s1_rows], color="tab:green")
    axes[1].set_xlabel("step")
    axes[1].set_title("reconstruction L1 (supervised steps)")
    fig.tight_layout()
    fig.savefig(OUT / "losses.png", dpi=110)
    print(f"loss plot: {OUT / 'losses.png'}")

    supervised = sum(r["stream"] == "s1" for r in rows)
    print(f"{supervised}/{len(rows)} steps were supervised (p = {cfg.stream_probability})")


if __name__ == "__main__":
    main()
