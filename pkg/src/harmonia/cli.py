"""Command-line entry points: one subcommand per engine capability.

Exit codes: 0 success, 1 usage error, 2 runtime failure. Diagnostics go to
stderr as single lines. HARMONIA_CACHE overrides the inpaint cache
directory; HARMONIA_PORT sets the default serve port.
"""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click
import numpy as np


@click.group()
def cli():
    """Parametric image harmonization toolkit."""


@cli.command()
@click.option("--composite", "composite_path", required=True, type=click.Path(dir_okay=False))
@click.option("--mask", "mask_path", required=True, type=click.Path(dir_okay=False))
@click.option("--background", "background_path", type=click.Path(dir_okay=False))
@click.option("--checkpoint", "checkpoint_path", required=True, type=click.Path(dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--params-out", "params_out", type=click.Path(dir_okay=False))
def harmonize(composite_path, mask_path, background_path, checkpoint_path, out_path, params_out):
    """Predict parameters for a composite and write the harmonized PNG."""
    from . import pngio
    from .datastream import naive_inpaint
    from .image import load_image, load_mask, resize_bilinear, save_image
    from .nn import forward_predictor
    from .trainer import load_predictor
    from .transforms import harmonize_full, serialize_params

    predictor, pcfg = load_predictor(checkpoint_path)
    comp = load_image(composite_path)
    if comp.shape[2] == 1:
        comp = np.repeat(comp, 3, axis=2)
    mask = load_mask(mask_path)
    if mask.shape != comp.shape[:2]:
        raise click.ClickException(
            f"mask {mask.shape} does not match composite {comp.shape[:2]}"
        )
    if background_path is not None:
        bg = load_image(background_path)
        if bg.shape[2] == 1:
            bg = np.repeat(bg, 3, axis=2)
    else:
        bg = naive_inpaint(comp, mask) if mask.max() > 0.0 else comp.copy()

    r = pcfg.input_res
    c_lr = resize_bilinear(comp, r, r).transpose(2, 0, 1)[None]
    b_lr = resize_bilinear(bg, r, r).transpose(2, 0, 1)[None]
    m_lr = resize_bilinear(mask, r, r)[None, None]
    params = forward_predictor(predictor, pcfg, c_lr, b_lr, m_lr).to_params(0)

    out = harmonize_full(comp, mask, params)
    depth = pngio.bit_depth(Path(composite_path).read_bytes())
    save_image(out, out_path, bit_depth=depth)
    if params_out:
        Path(params_out).write_text(serialize_params(params))
    click.echo(f"wrote {out_path}")


@cli.command("gen-data")
@click.argument("stream", type=click.Choice(["stream1", "stream2"]))
@click.option("--manifest", "manifest_path", required=True, type=click.Path(dir_okay=False))
@click.option("--out-dir", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--dilate", default=30, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--count", default=None, type=int, help="stream2 samples to draw (default: manifest size)")
@click.option("--resolution", default=None, type=int, help="stream2 working resolution (default: native)")
def gen_data(stream, manifest_path, out_dir, dilate, seed, count, resolution):
    """Materialize training composites (plus targets or cached inpaints)."""
    from .datastream import CachingInpainter, naive_inpaint, stream1_samples, stream2_composite, RetouchTriplet
    from .image import load_image, load_manifest, load_mask, resize_bilinear, save_image

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest_lines = []

    if stream == "stream1":
        entries = load_manifest(manifest_path, require_retouched=True)
        for e in entries:
            triplet = RetouchTriplet(load_image(e.image), load_image(e.retouched), load_mask(e.mask))
            for tag, sample in zip(("a", "b"), stream1_samples(triplet)):
                name = f"{e.id}_{tag}"
                save_image(sample.composite, out_dir / f"{name}.png")
                save_image(sample.target, out_dir / f"{name}_target.png")
                save_image(sample.mask, out_dir / f"{name}_mask.png")
                manifest_lines.append(
                    json.dumps(
                        {
                            "id": name,
                            "composite": f"{name}.png",
                            "target": f"{name}_target.png",
                            "mask": f"{name}_mask.png",
                        }
                    )
                )
    else:
        entries = load_manifest(manifest_path)
        if len(entries) < 2:
            raise click.ClickException("stream2 needs at least 2 manifest entries (i != j pairs)")
        cache_dir = os.environ.get("HARMONIA_CACHE") or (out_dir / "inpaint-cache")
        inpaint = CachingInpainter(naive_inpaint, cache_dir)
        rng = np.random.default_rng(seed)
        n = count if count is not None else len(entries)

        def load_pair(entry):
            img = load_image(entry.image)
            if img.shape[2] == 1:
                img = np.repeat(img, 3, axis=2)
            m = load_mask(entry.mask)
            if resolution is not None:
                img = resize_bilinear(img, resolution, resolution)
                m = resize_bilinear(m, resolution, resolution)
            return img, m

        for k in range(n):
            i = int(rng.integers(len(entries)))
            j = int(rng.integers(len(entries) - 1))
            if j >= i:
                j += 1
            bg = load_pair(entries[i])
            fg = load_pair(entries[j])
            sample = stream2_composite(fg, bg, inpaint, dilation=dilate)
            name = f"composite_{k:05d}_{entries[j].id}_on_{entries[i].id}"
            save_image(sample.composite, out_dir / f"{name}.png")
            save_image(sample.background, out_dir / f"{name}_bg.png")
            save_image(sample.mask, out_dir / f"{name}_mask.png")
            manifest_lines.append(
                json.dumps(
                    {
                        "id": name,
                        "composite": f"{name}.png",
                        "background": f"{name}_bg.png",
                        "mask": f"{name}_mask.png",
                    }
                )
            )

    (out_dir / "manifest.jsonl").write_text("\n".join(manifest_lines) + "\n")
    click.echo(f"wrote {len(manifest_lines)} records to {out_dir / 'manifest.jsonl'}")


@cli.command()
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))
@click.option("--out-dir", "out_dir", required=True, type=click.Path(file_okay=False))
def train(config_path, out_dir):
    """Run (or resume) dual-stream training from a TOML config."""
    from .trainer import TrainConfig, run_training

    cfg = TrainConfig.from_toml(config_path)
    base = Path(config_path).parent
    s1 = base / cfg.stream1_manifest if cfg.stream1_manifest else None
    s2 = base / cfg.stream2_manifest if cfg.stream2_manifest else None
    cache = os.environ.get("HARMONIA_CACHE") or cfg.cache_dir
    final = run_training(
        cfg, stream1_manifest=s1, stream2_manifest=s2, out_dir=out_dir, cache_dir=cache
    )
    click.echo(f"final checkpoint: {final}")


@cli.command("eval")
@click.option("--pred-manifest", required=True, type=click.Path(dir_okay=False))
@click.option("--gt-manifest", required=True, type=click.Path(dir_okay=False))
@click.option("--resolution", default=256, show_default=True, type=int)
def eval_cmd(pred_manifest, gt_manifest, resolution):
    """Compute MSE/PSNR/SSIM over aligned manifests; prints the report JSON."""
    from .metrics import run_benchmark

    report = run_benchmark(pred_manifest, gt_manifest, resolution)
    click.echo(report.to_json())


@cli.command("bt-rank")
@click.option("--csv", "csv_path", required=True, type=click.Path(dir_okay=False))
def bt_rank(csv_path):
    """Bradley-Terry ranking of a pairwise comparison CSV."""
    from .metrics import bt_fit, load_comparisons_csv

    scores = bt_fit(load_comparisons_csv(csv_path))
    for name, score in sorted(scores.items(), key=lambda kv: -kv[1]):
        click.echo(f"{name}: {score:.4f}")


@cli.command()
@click.option("--port", envvar="HARMONIA_PORT", default=8008, show_default=True, type=int)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--checkpoint", "checkpoint_path", type=click.Path(dir_okay=False))
@click.option("--session-ttl-secs", default=1800, show_default=True, type=int)
@click.option("--max-upload-mb", default=64, show_default=True, type=int)
@click.option("--cors-origin", default=None)
def serve(port, host, checkpoint_path, session_ttl_secs, max_upload_mb, cors_origin):
    """Serve the harmonization HTTP API; prints a readiness line when bound."""
    import socket

    import uvicorn

    from .service import create_app

    if checkpoint_path is not None and not Path(checkpoint_path).exists():
        raise click.ClickException(f"checkpoint not found: {checkpoint_path}")

    app = create_app(
        checkpoint=checkpoint_path,
        session_ttl_secs=session_ttl_secs,
        max_upload_mb=max_upload_mb,
        cors_origin=cors_origin,
    )
    sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    try:
        sock.bind((host, port))
        sock.listen(128)
    except OSError as e:
        sock.close()
        raise click.ClickException(f"cannot bind {host}:{port}: {e}")
    click.echo(f"listening on {host}:{sock.getsockname()[1]}")
    sys.stdout.flush()
    server = uvicorn.Server(uvicorn.Config(app, log_level="warning"))
    try:
        server.run(sockets=[sock])
    except KeyboardInterrupt:
        pass  # uvicorn re-raises the signal after its graceful shutdown


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as e:
        return int(e.exit_code)
    except click.UsageError as e:
        print(f"usage error: {e.format_message()}", file=sys.stderr)
        return 1
    except click.ClickException as e:
        print(f"error: {e.format_message()}", file=sys.stderr)
        return 2
    except (KeyboardInterrupt, click.exceptions.Abort):
        return 130
    except Exception as e:  # runtime failures from the engine
        print(f"error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
