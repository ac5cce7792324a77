import json
import os
import signal
import subprocess
import sys
import time
import urllib.request

import numpy as np
import pytest

from harmonia import nn
from harmonia.cli import main
from harmonia.image import load_image, save_image
from harmonia.trainer import Adam, TrainConfig, save_checkpoint
from harmonia.transforms import parse_params

from test_datastream import build_training_data


@pytest.fixture(scope="module")
def identity_checkpoint(tmp_path_factory):
    path = tmp_path_factory.mktemp("ck") / "zero-heads.harm"
    cfg = TrainConfig(resolution=64)
    pcfg = cfg.predictor_config()
    pred = nn.init_predictor(pcfg, np.random.default_rng(0))
    save_checkpoint(path, pred, None, Adam(pred), None, pcfg, 0, 0)
    return path


def write_gray_composite(tmp_path):
    """Mid-gray foreground: the fixed point of the zero-head constraint maps."""
    comp = np.full((40, 40, 3), 0.5)
    mask = np.zeros((40, 40))
    mask[10:30, 10:30] = 1.0
    save_image(comp, tmp_path / "comp.png")
    save_image(mask, tmp_path / "mask.png")
    return tmp_path / "comp.png", tmp_path / "mask.png"


class TestHarmonize:
    def test_zero_head_checkpoint_fixes_gray_composite(self, tmp_path, identity_checkpoint):
        comp_path, mask_path = write_gray_composite(tmp_path)
        out = tmp_path / "out.png"
        code = main(
            [
                "harmonize",
                "--composite", str(comp_path),
                "--mask", str(mask_path),
                "--checkpoint", str(identity_checkpoint),
                "--out", str(out),
            ]
        )
        assert code == 0
        assert np.array_equal(load_image(out), load_image(comp_path))

    def test_params_out_validates_against_schema(self, tmp_path, identity_checkpoint):
        comp_path, mask_path = write_gray_composite(tmp_path)
        params_path = tmp_path / "params.json"
        code = main(
            [
                "harmonize",
                "--composite", str(comp_path),
                "--mask", str(mask_path),
                "--checkpoint", str(identity_checkpoint),
                "--out", str(tmp_path / "out.png"),
                "--params-out", str(params_path),
            ]
        )
        assert code == 0
        params = parse_params(params_path.read_text())
        assert np.array_equal(params.shading.grid, np.ones((64, 64)))

    def test_missing_mask_flag_is_usage_error(self, tmp_path, identity_checkpoint, capsys):
        code = main(
            [
                "harmonize",
                "--composite", "x.png",
                "--checkpoint", str(identity_checkpoint),
                "--out", "y.png",
            ]
        )
        assert code == 1
        err = capsys.readouterr().err
        assert "mask" in err and err.count("\n") == 1

    def test_unreadable_composite_is_runtime_error(self, tmp_path, identity_checkpoint, capsys):
        mask = tmp_path / "m.png"
        save_image(np.zeros((8, 8)), mask)
        code = main(
            [
                "harmonize",
                "--composite", str(tmp_path / "missing.png"),
                "--mask", str(mask),
                "--checkpoint", str(identity_checkpoint),
                "--out", str(tmp_path / "o.png"),
            ]
        )
        assert code == 2
        assert "missing.png" in capsys.readouterr().err


class TestGenData:
    def test_stream1_emits_two_records_per_triplet(self, tmp_path):
        build_training_data(tmp_path, n_triplets=3, n_images=2, res=16)
        out_dir = tmp_path / "out"
        code = main(["gen-data", "stream1", "--manifest", str(tmp_path / "s1.jsonl"), "--out-dir", str(out_dir)])
        assert code == 0
        records = (out_dir / "manifest.jsonl").read_text().splitlines()
        assert len(records) == 6
        rec = json.loads(records[0])
        assert (out_dir / rec["composite"]).exists()
        assert (out_dir / rec["target"]).exists()

    def test_stream2_deterministic_bytes(self, tmp_path):
        build_training_data(tmp_path, n_triplets=1, n_images=3, res=16)
        outs = []
        for sub in ("a", "b"):
            out_dir = tmp_path / sub
            code = main(
                [
                    "gen-data", "stream2",
                    "--manifest", str(tmp_path / "s2.jsonl"),
                    "--out-dir", str(out_dir),
                    "--seed", "7",
                    "--dilate", "2",
                    "--count", "3",
                ]
            )
            assert code == 0
            blob = b"".join(
                p.read_bytes() for p in sorted(out_dir.glob("*.png")) if p.is_file()
            ) + (out_dir / "manifest.jsonl").read_bytes()
            outs.append(blob)
        assert outs[0] == outs[1]

    def test_stream2_single_image_manifest_exit_2(self, tmp_path, capsys):
        build_training_data(tmp_path, n_triplets=1, n_images=1, res=16)
        code = main(
            ["gen-data", "stream2", "--manifest", str(tmp_path / "s2.jsonl"), "--out-dir", str(tmp_path / "o")]
        )
        assert code == 2
        assert "2 manifest entries" in capsys.readouterr().err

    def test_cache_env_override(self, tmp_path, monkeypatch):
        build_training_data(tmp_path, n_triplets=1, n_images=2, res=16)
        cache = tmp_path / "mycache"
        monkeypatch.setenv("HARMONIA_CACHE", str(cache))
        code = main(
            [
                "gen-data", "stream2",
                "--manifest", str(tmp_path / "s2.jsonl"),
                "--out-dir", str(tmp_path / "o"),
                "--dilate", "1",
                "--count", "1",
            ]
        )
        assert code == 0
        assert any(cache.glob("*.png"))


class TestTrainEvalRank:
    def test_train_epochs_zero_writes_checkpoint(self, tmp_path):
        build_training_data(tmp_path, res=8)
        config = tmp_path / "train.toml"
        config.write_text(
            "epochs = 0\nbatch = 1\nresolution = 8\nwidths = [4, 8]\ndisc_widths = [4, 8]\n"
            'stream1_manifest = "s1.jsonl"\nstream2_manifest = "s2.jsonl"\n'
        )
        out_dir = tmp_path / "run"
        code = main(["train", "--config", str(config), "--out-dir", str(out_dir)])
        assert code == 0
        assert (out_dir / "checkpoint-latest.harm").exists()

    def test_eval_identical_manifests(self, tmp_path, capsys):
        rng = np.random.default_rng(1)
        img = rng.random((20, 20, 3))
        save_image(img, tmp_path / "a.png", bit_depth=16)
        save_image(np.zeros((20, 20)), tmp_path / "m.png")
        line = json.dumps({"id": "x", "image": "a.png", "mask": "m.png"})
        (tmp_path / "p.jsonl").write_text(line + "\n")
        (tmp_path / "g.jsonl").write_text(line + "\n")
        code = main(
            [
                "eval",
                "--pred-manifest", str(tmp_path / "p.jsonl"),
                "--gt-manifest", str(tmp_path / "g.jsonl"),
                "--resolution", "16",
            ]
        )
        assert code == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["mse"] == 0.0

    def test_bt_rank_two_methods(self, tmp_path, capsys):
        csv = tmp_path / "cmp.csv"
        csv.write_text(
            "method_a,method_b,winner\n"
            "ours,base,ours\nours,base,ours\nours,base,ours\nours,base,base\n"
        )
        code = main(["bt-rank", "--csv", str(csv)])
        assert code == 0
        out = capsys.readouterr().out
        assert "ours: 0.7500" in out
        assert "base: 0.2500" in out
        assert out.index("ours") < out.index("base")  # sorted by score


class TestHelpAndContract:
    @pytest.mark.parametrize(
        "cmd", ["harmonize", "gen-data", "train", "eval", "bt-rank", "serve"]
    )
    def test_help_exits_zero(self, cmd, capsys):
        assert main([cmd, "--help"]) == 0
        out = capsys.readouterr().out
        assert "--help" in out or "Usage" in out

    def test_help_lists_every_flag(self, capsys):
        main(["harmonize", "--help"])
        out = capsys.readouterr().out
        for flag in ("--composite", "--mask", "--background", "--checkpoint", "--out", "--params-out"):
            assert flag in out

    def test_unknown_subcommand_usage_error(self, capsys):
        assert main(["frobnicate"]) == 1

    def test_unknown_flag_usage_error(self, capsys):
        assert main(["bt-rank", "--nope", "x"]) == 1


SERVE_ENV = {**os.environ, "PYTHONUNBUFFERED": "1"}


def wait_for_line(proc, needle, timeout=30):
    deadline = time.time() + timeout
    while time.time() < deadline:
        line = proc.stdout.readline()
        if needle in line:
            return line
        if proc.poll() is not None:
            raise AssertionError(f"server exited early: {proc.stdout.read()}")
    raise AssertionError("timed out waiting for readiness line")


class TestServe:
    def test_boot_health_sigint(self, identity_checkpoint):
        proc = subprocess.Popen(
            [
                sys.executable, "-m", "harmonia.cli", "serve",
                "--port", "0",
                "--checkpoint", str(identity_checkpoint),
            ],
            stdout=subprocess.PIPE,
            stderr=subprocess.STDOUT,
            text=True,
            env=SERVE_ENV,
        )
        try:
            line = wait_for_line(proc, "listening on ")
            addr = line.strip().split("listening on ")[1]
            with urllib.request.urlopen(f"http://{addr}/v1/health", timeout=10) as resp:
                assert resp.status == 200
                assert json.loads(resp.read()) == {"status": "ok"}
            proc.send_signal(signal.SIGINT)
            assert proc.wait(timeout=20) == 0
        finally:
            if proc.poll() is None:
                proc.kill()

    def test_port_in_use_exit_2(self, identity_checkpoint):
        import socket

        holder = socket.socket()
        holder.bind(("127.0.0.1", 0))
        holder.listen(1)
        port = holder.getsockname()[1]
        try:
            proc = subprocess.run(
                [
                    sys.executable, "-m", "harmonia.cli", "serve",
                    "--port", str(port),
                    "--checkpoint", str(identity_checkpoint),
                ],
                capture_output=True,
                text=True,
                timeout=60,
            )
            assert proc.returncode == 2
            assert "cannot bind" in proc.stderr
        finally:
            holder.close()

    def test_bad_checkpoint_exit_2_before_binding(self, capsys):
        code = main(["serve", "--checkpoint", "/nonexistent/ck.harm", "--port", "0"])
        assert code == 2
        assert "checkpoint" in capsys.readouterr().err

    def test_port_env_var(self, identity_checkpoint, monkeypatch, capsys):
        monkeypatch.setenv("HARMONIA_PORT", "not-a-number")
        assert main(["serve", "--checkpoint", str(identity_checkpoint)]) == 1
