"""Dual-stream alternating training loop.

Each step draws one stream (supervised with probability
stream_probability), builds a stream-homogeneous batch, then performs one
discriminator update followed by one generator update. The supervised
stream optimizes lambda*L1 + (1-lambda)*L_G against the ground-truth
target; the unsupervised stream optimizes (1-lambda)*L_G alone. At
lambda = 1.0 the adversarial machinery is deactivated entirely and no
discriminator exists in the run (the supervised-only evaluation protocol).

Determinism: weights are initialized from rng [seed, 0] and every step
draws its data from rng [seed, 1, step], so a resumed run replays the
exact step sequence of an uninterrupted one.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from decimal import Decimal
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import autodiff as ad
from . import nn
from .autodiff import ModelGraph
from .datastream import (
    Stream,
    TrainingData,
    draw_supervised,
    draw_unsupervised,
    naive_inpaint,
)
from .image import load_manifest
from .losses import LossWeights, disc_loss, gen_loss, l1_loss
from .nn import PredictorConfig, forward_discriminator, generator_forward


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 80
    batch: int = 8
    lr: float = 4e-5
    lr_decay: float = 0.2
    decay_interval: int = 20
    lam: float = 0.92
    stream_probability: float = 0.5
    seed: int = 0
    resolution: int = 64
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    dilation: int = 30
    brightness_min: float = 0.5
    brightness_max: float = 1.5
    widths: tuple = (8, 16, 32, 64)
    disc_widths: tuple = (8, 16, 32)
    steps_per_epoch: int | None = None  # derived from manifest sizes when None
    stream1_manifest: str | None = None  # resolved relative to the config file
    stream2_manifest: str | None = None
    cache_dir: str | None = None

    def __post_init__(self):
        if self.epochs < 0 or self.batch < 1 or self.decay_interval < 1:
            raise ValueError("counts must be positive (epochs may be 0 for init-only runs)")
        if not 0.0 <= self.stream_probability <= 1.0:
            raise ValueError("stream_probability must be in [0, 1]")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lambda must be in [0, 1]")
        self.widths = tuple(self.widths)
        self.disc_widths = tuple(self.disc_widths)

    def predictor_config(self) -> PredictorConfig:
        return PredictorConfig(
            input_res=self.resolution,
            widths=self.widths,
            disc_widths=self.disc_widths,
            shading_res=min(64, self.resolution),
        )

    def loss_weights(self) -> LossWeights:
        return LossWeights(lam=self.lam)

    @classmethod
    def from_toml(cls, path) -> "TrainConfig":
        with open(path, "rb") as f:
            doc = tomllib.load(f)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)


def lr_schedule(cfg: TrainConfig, epoch: int) -> float:
    """lr * decay^floor(epoch / interval), computed in decimal so the
    schedule hits the stated decimal values exactly."""
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    k = epoch // cfg.decay_interval
    return float(Decimal(repr(cfg.lr)) * Decimal(repr(cfg.lr_decay)) ** k)


class Adam:
    """Adam with bias correction: theta -= lr * m_hat / (sqrt(v_hat) + eps)."""

    def __init__(self, graph: ModelGraph, beta1=0.9, beta2=0.999, eps=1e-8):
        self.graph = graph
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.value) for k, p in graph.params.items()}
        self.v = {k: np.zeros_like(p.value) for k, p in graph.params.items()}

    def step(self, lr: float) -> None:
        self.t += 1
        for name, p in self.graph.params.items():
            g = p.grad if p.grad is not None else np.zeros_like(p.value)
            self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * g * g
            m_hat = self.m[name] / (1 - self.beta1**self.t)
            v_hat = self.v[name] / (1 - self.beta2**self.t)
            p.value = p.value - lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def state_arrays(self, prefix: str) -> dict[str, np.ndarray]:
        out = {f"opt/{prefix}/t": np.array([float(self.t)])}
        for name in self.m:
            out[f"opt/{prefix}/m/{name}"] = self.m[name]
            out[f"opt/{prefix}/v/{name}"] = self.v[name]
        return out

    def load_state_arrays(self, prefix: str, arrays: dict[str, np.ndarray]) -> None:
        self.t = int(arrays[f"opt/{prefix}/t"][0])
        for name in self.m:
            self.m[name] = arrays[f"opt/{prefix}/m/{name}"].copy()
            self.v[name] = arrays[f"opt/{prefix}/v/{name}"].copy()


@dataclass
class StepReport:
    stream: Stream
    gen: float
    disc: float | None = None
    rec: float | None = None


def batch_arrays(samples) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray | None]:
    """Stack samples into NCHW arrays: composite, background, mask, targets."""
    c = np.stack([s.composite.transpose(2, 0, 1) for s in samples])
    b = np.stack([s.background.transpose(2, 0, 1) for s in samples])
    m = np.stack([s.mask[None, :, :] for s in samples])
    t = None
    if samples[0].target is not None:
        t = np.stack([s.target.transpose(2, 0, 1) for s in samples])
    return c, b, m, t


def train_step(
    pred_graph: ModelGraph,
    disc_graph: ModelGraph | None,
    opt_g: Adam,
    opt_d: Adam | None,
    samples,
    reals,
    lr: float,
    cfg: TrainConfig,
) -> StepReport:
    """One discriminator update then one generator update on a homogeneous batch."""
    streams = {s.stream for s in samples}
    if len(streams) != 1:
        raise ValueError("train_step requires a stream-homogeneous batch")
    stream = streams.pop()
    pcfg = cfg.predictor_config()
    w = cfg.loss_weights()
    c, b, m, targets = batch_arrays(samples)
    mask_hw = m[:, 0]
    adversarial = cfg.lam < 1.0

    fake, _ = generator_forward(pred_graph, pcfg, c, b, m)

    d_val = None
    if adversarial:
        real_arr = np.stack([r.transpose(2, 0, 1) for r in reals])
        disc_graph.zero_grad()
        d_real = forward_discriminator(disc_graph, pcfg, real_arr)
        d_fake = forward_discriminator(disc_graph, pcfg, fake.value.copy())  # detached
        loss_d = disc_loss(d_real, d_fake, mask_hw, w)
        d_val = float(loss_d.value)
        if not np.isfinite(d_val):
            raise TrainingError(f"non-finite discriminator loss {d_val}")
        ad.backward(loss_d)
        opt_d.step(lr)

    rec_val = None
    if stream is Stream.SUPERVISED:
        pred_graph.zero_grad()
        rec = l1_loss(fake, targets)
        rec_val = float(rec.value)
        if adversarial:
            scores = forward_discriminator(disc_graph, pcfg, fake)
            adv = gen_loss(scores, mask_hw, w)
            loss_g = ad.add(ad.mul(rec, cfg.lam), ad.mul(adv, 1.0 - cfg.lam))
        else:
            loss_g = rec
        g_val = float(loss_g.value)
        if not np.isfinite(g_val):
            raise TrainingError(f"non-finite generator loss {g_val}")
        ad.backward(loss_g)
        opt_g.step(lr)
    else:
        if not adversarial:
            # (1-lambda)*L_G is identically zero; nothing to optimize
            return StepReport(stream=stream, gen=0.0, disc=d_val, rec=None)
        pred_graph.zero_grad()
        scores = forward_discriminator(disc_graph, pcfg, fake)
        loss_g = ad.mul(gen_loss(scores, mask_hw, w), 1.0 - cfg.lam)
        g_val = float(loss_g.value)
        if not np.isfinite(g_val):
            raise TrainingError(f"non-finite generator loss {g_val}")
        ad.backward(loss_g)
        opt_g.step(lr)

    return StepReport(stream=stream, gen=g_val, disc=d_val, rec=rec_val)


def save_checkpoint(
    path,
    pred_graph: ModelGraph,
    disc_graph: ModelGraph | None,
    opt_g: Adam,
    opt_d: Adam | None,
    pcfg: PredictorConfig,
    step: int,
    epoch: int,
) -> None:
    arrays = {}
    arrays.update(nn.config_to_meta(pcfg))
    arrays["meta/step"] = np.array([float(step)])
    arrays["meta/epoch"] = np.array([float(epoch)])
    for name, t in pred_graph.params.items():
        arrays[f"predictor/{name}"] = t.value
    arrays.update(opt_g.state_arrays("predictor"))
    if disc_graph is not None:
        for name, t in disc_graph.params.items():
            arrays[f"discriminator/{name}"] = t.value
        arrays.update(opt_d.state_arrays("discriminator"))
    nn.save_arrays(path, arrays)


def load_predictor(path) -> tuple[ModelGraph, PredictorConfig]:
    """Rebuild just the predictor from a checkpoint (inference path)."""
    arrays = nn.load_arrays(path)
    pcfg = nn.meta_to_config(arrays)
    graph = nn.init_predictor(pcfg, None)
    state = {k[len("predictor/") :]: v for k, v in arrays.items() if k.startswith("predictor/")}
    graph.load_state_dict(state)
    return graph, pcfg


@dataclass
class _RunState:
    pred: ModelGraph
    disc: ModelGraph | None
    opt_g: Adam
    opt_d: Adam | None
    step: int
    epoch: int


def _init_run(cfg: TrainConfig, pcfg: PredictorConfig, resume_from: Path | None) -> _RunState:
    adversarial = cfg.lam < 1.0
    if resume_from is not None:
        arrays = nn.load_arrays(resume_from)
        pred = nn.init_predictor(pcfg, None)
        pred.load_state_dict(
            {k[len("predictor/") :]: v for k, v in arrays.items() if k.startswith("predictor/")}
        )
        opt_g = Adam(pred, cfg.beta1, cfg.beta2, cfg.adam_eps)
        opt_g.load_state_arrays("predictor", arrays)
        disc = opt_d = None
        if adversarial:
            disc = nn.init_discriminator(pcfg, None)
            disc.load_state_dict(
                {
                    k[len("discriminator/") :]: v
                    for k, v in arrays.items()
                    if k.startswith("discriminator/")
                }
            )
            opt_d = Adam(disc, cfg.beta1, cfg.beta2, cfg.adam_eps)
            opt_d.load_state_arrays("discriminator", arrays)
        return _RunState(
            pred, disc, opt_g, opt_d, int(arrays["meta/step"][0]), int(arrays["meta/epoch"][0])
        )

    rng_init = np.random.default_rng([cfg.seed, 0])
    pred = nn.init_predictor(pcfg, rng_init)
    disc = nn.init_discriminator(pcfg, rng_init) if adversarial else None
    opt_g = Adam(pred, cfg.beta1, cfg.beta2, cfg.adam_eps)
    opt_d = Adam(disc, cfg.beta1, cfg.beta2, cfg.adam_eps) if adversarial else None
    return _RunState(pred, disc, opt_g, opt_d, 0, 0)


def run_training(
    cfg: TrainConfig,
    stream1_manifest=None,
    stream2_manifest=None,
    out_dir=".",
    inpaint=naive_inpaint,
    cache_dir=None,
) -> Path:
    """Full training run with per-epoch checkpoints and a JSONL metrics log.

    Resumes from <out_dir>/checkpoint-latest.harm if present (parameters,
    optimizer moments and counters included). Returns the path of the final
    checkpoint.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    pcfg = cfg.predictor_config()

    if cfg.stream_probability > 0.0 and stream1_manifest is None:
        raise TrainingError("supervised stream enabled but no stream-1 manifest given")
    if cfg.stream_probability < 1.0 and stream2_manifest is None:
        raise TrainingError("unsupervised stream enabled but no stream-2 manifest given")

    from .datastream import CachingInpainter

    if cache_dir is not None:
        inpaint = CachingInpainter(inpaint, cache_dir)
    data = TrainingData(
        stream1=load_manifest(stream1_manifest, require_retouched=True)
        if stream1_manifest is not None
        else None,
        stream2=load_manifest(stream2_manifest) if stream2_manifest is not None else None,
        resolution=cfg.resolution,
        inpaint=inpaint,
        dilation=cfg.dilation,
        brightness_range=(cfg.brightness_min, cfg.brightness_max),
    )

    latest = out_dir / "checkpoint-latest.harm"
    state = _init_run(cfg, pcfg, latest if latest.exists() else None)

    n_s1 = 2 * len(data.stream1) if data.stream1 else 0
    n_s2 = len(data.stream2) if data.stream2 else 0
    steps_per_epoch = cfg.steps_per_epoch or max(1, (n_s1 + n_s2) // cfg.batch)

    metrics_path = out_dir / "metrics.jsonl"
    log = open(metrics_path, "a")
    try:
        if cfg.epochs == 0 and state.step == 0:
            save_checkpoint(
                latest, state.pred, state.disc, state.opt_g, state.opt_d, pcfg, 0, 0
            )
        for epoch in range(state.epoch, cfg.epochs):
            lr = lr_schedule(cfg, epoch)
            for _ in range(steps_per_epoch):
                rng = np.random.default_rng([cfg.seed, 1, state.step])
                supervised = rng.random() < cfg.stream_probability
                draw = draw_supervised if supervised else draw_unsupervised
                pairs = [draw(rng, data) for _ in range(cfg.batch)]
                samples = [p[0] for p in pairs]
                reals = [p[1] for p in pairs]
                try:
                    report = train_step(
                        state.pred, state.disc, state.opt_g, state.opt_d, samples, reals, lr, cfg
                    )
                except TrainingError:
                    dump = out_dir / f"diagnostic-step{state.step}.npz"
                    c, b, m, t = batch_arrays(samples)
                    np.savez(dump, composite=c, background=b, mask=m, step=state.step)
                    raise TrainingError(
                        f"aborted at step {state.step}; inputs dumped to {dump}"
                    )
                state.step += 1
                log.write(
                    json.dumps(
                        {
                            "step": state.step,
                            "epoch": epoch,
                            "stream": report.stream.value,
                            "lr": lr,
                            "rec": report.rec,
                            "gen": report.gen,
                            "disc": report.disc,
                        }
                    )
                    + "\n"
                )
                log.flush()
            save_checkpoint(
                out_dir / f"checkpoint-epoch{epoch:03d}.harm",
                state.pred,
                state.disc,
                state.opt_g,
                state.opt_d,
                pcfg,
                state.step,
                epoch + 1,
            )
            save_checkpoint(
                latest, state.pred, state.disc, state.opt_g, state.opt_d, pcfg, state.step, epoch + 1
            )
    finally:
        log.close()
    return latest
