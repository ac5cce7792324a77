"""Predictor and discriminator networks on the autodiff engine.

The predictor maps low-resolution (composite, background, mask) buffers to
curve and shading parameters: a strided-conv trunk with a linear head emits
raw curve coordinates, and a small skip-connected encoder-decoder (which
also sees the low-res curve-corrected image) emits the raw shading grid.
Raw head outputs pass through constraint mappings so the emitted parameters
always satisfy the parameter invariants:

  x knots   = cumulative (softplus(raw) + 1e-4), normalized to [0, 1]
  y knots   = logistic(raw)
  shading   = max(gain_max * logistic(raw), shading_floor)

With all-zero raw outputs (the zero-initialized final layers) this yields
uniform x knots, y = 0.5 and unit shading.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ModelGraph, Tensor
from .transforms import (
    CURVE_NODES,
    GAIN_MAX,
    SHADING_FLOOR,
    SHADING_RES,
    CurveParams,
    HarmonizationParams,
    ShadingMap,
)

X_DELTA_FLOOR = 1e-4  # keeps cumulative x knots strictly increasing in float


class CheckpointError(Exception):
    """Checkpoint file is malformed; message carries the byte offset."""


@dataclass(frozen=True)
class PredictorConfig:
    """Architecture scale knobs; defaults are the desk-scale toy setting.

    raw_scale is a fixed gain applied to the (zero-initialized) head outputs
    before the constraint mappings. Adam moves each weight at roughly the
    learning rate regardless of gradient magnitude, so this gain sets how far
    the emitted parameters can travel per unit of weight movement; it leaves
    the all-zero fixed point (uniform x, y 0.5, unit shading) untouched.
    """

    input_res: int = 64
    widths: tuple = (8, 16, 32, 64)
    disc_widths: tuple = (8, 16, 32)
    curve_nodes: int = CURVE_NODES
    shading_res: int = SHADING_RES
    gain_max: float = GAIN_MAX
    shading_floor: float = SHADING_FLOOR
    raw_scale: float = 8.0

    def __post_init__(self):
        if self.curve_nodes < 2:
            raise ValueError("curve_nodes must be >= 2")
        if self.shading_res > self.input_res:
            raise ValueError(
                f"shading grid {self.shading_res} cannot exceed input resolution {self.input_res}"
            )
        bottleneck = self.input_res >> len(self.widths)
        if bottleneck < 1 or self.input_res % (1 << len(self.widths)) != 0:
            raise ValueError("input_res must be divisible by 2**len(widths)")
        ratio = self.shading_res / bottleneck
        if ratio < 1 or 2 ** int(np.log2(ratio)) != ratio:
            raise ValueError("shading_res must be bottleneck * 2**k")


def _kaiming_uniform(rng, shape, fan_in):
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def _conv_param(graph, rng, name, in_ch, out_ch, k=3, zero=False):
    if zero or rng is None:
        w = np.zeros((out_ch, in_ch, k, k))
    else:
        w = _kaiming_uniform(rng, (out_ch, in_ch, k, k), in_ch * k * k)
    graph.parameter(f"{name}.w", w)
    graph.parameter(f"{name}.b", np.zeros(out_ch))


def init_predictor(cfg: PredictorConfig, rng: np.random.Generator | None) -> ModelGraph:
    """Build the predictor graph. rng=None gives all-zero weights (for loading)."""
    g = ModelGraph()
    in_ch = 7
    for i, w in enumerate(cfg.widths):
        _conv_param(g, rng, f"curve.enc{i}", in_ch, w)
        in_ch = w
    head_out = 3 * (2 * cfg.curve_nodes - 1)
    g.parameter("curve.head.w", np.zeros((cfg.widths[-1], head_out)))
    g.parameter("curve.head.b", np.zeros(head_out))

    in_ch = 10
    for i, w in enumerate(cfg.widths):
        _conv_param(g, rng, f"shade.enc{i}", in_ch, w)
        in_ch = w
    prev = cfg.widths[-1]
    for j, (skip_ch, out_ch) in enumerate(_decoder_plan(cfg.input_res, cfg.widths, 10, cfg.shading_res)):
        _conv_param(g, rng, f"shade.dec{j}", prev + skip_ch, out_ch)
        prev = out_ch
    _conv_param(g, rng, "shade.out", prev, 1, k=1, zero=True)
    return g


def init_discriminator(cfg: PredictorConfig, rng: np.random.Generator | None) -> ModelGraph:
    g = ModelGraph()
    in_ch = 3
    for i, w in enumerate(cfg.disc_widths):
        _conv_param(g, rng, f"disc.enc{i}", in_ch, w)
        in_ch = w
    prev = cfg.disc_widths[-1]
    for j, (skip_ch, out_ch) in enumerate(
        _decoder_plan(cfg.input_res, cfg.disc_widths, 3, cfg.input_res)
    ):
        _conv_param(g, rng, f"disc.dec{j}", prev + skip_ch, out_ch)
        prev = out_ch
    _conv_param(g, rng, "disc.out", prev, 1, k=1, zero=True)
    return g


def _decoder_plan(input_res, widths, input_ch, target_res):
    """Yield (skip_channels, out_channels) per upsampling stage."""
    levels = len(widths)
    bottleneck = input_res >> levels
    n_ups = int(np.log2(target_res // bottleneck))
    plan = []
    for j in range(n_ups):
        enc_idx = levels - 2 - j
        if enc_idx >= 0:
            plan.append((widths[enc_idx], widths[enc_idx]))
        else:
            plan.append((input_ch, widths[0]))
    return plan


@dataclass
class PredictorOutput:
    """Differentiable parameter tensors for one forward batch."""

    curve_x: Tensor  # (N, 3, nodes)
    curve_y: Tensor  # (N, 3, nodes)
    shading: Tensor  # (N, S, S)
    t1_lr: Tensor  # (N, 3, R, R) curve-corrected low-res image (mask blended)

    def to_params(self, i: int = 0) -> HarmonizationParams:
        x = self.curve_x.value[i]
        y = self.curve_y.value[i]
        if x.shape != (3, CURVE_NODES):
            raise ValueError(f"interchange schema is fixed at {CURVE_NODES} curve nodes")
        nodes = np.stack([x, y], axis=2)
        # normalization leaves the last knot at cs/cs == 1.0 exactly; pin 0 too
        nodes[:, 0, 0] = 0.0
        grid = self.shading.value[i]
        if grid.shape != (SHADING_RES, SHADING_RES):
            # small-config checkpoints emit a coarser grid; embed it into the
            # schema resolution (constant grids, unit included, are preserved
            # bit-for-bit by the lerp)
            from .image import resize_bilinear

            grid = resize_bilinear(grid / GAIN_MAX, SHADING_RES, SHADING_RES) * GAIN_MAX
            grid = np.clip(grid, SHADING_FLOOR, GAIN_MAX)
        return HarmonizationParams(CurveParams(nodes), ShadingMap(grid))


def _encode_stack(graph, prefix, h, widths, activation):
    skips = []
    for i in range(len(widths)):
        h = activation(
            ad.conv2d(h, graph.params[f"{prefix}.enc{i}.w"], graph.params[f"{prefix}.enc{i}.b"], stride=2)
        )
        skips.append(h)
    return h, skips


def _decode_stack(graph, prefix, h, skips, net_input, n_stages, activation):
    levels = len(skips)
    for j in range(n_stages):
        h = ad.nearest_up2(h)
        enc_idx = levels - 2 - j
        skip = skips[enc_idx] if enc_idx >= 0 else net_input
        h = activation(
            ad.conv2d(
                ad.concat([h, skip], axis=1),
                graph.params[f"{prefix}.dec{j}.w"],
                graph.params[f"{prefix}.dec{j}.b"],
                stride=1,
            )
        )
    return h


def _mask_blend(base: np.ndarray, mask: np.ndarray, transformed: Tensor) -> Tensor:
    """v + M*(t(v) - v): only masked pixels move; background grads vanish."""
    return ad.add(ad.constant(base), ad.mul(ad.constant(mask), ad.sub(transformed, ad.constant(base))))


def forward_predictor(
    graph: ModelGraph, cfg: PredictorConfig, c_lr: np.ndarray, b_lr: np.ndarray, m_lr: np.ndarray
) -> PredictorOutput:
    """Run the parameter predictor on a batch of low-res buffers.

    c_lr, b_lr: (N, 3, R, R); m_lr: (N, 1, R, R) with R = cfg.input_res.
    Returns constraint-mapped parameter tensors (differentiable).
    """
    c_lr = np.asarray(c_lr, dtype=np.float64)
    b_lr = np.asarray(b_lr, dtype=np.float64)
    m_lr = np.asarray(m_lr, dtype=np.float64)
    r = cfg.input_res
    n = c_lr.shape[0]
    if c_lr.shape != (n, 3, r, r) or b_lr.shape != (n, 3, r, r) or m_lr.shape != (n, 1, r, r):
        raise ValueError(
            f"expected c/b (N,3,{r},{r}) and m (N,1,{r},{r}); got {c_lr.shape}, {b_lr.shape}, {m_lr.shape}"
        )

    stacked = ad.constant(np.concatenate([c_lr, b_lr, m_lr], axis=1))
    h, _ = _encode_stack(graph, "curve", stacked, cfg.widths, ad.relu)
    feat = ad.mean_t(h, axis=(2, 3))
    raw = ad.linear(feat, graph.params["curve.head.w"], graph.params["curve.head.b"])
    raw = ad.mul(ad.reshape(raw, (n, 3, 2 * cfg.curve_nodes - 1)), cfg.raw_scale)

    dx_raw = ad.narrow(raw, 2, 0, cfg.curve_nodes - 1)
    y_raw = ad.narrow(raw, 2, cfg.curve_nodes - 1, cfg.curve_nodes)
    deltas = ad.add(ad.softplus(dx_raw), X_DELTA_FLOOR)
    csum = ad.cumsum_t(deltas, axis=2)
    zeros = ad.constant(np.zeros((n, 3, 1)))
    x_unnorm = ad.concat([zeros, csum], axis=2)
    total = ad.narrow(csum, 2, cfg.curve_nodes - 2, 1)
    curve_x = ad.div(x_unnorm, total)
    curve_y = ad.sigmoid(y_raw)

    t1 = ad.clamp01(ad.piecewise_linear(c_lr, curve_x, curve_y))
    t1_blend = ad.clamp01(_mask_blend(c_lr, m_lr, t1))

    shade_in = ad.concat([ad.constant(c_lr), ad.constant(b_lr), ad.constant(m_lr), t1_blend], axis=1)
    h, skips = _encode_stack(graph, "shade", shade_in, cfg.widths, ad.relu)
    n_stages = len(_decoder_plan(cfg.input_res, cfg.widths, 10, cfg.shading_res))
    h = _decode_stack(graph, "shade", h, skips, shade_in, n_stages, ad.relu)
    raw_shade = ad.conv2d(h, graph.params["shade.out.w"], graph.params["shade.out.b"], stride=1, pad=0)
    s = cfg.shading_res
    raw_shade = ad.mul(ad.reshape(raw_shade, (n, s, s)), cfg.raw_scale)
    shading = ad.clamp_min(ad.mul(ad.sigmoid(raw_shade), cfg.gain_max), cfg.shading_floor)

    return PredictorOutput(curve_x=curve_x, curve_y=curve_y, shading=shading, t1_lr=t1_blend)


def forward_discriminator(graph: ModelGraph, cfg: PredictorConfig, img) -> Tensor:
    """Per-pixel real/fake scores in (0, 1); output spatial dims match input."""
    img_t = img if isinstance(img, Tensor) else ad.constant(np.asarray(img, dtype=np.float64))
    n, ch, hh, ww = img_t.value.shape
    if ch != 3 or hh != cfg.input_res or ww != cfg.input_res:
        raise ValueError(f"expected (N,3,{cfg.input_res},{cfg.input_res}) input, got {img_t.value.shape}")
    act = lambda t: ad.leaky_relu(t, 0.2)
    h, skips = _encode_stack(graph, "disc", img_t, cfg.disc_widths, act)
    n_stages = len(_decoder_plan(cfg.input_res, cfg.disc_widths, 3, cfg.input_res))
    h = _decode_stack(graph, "disc", h, skips, img_t, n_stages, act)
    logits = ad.conv2d(h, graph.params["disc.out.w"], graph.params["disc.out.b"], stride=1, pad=0)
    return ad.sigmoid(ad.reshape(logits, (n, hh, ww)))


def generator_forward(
    pred_graph: ModelGraph,
    cfg: PredictorConfig,
    c: np.ndarray,
    b: np.ndarray,
    m: np.ndarray,
) -> tuple[Tensor, PredictorOutput]:
    """Full differentiable harmonization at the training resolution.

    Returns the harmonized batch (N, 3, R, R) and the predictor output.
    Equivalent to transforms.harmonize_full applied per sample, but running
    on the tape so gradients reach the network parameters.
    """
    out = forward_predictor(pred_graph, cfg, c, b, m)
    hh = c.shape[2]
    gain = ad.bilinear_hw(out.shading, hh, c.shape[3])
    gain4 = ad.reshape(gain, (c.shape[0], 1, hh, c.shape[3]))
    shaded = ad.clamp01(ad.mul(out.t1_lr, gain4))
    fake = ad.clamp01(_mask_blend(c, m, shaded))
    return fake, out


# --------------------------------------------------------------------------
# checkpoint container: magic "HARM", u32 version, then named f64 arrays


_MAGIC = b"HARM"
_VERSION = 1


def save_arrays(path, arrays: dict[str, np.ndarray]) -> None:
    """Write named float64 arrays; deterministic byte layout (sorted names)."""
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", _VERSION))
        for name in sorted(arrays):
            arr = np.ascontiguousarray(arrays[name], dtype=np.float64)
            nb = name.encode("utf-8")
            f.write(struct.pack("<I", len(nb)))
            f.write(nb)
            f.write(struct.pack("<I", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}Q" if arr.ndim else "<0Q", *arr.shape))
            f.write(arr.astype("<f8").tobytes())


def load_arrays(path) -> dict[str, np.ndarray]:
    try:
        data = open(path, "rb").read()
    except OSError as e:
        raise CheckpointError(f"{path}: {e}") from e
    if data[:4] != _MAGIC:
        raise CheckpointError(f"{path}: bad magic at byte 0")
    (version,) = struct.unpack("<I", data[4:8])
    if version != _VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version} at byte 4")
    arrays = {}
    off = 8
    while off < len(data):
        try:
            (nlen,) = struct.unpack("<I", data[off : off + 4])
            name = data[off + 4 : off + 4 + nlen].decode("utf-8")
            off2 = off + 4 + nlen
            (ndim,) = struct.unpack("<I", data[off2 : off2 + 4])
            dims = struct.unpack(f"<{ndim}Q", data[off2 + 4 : off2 + 4 + 8 * ndim])
            off3 = off2 + 4 + 8 * ndim
            count = int(np.prod(dims)) if ndim else 1
            raw = data[off3 : off3 + 8 * count]
            if len(raw) != 8 * count:
                raise struct.error("truncated array data")
            arrays[name] = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(dims)
            off = off3 + 8 * count
        except (struct.error, UnicodeDecodeError) as e:
            raise CheckpointError(f"{path}: truncated or corrupt record at byte {off} ({e})") from e
    return arrays


def config_to_meta(cfg: PredictorConfig) -> dict[str, np.ndarray]:
    return {
        "meta/input_res": np.array([cfg.input_res], dtype=np.float64),
        "meta/widths": np.array(cfg.widths, dtype=np.float64),
        "meta/disc_widths": np.array(cfg.disc_widths, dtype=np.float64),
        "meta/curve_nodes": np.array([cfg.curve_nodes], dtype=np.float64),
        "meta/shading_res": np.array([cfg.shading_res], dtype=np.float64),
        "meta/gain_max": np.array([cfg.gain_max], dtype=np.float64),
        "meta/shading_floor": np.array([cfg.shading_floor], dtype=np.float64),
        "meta/raw_scale": np.array([cfg.raw_scale], dtype=np.float64),
    }


def meta_to_config(arrays: dict[str, np.ndarray]) -> PredictorConfig:
    try:
        return PredictorConfig(
            input_res=int(arrays["meta/input_res"][0]),
            widths=tuple(int(w) for w in arrays["meta/widths"]),
            disc_widths=tuple(int(w) for w in arrays["meta/disc_widths"]),
            curve_nodes=int(arrays["meta/curve_nodes"][0]),
            shading_res=int(arrays["meta/shading_res"][0]),
            gain_max=float(arrays["meta/gain_max"][0]),
            shading_floor=float(arrays["meta/shading_floor"][0]),
            raw_scale=float(arrays["meta/raw_scale"][0]),
        )
    except KeyError as e:
        raise CheckpointError(f"checkpoint missing config entry {e}") from e
