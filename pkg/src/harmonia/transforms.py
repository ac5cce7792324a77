"""Two-stage parametric harmonization: per-channel RGB curves, then a
low-frequency multiplicative shading map, both gated by the foreground mask.

The transform is resolution independent: curves are evaluated pointwise and
the 64x64 shading grid is bilinearly upsampled to whatever resolution the
input has. Background pixels (mask 0) pass through bit-for-bit, and identity
parameters reproduce the input bit-for-bit; both guarantees come from
evaluating the mask blend as v + M*(t(v) - v).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .image import as_image, as_mask, resize_bilinear

CURVE_NODES = 32
SHADING_RES = 64
GAIN_MAX = 2.0
SHADING_FLOOR = 1e-3


class ParamsError(ValueError):
    """Parameter set violates the schema or an invariant; names the field."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=np.float64)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class CurveParams:
    """Piecewise-linear tone curves: (3 channels, 32 nodes, 2) x/y coords.

    Per channel, x is strictly increasing with x[0] = 0 and x[-1] = 1 so
    evaluation is total on [0, 1]. y values live in [0, 1] but need not be
    monotone.
    """

    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=np.float64)
        if nodes.shape != (3, CURVE_NODES, 2):
            raise ParamsError("curves", f"expected shape (3, {CURVE_NODES}, 2), got {nodes.shape}")
        if not np.all(np.isfinite(nodes)):
            raise ParamsError("curves", "non-finite node coordinate")
        for c in range(3):
            x = nodes[c, :, 0]
            y = nodes[c, :, 1]
            if x[0] != 0.0 or x[-1] != 1.0:
                raise ParamsError(f"curves[{c}].x", "endpoints must be 0 and 1")
            if not np.all(np.diff(x) > 0):
                raise ParamsError(f"curves[{c}].x", "x coordinates must be strictly increasing")
            if y.min() < 0.0 or y.max() > 1.0:
                raise ParamsError(f"curves[{c}].y", "y values must lie in [0, 1]")
        object.__setattr__(self, "nodes", _frozen(nodes))


@dataclass(frozen=True)
class ShadingMap:
    """64x64 multiplicative gain grid, values in (0, GAIN_MAX]."""

    grid: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=np.float64)
        if grid.shape != (SHADING_RES, SHADING_RES):
            raise ParamsError("shading", f"expected shape ({SHADING_RES}, {SHADING_RES}), got {grid.shape}")
        if not np.all(np.isfinite(grid)):
            raise ParamsError("shading", "non-finite gain value")
        if grid.min() <= 0.0 or grid.max() > GAIN_MAX:
            raise ParamsError("shading", f"gains must lie in (0, {GAIN_MAX}]")
        object.__setattr__(self, "grid", _frozen(grid))


@dataclass(frozen=True)
class HarmonizationParams:
    """Full parameter set for one harmonization: curves plus shading."""

    curves: CurveParams
    shading: ShadingMap


def identity_params() -> HarmonizationParams:
    """Parameters under which harmonization is a no-op: y = x curves, unit gain."""
    k = np.arange(CURVE_NODES, dtype=np.float64) / (CURVE_NODES - 1)
    nodes = np.stack([np.stack([k, k], axis=1)] * 3, axis=0)
    grid = np.ones((SHADING_RES, SHADING_RES), dtype=np.float64)
    return HarmonizationParams(CurveParams(nodes), ShadingMap(grid))


def apply_curves(img: np.ndarray, mask: np.ndarray, curves: CurveParams) -> np.ndarray:
    """Remap each channel through its piecewise-linear curve, gated by the mask.

    Output pixel is v + M*(curve(v) - v): background pixels are untouched
    bit-for-bit and identity curves reproduce the input exactly (np.interp
    evaluates y0 + slope*(v - x0) with slope 1.0 when the knots coincide).
    """
    img = as_image(img)
    mask = as_mask(mask)
    if img.shape[2] != 3:
        raise ValueError(f"apply_curves expects a 3-channel image, got {img.shape[2]}")
    if img.shape[:2] != mask.shape:
        raise ValueError(f"image {img.shape[:2]} and mask {mask.shape} dimensions differ")
    mapped = np.empty_like(img)
    for c in range(3):
        x = curves.nodes[c, :, 0]
        y = curves.nodes[c, :, 1]
        mapped[:, :, c] = np.interp(img[:, :, c], x, y)
    mapped = np.clip(mapped, 0.0, 1.0)
    m = mask[:, :, None]
    return np.clip(img + m * (mapped - img), 0.0, 1.0)


def apply_shading(img: np.ndarray, mask: np.ndarray, shading: ShadingMap) -> np.ndarray:
    """Multiply by the upsampled shading grid under the mask.

    The grid is bilinearly upsampled to the image resolution; the product is
    clamped to [0, 1] before the mask blend.
    """
    img = as_image(img)
    mask = as_mask(mask)
    if img.shape[:2] != mask.shape:
        raise ValueError(f"image {img.shape[:2]} and mask {mask.shape} dimensions differ")
    gain = _upsample_gain(shading.grid, img.shape[0], img.shape[1])
    shaded = np.clip(img * gain[:, :, None], 0.0, 1.0)
    m = mask[:, :, None]
    return np.clip(img + m * (shaded - img), 0.0, 1.0)


def _upsample_gain(grid: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    # resize_bilinear clamps to [0,1]; gains may legitimately reach GAIN_MAX,
    # so rescale through the unit interval instead of clipping them away.
    return resize_bilinear(grid / GAIN_MAX, out_h, out_w) * GAIN_MAX


def harmonize_full(
    composite: np.ndarray, mask: np.ndarray, params: HarmonizationParams
) -> np.ndarray:
    """Apply the full transform: curves first, then shading."""
    curved = apply_curves(composite, mask, params.curves)
    return apply_shading(curved, mask, params.shading)


def serialize_params(params: HarmonizationParams) -> str:
    """Render params as the shared JSON schema, floats at full precision."""
    doc = {
        "version": 1,
        "curves": [
            [[float(x), float(y)] for x, y in params.curves.nodes[c]] for c in range(3)
        ],
        "shading": [[float(v) for v in row] for row in params.shading.grid],
    }
    return json.dumps(doc)


def parse_params(text: str) -> HarmonizationParams:
    """Parse and validate the shared params JSON schema.

    Raises ParamsError naming the offending field on any schema or
    invariant violation.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParamsError("$", f"invalid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise ParamsError("$", "top-level value must be an object")
    for key in ("version", "curves", "shading"):
        if key not in doc:
            raise ParamsError(key, "missing key")
    if doc["version"] != 1:
        raise ParamsError("version", f"unsupported version {doc['version']!r}")

    curves = doc["curves"]
    if not isinstance(curves, list) or len(curves) != 3:
        raise ParamsError("curves", "expected 3 channel curves")
    nodes = np.zeros((3, CURVE_NODES, 2), dtype=np.float64)
    for c, channel in enumerate(curves):
        if not isinstance(channel, list) or len(channel) != CURVE_NODES:
            raise ParamsError(f"curves[{c}]", f"expected {CURVE_NODES} nodes")
        for k, node in enumerate(channel):
            if (
                not isinstance(node, list)
                or len(node) != 2
                or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in node)
            ):
                raise ParamsError(f"curves[{c}][{k}]", "expected [x, y] numbers")
            nodes[c, k] = node

    shading = doc["shading"]
    if not isinstance(shading, list) or len(shading) != SHADING_RES:
        raise ParamsError("shading", f"expected {SHADING_RES} rows")
    grid = np.zeros((SHADING_RES, SHADING_RES), dtype=np.float64)
    for r, row in enumerate(shading):
        if (
            not isinstance(row, list)
            or len(row) != SHADING_RES
            or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in row)
        ):
            raise ParamsError(f"shading[{r}]", f"expected {SHADING_RES} numbers")
        grid[r] = row

    return HarmonizationParams(CurveParams(nodes), ShadingMap(grid))
