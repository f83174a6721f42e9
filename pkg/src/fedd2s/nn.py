"""Sequential neural-network engine on numpy arrays.

Models are flat stacks of conv2d / flatten / dense layers over NHWC float64
tensors. A forward pass can run any contiguous layer range, which is what the
federated protocols need: a prefix ending at layer l produces the features a
client transmits, and a suffix picking up at l+1 maps such features to
logits. Backward replays a recorded trace, can restrict which parameter
blocks receive gradients, and can return the gradient at the range input so
traces of different models can be chained.

Layers are indexed 1..L. Flatten counts as a (parameterless) layer so that
indices line up with the architecture descriptions used elsewhere.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class Conv2D:
    out_channels: int
    kernel_size: int
    stride: int = 1
    padding: int = 0
    activation: str = "relu"


@dataclass(frozen=True)
class Flatten:
    pass


@dataclass(frozen=True)
class Dense:
    units: int
    activation: str = "relu"


LayerSpec = Conv2D | Flatten | Dense


@dataclass(frozen=True)
class ModelSpec:
    """Input shape (H, W, C) plus an ordered layer stack."""

    input_shape: tuple[int, int, int]
    layers: tuple[LayerSpec, ...]

    def __post_init__(self) -> None:
        if not self.layers:
            raise ConfigError("model needs at least one layer")
        last = self.layers[-1]
        if not isinstance(last, Dense) or last.activation != "none":
            raise ConfigError("final layer must be dense with 'none' activation")
        layer_shapes(self)  # raises ConfigError on any inconsistency

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    @property
    def num_classes(self) -> int:
        out = self.layers[-1]
        assert isinstance(out, Dense)
        return out.units


@lru_cache(maxsize=None)
def layer_shapes(spec: ModelSpec) -> tuple[tuple[int, ...], ...]:
    """Per-layer output shapes (sans batch dim); index 0 is the input shape."""
    shapes: list[tuple[int, ...]] = [tuple(spec.input_shape)]
    for i, layer in enumerate(spec.layers, start=1):
        cur = shapes[-1]
        if isinstance(layer, Conv2D):
            if len(cur) != 3:
                raise ConfigError(f"layer {i}: conv2d needs a (H, W, C) input, got {cur}")
            if layer.activation not in ("relu", "none"):
                raise ConfigError(f"layer {i}: unknown activation {layer.activation!r}")
            if min(layer.out_channels, layer.kernel_size, layer.stride) < 1 or layer.padding < 0:
                raise ConfigError(f"layer {i}: bad conv2d hyperparameters")
            h, w, _ = cur
            k, s, p = layer.kernel_size, layer.stride, layer.padding
            oh = (h + 2 * p - k) // s + 1
            ow = (w + 2 * p - k) // s + 1
            if oh < 1 or ow < 1:
                raise ConfigError(f"layer {i}: kernel {k} does not fit a {h}x{w} input")
            shapes.append((oh, ow, layer.out_channels))
        elif isinstance(layer, Flatten):
            if len(cur) != 3:
                raise ConfigError(f"layer {i}: flatten expects a (H, W, C) input, got {cur}")
            shapes.append((int(np.prod(cur)),))
        elif isinstance(layer, Dense):
            if len(cur) != 1:
                raise ConfigError(f"layer {i}: dense needs a flat input, got {cur}")
            if layer.activation not in ("relu", "none"):
                raise ConfigError(f"layer {i}: unknown activation {layer.activation!r}")
            if layer.units < 1:
                raise ConfigError(f"layer {i}: dense needs at least one unit")
            shapes.append((layer.units,))
        else:
            raise ConfigError(f"layer {i}: unknown layer kind {layer!r}")
    return tuple(shapes)


@dataclass
class ParamBlock:
    w: np.ndarray
    b: np.ndarray


ModelParams = list  # list[ParamBlock | None], one slot per layer


def init_params(spec: ModelSpec, rng: np.random.Generator) -> ModelParams:
    """He-uniform weights, zero biases; flatten slots hold None."""
    shapes = layer_shapes(spec)
    params: ModelParams = []
    for i, layer in enumerate(spec.layers, start=1):
        if isinstance(layer, Conv2D):
            k = layer.kernel_size
            c_in = shapes[i - 1][2]
            fan_in = k * k * c_in
            limit = np.sqrt(6.0 / fan_in)
            w = rng.uniform(-limit, limit, size=(k, k, c_in, layer.out_channels))
            params.append(ParamBlock(w, np.zeros(layer.out_channels)))
        elif isinstance(layer, Dense):
            fan_in = shapes[i - 1][0]
            limit = np.sqrt(6.0 / fan_in)
            w = rng.uniform(-limit, limit, size=(fan_in, layer.units))
            params.append(ParamBlock(w, np.zeros(layer.units)))
        else:
            params.append(None)
    return params


def clone_params(params: ModelParams) -> ModelParams:
    return [ParamBlock(b.w.copy(), b.b.copy()) if b is not None else None for b in params]


def zeros_like_params(params: ModelParams) -> ModelParams:
    return [
        ParamBlock(np.zeros_like(b.w), np.zeros_like(b.b)) if b is not None else None
        for b in params
    ]


def params_equal(a: ModelParams, b: ModelParams) -> bool:
    """Bitwise equality of every block."""
    if len(a) != len(b):
        return False
    for x, y in zip(a, b):
        if (x is None) != (y is None):
            return False
        if x is not None and not (np.array_equal(x.w, y.w) and np.array_equal(x.b, y.b)):
            return False
    return True


def average_params(param_sets: list) -> ModelParams:
    """Element-wise arithmetic mean over a nonempty list of parameter sets."""
    if not param_sets:
        raise ValueError("average_params needs at least one parameter set")
    n = len(param_sets)
    out: ModelParams = []
    for blocks in zip(*param_sets):
        if blocks[0] is None:
            out.append(None)
            continue
        w = sum(b.w for b in blocks) / n
        bias = sum(b.b for b in blocks) / n
        out.append(ParamBlock(w, bias))
    return out


def count_params(spec: ModelSpec) -> int:
    shapes = layer_shapes(spec)
    total = 0
    for i, layer in enumerate(spec.layers, start=1):
        if isinstance(layer, Conv2D):
            k = layer.kernel_size
            total += k * k * shapes[i - 1][2] * layer.out_channels + layer.out_channels
        elif isinstance(layer, Dense):
            total += shapes[i - 1][0] * layer.units + layer.units
    return total


@dataclass
class ForwardTrace:
    """Recorded intermediates of one forward pass over layers start..stop."""

    start: int
    stop: int
    inputs: dict  # layer index -> array fed into that layer
    pre_acts: dict  # layer index -> pre-activation output (conv/dense only)
    cols: dict  # layer index -> im2col patch matrix (conv only)
    out: np.ndarray


def _im2col(xp: np.ndarray, k: int, stride: int, oh: int, ow: int) -> np.ndarray:
    """Gather k*k patches of a padded NHWC batch into (N, OH, OW, k*k*C)."""
    n, _, _, c = xp.shape
    cols = np.empty((n, oh, ow, k * k * c), dtype=xp.dtype)
    for i in range(k):
        for j in range(k):
            patch = xp[:, i : i + stride * oh : stride, j : j + stride * ow : stride, :]
            cols[..., (i * k + j) * c : (i * k + j + 1) * c] = patch
    return cols


def _col2im(gcols: np.ndarray, xp_shape: tuple, k: int, stride: int, oh: int, ow: int) -> np.ndarray:
    """Scatter-add patch gradients back onto the padded input, transposing _im2col."""
    c = xp_shape[3]
    gxp = np.zeros(xp_shape, dtype=gcols.dtype)
    for i in range(k):
        for j in range(k):
            gxp[:, i : i + stride * oh : stride, j : j + stride * ow : stride, :] += gcols[
                ..., (i * k + j) * c : (i * k + j + 1) * c
            ]
    return gxp


def _check_range(spec: ModelSpec, start: int, stop: int) -> None:
    if not (1 <= start and stop <= spec.num_layers and start <= stop + 1):
        raise ValueError(f"layer range {start}..{stop} invalid for a {spec.num_layers}-layer model")


def _run(spec: ModelSpec, params: ModelParams, x: np.ndarray, start: int, stop: int, record: bool):
    shapes = layer_shapes(spec)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != len(shapes[start - 1]) + 1 or x.shape[1:] != shapes[start - 1]:
        raise ConfigError(
            f"input shape {x.shape[1:]} does not match layer-{start} input {shapes[start - 1]}"
        )
    inputs: dict = {}
    pre_acts: dict = {}
    cols: dict = {}
    h = x
    for i in range(start, stop + 1):
        layer = spec.layers[i - 1]
        if record:
            inputs[i] = h
        if isinstance(layer, Conv2D):
            blk = params[i - 1]
            k, s, p = layer.kernel_size, layer.stride, layer.padding
            oh, ow, c_out = shapes[i]
            xp = np.pad(h, ((0, 0), (p, p), (p, p), (0, 0))) if p else h
            patch = _im2col(xp, k, s, oh, ow)
            z = patch @ blk.w.reshape(-1, c_out) + blk.b
            if record:
                cols[i] = patch
                pre_acts[i] = z
            h = np.maximum(z, 0.0) if layer.activation == "relu" else z
        elif isinstance(layer, Flatten):
            h = h.reshape(h.shape[0], -1)
        else:  # Dense
            blk = params[i - 1]
            z = h @ blk.w + blk.b
            if record:
                pre_acts[i] = z
            h = np.maximum(z, 0.0) if layer.activation == "relu" else z
    trace = ForwardTrace(start, stop, inputs, pre_acts, cols, h) if record else None
    return h, trace


def forward(
    spec: ModelSpec, params: ModelParams, x: np.ndarray, start: int = 1, stop: int | None = None
) -> np.ndarray:
    """Apply layers start..stop (inclusive); an empty range is the identity."""
    stop = spec.num_layers if stop is None else stop
    _check_range(spec, start, stop)
    if start > stop:
        return np.asarray(x, dtype=np.float64)
    out, _ = _run(spec, params, x, start, stop, record=False)
    return out


def forward_trace(
    spec: ModelSpec, params: ModelParams, x: np.ndarray, start: int = 1, stop: int | None = None
):
    """Like forward but also returns the trace that backward needs."""
    stop = spec.num_layers if stop is None else stop
    _check_range(spec, start, stop)
    if start > stop:
        x = np.asarray(x, dtype=np.float64)
        return x, ForwardTrace(start, stop, {}, {}, {}, x)
    return _run(spec, params, x, start, stop, record=True)


def forward_prefix(spec: ModelSpec, params: ModelParams, x: np.ndarray, l: int) -> np.ndarray:
    """Activations after layer l; l = L gives the raw logits."""
    if not 1 <= l <= spec.num_layers:
        raise ValueError(f"prefix layer {l} out of range 1..{spec.num_layers}")
    return forward(spec, params, x, 1, l)


def forward_suffix(spec: ModelSpec, params: ModelParams, h: np.ndarray, l: int) -> np.ndarray:
    """Logits from applying layers l+1..L to the layer-l activations h."""
    if not 1 <= l <= spec.num_layers:
        raise ValueError(f"suffix boundary {l} out of range 1..{spec.num_layers}")
    h = np.asarray(h, dtype=np.float64)
    expect = layer_shapes(spec)[l]
    if h.shape[1:] != expect:
        raise ValueError(f"feature shape {h.shape[1:]} does not match layer-{l} output {expect}")
    return forward(spec, params, h, l + 1, spec.num_layers)


def backward(
    spec: ModelSpec,
    params: ModelParams,
    trace: ForwardTrace,
    grad_out: np.ndarray,
    param_lo: int | None = None,
    param_hi: int | None = None,
    need_input_grad: bool = False,
):
    """Backpropagate grad_out through a recorded trace.

    Returns (grads, input_grad). grads is a per-layer list aligned with
    params; entries outside the trace range or outside [param_lo, param_hi]
    are None. input_grad is the gradient at the range input when requested.
    """
    if trace is None:
        raise RuntimeError("backward requires a recorded forward trace")
    lo = trace.start if param_lo is None else max(param_lo, trace.start)
    hi = trace.stop if param_hi is None else min(param_hi, trace.stop)
    grads: ModelParams = [None] * spec.num_layers
    shapes = layer_shapes(spec)
    g = np.asarray(grad_out, dtype=np.float64)
    if g.shape != trace.out.shape:
        raise ValueError(f"grad_out shape {g.shape} does not match output {trace.out.shape}")
    for i in range(trace.stop, trace.start - 1, -1):
        layer = spec.layers[i - 1]
        if isinstance(layer, Flatten):
            g = g.reshape(trace.inputs[i].shape)
            continue
        if layer.activation == "relu":
            g = g * (trace.pre_acts[i] > 0)
        if isinstance(layer, Dense):
            blk = params[i - 1]
            if lo <= i <= hi:
                grads[i - 1] = ParamBlock(trace.inputs[i].T @ g, g.sum(axis=0))
            g = g @ blk.w.T
        else:  # Conv2D
            blk = params[i - 1]
            k, s, p = layer.kernel_size, layer.stride, layer.padding
            oh, ow, c_out = shapes[i]
            gflat = g.reshape(-1, c_out)
            if lo <= i <= hi:
                patch = trace.cols[i].reshape(-1, trace.cols[i].shape[-1])
                dw = (patch.T @ gflat).reshape(blk.w.shape)
                grads[i - 1] = ParamBlock(dw, g.sum(axis=(0, 1, 2)))
            if i > trace.start or need_input_grad:
                gcols = (gflat @ blk.w.reshape(-1, c_out).T).reshape(trace.cols[i].shape)
                n, ih, iw, c_in = trace.inputs[i].shape
                gxp = _col2im(gcols, (n, ih + 2 * p, iw + 2 * p, c_in), k, s, oh, ow)
                g = gxp[:, p : p + ih, p : p + iw, :] if p else gxp
    return grads, (g if need_input_grad else None)
