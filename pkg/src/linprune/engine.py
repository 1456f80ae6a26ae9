"""Deterministic float32 forward pass with feature-map capture.

Convolutions run as im2col + matmul (chunked over the batch to bound
memory); the equivalent naive direct-loop computation lives in the test
suite as the permanent oracle. Taps capture the exact tensor flowing into
a designated Conv2D or Dense layer, i.e. after all preceding
normalization, activation, and pooling layers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .layers import (
    POOL_AVG,
    POOL_MAX,
    Activation,
    BatchNorm,
    CalibrationBatch,
    Conv2D,
    Dense,
    Flatten,
    Model,
    Pool,
)

# Upper bound on a single im2col patch-matrix allocation.
_IM2COL_BUDGET_BYTES = 64 * 1024 * 1024


@dataclass(frozen=True)
class TapPoint:
    """Designates the input of the Conv2D or Dense layer at this index."""

    consumer_index: int


@dataclass
class ForwardTrace:
    logits: np.ndarray
    captures: dict[TapPoint, np.ndarray] = field(default_factory=dict)

    def at(self, consumer_index: int) -> np.ndarray:
        return self.captures[TapPoint(consumer_index)]


def _as_images(batch) -> np.ndarray:
    if isinstance(batch, CalibrationBatch):
        return batch.images
    x = np.ascontiguousarray(batch, dtype=np.float32)
    if x.ndim != 4:
        raise ValidationError(f"batch must be a B x C x H x W tensor, got shape {x.shape}")
    return x


def _im2col(x: np.ndarray, k: int, stride: int) -> np.ndarray:
    """(B, C, H, W) -> (B * Ho * Wo, C * k * k) patch matrix."""
    b, c, h, w = x.shape
    oh = (h - k) // stride + 1
    ow = (w - k) // stride + 1
    win = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(2, 3))
    win = win[:, :, ::stride, ::stride, :, :]  # B, C, Ho, Wo, k, k
    patches = win.transpose(0, 2, 3, 1, 4, 5).reshape(b * oh * ow, c * k * k)
    return np.ascontiguousarray(patches)


def _conv2d(x: np.ndarray, layer: Conv2D) -> np.ndarray:
    b, c, h, w = x.shape
    k, s, p = layer.kernel_size, layer.stride, layer.padding
    if p:
        x = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    hp, wp = x.shape[2], x.shape[3]
    oh = (hp - k) // s + 1
    ow = (wp - k) // s + 1
    if oh < 1 or ow < 1:
        raise ValidationError(f"conv output {oh}x{ow} not positive for input {h}x{w}")
    w2d = layer.weights.reshape(layer.out_channels, c * k * k)

    per_image = oh * ow * c * k * k * 4
    chunk = max(1, _IM2COL_BUDGET_BYTES // max(per_image, 1))
    out = np.empty((b, layer.out_channels, oh, ow), dtype=np.float32)
    for start in range(0, b, chunk):
        stop = min(start + chunk, b)
        patches = _im2col(x[start:stop], k, s)
        prod = patches @ w2d.T  # (chunk*Ho*Wo, C_out)
        prod = prod.reshape(stop - start, oh, ow, layer.out_channels)
        out[start:stop] = prod.transpose(0, 3, 1, 2)
    if layer.bias is not None:
        out += layer.bias[None, :, None, None]
    return out


def _batchnorm(x: np.ndarray, layer: BatchNorm) -> np.ndarray:
    # Scale/shift folded in float64 then applied in one float32 pass.
    var = layer.running_var.astype(np.float64)
    scale = layer.gamma.astype(np.float64) / np.sqrt(var + layer.epsilon)
    shift = layer.beta.astype(np.float64) - layer.running_mean.astype(np.float64) * scale
    scale32 = scale.astype(np.float32)[None, :, None, None]
    shift32 = shift.astype(np.float32)[None, :, None, None]
    return x * scale32 + shift32


def _pool(x: np.ndarray, layer: Pool) -> np.ndarray:
    b, c, h, w = x.shape
    win, s = layer.window, layer.stride
    oh = (h - win) // s + 1
    ow = (w - win) // s + 1
    if oh < 1 or ow < 1:
        raise ValidationError(f"pool output {oh}x{ow} not positive for input {h}x{w}")
    slices = [
        x[:, :, ky : ky + s * oh : s, kx : kx + s * ow : s]
        for ky in range(win)
        for kx in range(win)
    ]
    if layer.kind == POOL_MAX:
        return np.maximum.reduce(slices)
    assert layer.kind == POOL_AVG
    return np.add.reduce(slices) / np.float32(win * win)


def apply_layer(layer, x: np.ndarray) -> np.ndarray:
    """Apply one layer to a float32 activation tensor."""
    if isinstance(layer, Conv2D):
        if x.ndim != 4 or x.shape[1] != layer.in_channels:
            raise ValidationError(
                f"conv expects B x {layer.in_channels} x H x W input, got {x.shape}"
            )
        return _conv2d(x, layer)
    if isinstance(layer, BatchNorm):
        if x.ndim != 4 or x.shape[1] != layer.channels:
            raise ValidationError(
                f"batchnorm expects B x {layer.channels} x H x W input, got {x.shape}"
            )
        return _batchnorm(x, layer)
    if isinstance(layer, Activation):
        return np.maximum(x, np.float32(0.0))
    if isinstance(layer, Pool):
        if x.ndim != 4:
            raise ValidationError(f"pool expects a 4-D input, got {x.shape}")
        return _pool(x, layer)
    if isinstance(layer, Flatten):
        if x.ndim != 4:
            raise ValidationError(f"flatten expects a 4-D input, got {x.shape}")
        return x.reshape(x.shape[0], -1)
    if isinstance(layer, Dense):
        if x.ndim != 2 or x.shape[1] != layer.in_features:
            raise ValidationError(
                f"dense expects B x {layer.in_features} input, got {x.shape}"
            )
        out = x @ layer.weights.T
        if layer.bias is not None:
            out += layer.bias[None, :]
        return out
    raise ValidationError(f"unknown layer type {type(layer).__name__}")


def forward_with_taps(model: Model, batch, taps=()) -> ForwardTrace:
    """Run the network, capturing the consumer input at each tap point."""
    x = _as_images(batch)
    if tuple(x.shape[1:]) != model.input_shape:
        raise ValidationError(
            f"batch images {tuple(x.shape[1:])} do not match model input {model.input_shape}"
        )
    wanted: dict[int, TapPoint] = {}
    for tap in taps:
        tp = tap if isinstance(tap, TapPoint) else TapPoint(int(tap))
        idx = tp.consumer_index
        if not 0 <= idx < len(model.layers):
            raise ValidationError(f"tap index {idx} out of range for {len(model.layers)} layers")
        if not isinstance(model.layers[idx], (Conv2D, Dense)):
            raise ValidationError(
                f"tap index {idx} addresses a {type(model.layers[idx]).__name__}, "
                "expected Conv2D or Dense"
            )
        wanted[idx] = tp

    captures: dict[TapPoint, np.ndarray] = {}
    for i, layer in enumerate(model.layers):
        if i in wanted:
            captures[wanted[i]] = x.copy()
        x = apply_layer(layer, x)
    return ForwardTrace(logits=x, captures=captures)


def forward(model: Model, batch) -> np.ndarray:
    """Forward pass returning the final layer's output."""
    return forward_with_taps(model, batch).logits


def forward_from(model: Model, x: np.ndarray, start_index: int) -> np.ndarray:
    """Run the layer suffix ``model.layers[start_index:]`` on a given tensor."""
    if not 0 <= start_index <= len(model.layers):
        raise ValidationError(f"start_index {start_index} out of range")
    x = np.ascontiguousarray(x, dtype=np.float32)
    for layer in model.layers[start_index:]:
        x = apply_layer(layer, x)
    return x
