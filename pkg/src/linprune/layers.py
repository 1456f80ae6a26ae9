"""Typed in-memory representation of sequential CNNs.

Layer records hold float32 weights (the on-disk precision); shape
propagation and structural checks live in :func:`validate`. Instances are
treated as immutable: pruning builds new layer/model values instead of
mutating in place.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .validation import as_weight_array

RELU = "relu"
POOL_MAX = "max"
POOL_AVG = "avg"


@dataclass
class Conv2D:
    """2-D convolution with square kernels, symmetric zero padding."""

    weights: np.ndarray  # C_out x C_in x p x p
    bias: np.ndarray | None = None
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        self.weights = as_weight_array(self.weights, "conv weights", 4)
        c_out, c_in, ph, pw = self.weights.shape
        if ph != pw:
            raise ValidationError(f"conv kernels must be square, got {ph}x{pw}")
        if min(c_out, c_in, ph) < 1:
            raise ValidationError(f"conv dimensions must be positive, got {self.weights.shape}")
        if self.bias is not None:
            self.bias = as_weight_array(self.bias, "conv bias", 1)
            if self.bias.shape[0] != c_out:
                raise ValidationError(
                    f"conv bias length {self.bias.shape[0]} != output channels {c_out}"
                )
        if self.stride < 1:
            raise ValidationError(f"conv stride must be >= 1, got {self.stride}")
        if self.padding < 0:
            raise ValidationError(f"conv padding must be >= 0, got {self.padding}")

    @property
    def out_channels(self) -> int:
        return self.weights.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weights.shape[1]

    @property
    def kernel_size(self) -> int:
        return self.weights.shape[2]


@dataclass
class BatchNorm:
    """Per-channel normalization applied in inference mode."""

    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    epsilon: float = 1e-5

    def __post_init__(self):
        self.gamma = as_weight_array(self.gamma, "gamma", 1)
        self.beta = as_weight_array(self.beta, "beta", 1)
        self.running_mean = as_weight_array(self.running_mean, "running_mean", 1)
        self.running_var = as_weight_array(self.running_var, "running_var", 1)
        c = self.gamma.shape[0]
        for name, arr in (
            ("beta", self.beta),
            ("running_mean", self.running_mean),
            ("running_var", self.running_var),
        ):
            if arr.shape[0] != c:
                raise ValidationError(f"batchnorm {name} length {arr.shape[0]} != {c}")
        if np.any(self.running_var < 0):
            raise ValidationError("batchnorm running_var entries must be >= 0")
        if not self.epsilon > 0:
            raise ValidationError(f"batchnorm epsilon must be positive, got {self.epsilon}")

    @property
    def channels(self) -> int:
        return self.gamma.shape[0]


@dataclass
class Activation:
    kind: str = RELU

    def __post_init__(self):
        if self.kind != RELU:
            raise ValidationError(f"unsupported activation kind {self.kind!r}")


@dataclass
class Pool:
    """Max or average pooling with a square window and no padding."""

    kind: str
    window: int
    stride: int

    def __post_init__(self):
        if self.kind not in (POOL_MAX, POOL_AVG):
            raise ValidationError(f"unsupported pool kind {self.kind!r}")
        if self.window < 1 or self.stride < 1:
            raise ValidationError(
                f"pool window and stride must be >= 1, got {self.window}/{self.stride}"
            )


@dataclass
class Flatten:
    """Collapse (C, H, W) to C*H*W, channel-major: index = c*(H*W) + y*W + x."""


@dataclass
class Dense:
    weights: np.ndarray  # O x I
    bias: np.ndarray | None = None

    def __post_init__(self):
        self.weights = as_weight_array(self.weights, "dense weights", 2)
        if min(self.weights.shape) < 1:
            raise ValidationError(f"dense dimensions must be positive, got {self.weights.shape}")
        if self.bias is not None:
            self.bias = as_weight_array(self.bias, "dense bias", 1)
            if self.bias.shape[0] != self.weights.shape[0]:
                raise ValidationError(
                    f"dense bias length {self.bias.shape[0]} != outputs {self.weights.shape[0]}"
                )

    @property
    def out_features(self) -> int:
        return self.weights.shape[0]

    @property
    def in_features(self) -> int:
        return self.weights.shape[1]


LayerSpec = Conv2D | BatchNorm | Activation | Pool | Flatten | Dense


@dataclass
class Model:
    """Ordered sequence of layers with a declared (C, H, W) input shape."""

    input_shape: tuple[int, int, int]
    layers: list[LayerSpec] = field(default_factory=list)
    metadata: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        self.input_shape = tuple(int(d) for d in self.input_shape)
        if len(self.input_shape) != 3 or min(self.input_shape) < 1:
            raise ValidationError(
                f"input_shape must be three positive dims (C, H, W), got {self.input_shape}"
            )
        self.layers = list(self.layers)
        self.metadata = {str(k): str(v) for k, v in dict(self.metadata).items()}


@dataclass
class CalibrationBatch:
    """Image tensor plus optional labels for calibration and evaluation."""

    images: np.ndarray  # B x C x H x W
    labels: np.ndarray | None = None
    num_classes: int | None = None

    def __post_init__(self):
        self.images = as_weight_array(self.images, "images", 4)
        if self.images.shape[0] < 1:
            raise ValidationError("batch must contain at least one image")
        if self.labels is not None:
            self.labels = np.ascontiguousarray(self.labels, dtype=np.int64)
            if self.labels.ndim != 1 or self.labels.shape[0] != self.images.shape[0]:
                raise ValidationError(
                    f"labels length {self.labels.shape} != batch size {self.images.shape[0]}"
                )
            if np.any(self.labels < 0):
                raise ValidationError("labels must be non-negative class indices")
            if self.num_classes is not None and np.any(self.labels >= self.num_classes):
                raise ValidationError(
                    f"labels must be < num_classes={self.num_classes}, "
                    f"got max {int(self.labels.max())}"
                )

    @property
    def size(self) -> int:
        return self.images.shape[0]


def _conv_out(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def validate(model: Model) -> list[tuple[int, ...]]:
    """Propagate the input shape through every layer.

    Returns the shape trace ``[input_shape, after layer 0, after layer 1,
    ...]`` or raises :class:`ValidationError` naming the first offending
    layer with expected vs. actual dimensions. Non-empty models must end in
    a Dense classifier head.
    """
    shape: tuple[int, ...] = model.input_shape
    trace: list[tuple[int, ...]] = [shape]

    for i, layer in enumerate(model.layers):
        if isinstance(layer, Conv2D):
            if len(shape) != 3:
                raise ValidationError(f"layer {i}: conv needs a (C, H, W) input, got {shape}")
            c, h, w = shape
            if layer.in_channels != c:
                raise ValidationError(
                    f"layer {i}: conv expects {layer.in_channels} input channels, got {c}"
                )
            k, s, p = layer.kernel_size, layer.stride, layer.padding
            oh, ow = _conv_out(h, k, s, p), _conv_out(w, k, s, p)
            if oh < 1 or ow < 1:
                raise ValidationError(
                    f"layer {i}: conv output {oh}x{ow} not positive for input {h}x{w}, "
                    f"kernel {k}, stride {s}, padding {p}"
                )
            shape = (layer.out_channels, oh, ow)
        elif isinstance(layer, BatchNorm):
            if len(shape) != 3:
                raise ValidationError(f"layer {i}: batchnorm needs a (C, H, W) input, got {shape}")
            if layer.channels != shape[0]:
                raise ValidationError(
                    f"layer {i}: batchnorm has {layer.channels} channels, input has {shape[0]}"
                )
        elif isinstance(layer, Activation):
            pass
        elif isinstance(layer, Pool):
            if len(shape) != 3:
                raise ValidationError(f"layer {i}: pool needs a (C, H, W) input, got {shape}")
            c, h, w = shape
            oh = _conv_out(h, layer.window, layer.stride, 0)
            ow = _conv_out(w, layer.window, layer.stride, 0)
            if oh < 1 or ow < 1:
                raise ValidationError(
                    f"layer {i}: pool output {oh}x{ow} not positive for input {h}x{w}, "
                    f"window {layer.window}, stride {layer.stride}"
                )
            shape = (c, oh, ow)
        elif isinstance(layer, Flatten):
            if len(shape) != 3:
                raise ValidationError(f"layer {i}: flatten needs a (C, H, W) input, got {shape}")
            shape = (shape[0] * shape[1] * shape[2],)
        elif isinstance(layer, Dense):
            if len(shape) != 1:
                raise ValidationError(f"layer {i}: dense needs a flat input, got {shape}")
            if layer.in_features != shape[0]:
                raise ValidationError(
                    f"layer {i}: dense expects {layer.in_features} inputs, got {shape[0]}"
                )
            shape = (layer.out_features,)
        else:
            raise ValidationError(f"layer {i}: unknown layer type {type(layer).__name__}")
        trace.append(shape)

    if model.layers and not isinstance(model.layers[-1], Dense):
        raise ValidationError(
            f"final layer must be a Dense classifier head, got {type(model.layers[-1]).__name__}"
        )
    return trace
