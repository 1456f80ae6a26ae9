"""Shared model and batch builders for the test suite."""

import numpy as np

from linprune import (
    Activation,
    BatchNorm,
    CalibrationBatch,
    Conv2D,
    Dense,
    Flatten,
    Model,
    Pool,
    validate,
)


def small_classifier(rng, in_shape=(3, 8, 8), channels=(8, 6), classes=4, with_bn=False,
                     with_pool=False):
    """Conv/ReLU stack ending in flatten + dense, random weights."""
    layers = []
    c_prev, h, w = in_shape
    for c in channels:
        layers.append(Conv2D(
            rng.standard_normal((c, c_prev, 3, 3)).astype(np.float32) * 0.3,
            rng.standard_normal(c).astype(np.float32) * 0.1,
            stride=1, padding=1,
        ))
        if with_bn:
            layers.append(BatchNorm(
                gamma=1.0 + 0.1 * rng.standard_normal(c).astype(np.float32),
                beta=0.1 * rng.standard_normal(c).astype(np.float32),
                running_mean=0.1 * rng.standard_normal(c).astype(np.float32),
                running_var=np.abs(rng.standard_normal(c)).astype(np.float32) + 0.5,
            ))
        layers.append(Activation())
        c_prev = c
    if with_pool:
        layers.append(Pool("max", window=2, stride=2))
        h, w = h // 2, w // 2
    layers.append(Flatten())
    layers.append(Dense(
        rng.standard_normal((classes, c_prev * h * w)).astype(np.float32) * 0.05
    ))
    model = Model(in_shape, layers)
    validate(model)
    return model


def inject_scaled_duplicates(conv: Conv2D, pairs) -> Conv2D:
    """Overwrite filters so each (dep, src, scale) is an exact positive
    rescaling of another filter; rescalings survive ReLU and max pooling."""
    w = conv.weights.copy()
    b = None if conv.bias is None else conv.bias.copy()
    for dep, src, scale in pairs:
        w[dep] = np.float32(scale) * w[src]
        if b is not None:
            b[dep] = np.float32(scale) * b[src]
    return Conv2D(w, b, stride=conv.stride, padding=conv.padding)


def redundant_three_conv_net(rng, channels=16, n_dependent=4, in_shape=(3, 16, 16), classes=10):
    """Three-conv ReLU net with exact dependent filters in every conv.

    Dependencies are positive rescalings/copies so they stay exactly
    linear at every consumer input despite the ReLUs.
    """
    c_in, h, w = in_shape
    convs = []
    c_prev = c_in
    for _ in range(3):
        conv = Conv2D(
            rng.standard_normal((channels, c_prev, 3, 3)).astype(np.float32) * 0.35,
            rng.standard_normal(channels).astype(np.float32) * 0.1,
            stride=1, padding=1,
        )
        pairs = [
            (channels - 1 - i, i, [1.0, 0.5, 2.0, 1.5][i % 4])
            for i in range(n_dependent)
        ]
        convs.append(inject_scaled_duplicates(conv, pairs))
        c_prev = channels
    layers = [
        convs[0], Activation(),
        convs[1], Activation(),
        convs[2], Activation(),
        Flatten(),
        Dense(rng.standard_normal((classes, channels * h * w)).astype(np.float32) * 0.02),
    ]
    model = Model(in_shape, layers)
    validate(model)
    return model


def random_batch(rng, model: Model, size=8, labelled=False, num_classes=None):
    images = rng.standard_normal((size,) + model.input_shape).astype(np.float32)
    labels = None
    if labelled:
        if num_classes is None:
            num_classes = model.layers[-1].out_features
        labels = rng.integers(0, num_classes, size=size)
    return CalibrationBatch(images=images, labels=labels, num_classes=num_classes)
