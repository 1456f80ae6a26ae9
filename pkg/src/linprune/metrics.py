"""Compute/parameter accounting and top-1 accuracy.

Costs are tracked as multiply-accumulate counts (MACs); FLOPs-labelled
outputs report 2 FLOPs per MAC and carry that convention flag, so
reduction ratios stay comparable to tools using either convention.
Pooling and activations count zero MACs; BatchNorm contributes its stored
parameters (4 per channel) but no MACs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .layers import (
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

MACS_PER_FLOP_REPORT = 2  # 1 MAC reported as 2 FLOPs


@dataclass
class LayerCost:
    index: int
    kind: str
    output_shape: tuple[int, ...]
    macs: int
    params: int


@dataclass
class CostBreakdown:
    layers: list[LayerCost] = field(default_factory=list)
    total_macs: int = 0
    total_params: int = 0
    flops_per_mac: int = MACS_PER_FLOP_REPORT

    @property
    def total_flops(self) -> int:
        return self.flops_per_mac * self.total_macs

    def to_dict(self) -> dict:
        return {
            "total_macs": self.total_macs,
            "total_flops": self.total_flops,
            "total_params": self.total_params,
            "flops_per_mac": self.flops_per_mac,
            "layers": [
                {
                    "index": lc.index,
                    "kind": lc.kind,
                    "output_shape": list(lc.output_shape),
                    "macs": lc.macs,
                    "params": lc.params,
                }
                for lc in self.layers
            ],
        }


def count_costs(model: Model) -> CostBreakdown:
    """Per-layer MAC and stored-parameter counts plus totals."""
    trace = validate(model)
    breakdown = CostBreakdown()
    for i, layer in enumerate(model.layers):
        out_shape = trace[i + 1]
        macs = 0
        params = 0
        if isinstance(layer, Conv2D):
            c_out, oh, ow = out_shape
            macs = c_out * layer.in_channels * layer.kernel_size**2 * oh * ow
            params = int(layer.weights.size) + (int(layer.bias.size) if layer.bias is not None else 0)
        elif isinstance(layer, Dense):
            macs = layer.out_features * layer.in_features
            params = int(layer.weights.size) + (int(layer.bias.size) if layer.bias is not None else 0)
        elif isinstance(layer, BatchNorm):
            params = 4 * layer.channels  # gamma, beta, running mean/var all stored
        elif isinstance(layer, (Activation, Pool, Flatten)):
            pass
        breakdown.layers.append(
            LayerCost(index=i, kind=type(layer).__name__, output_shape=out_shape,
                      macs=macs, params=params)
        )
        breakdown.total_macs += macs
        breakdown.total_params += params
    return breakdown


def reduction_ratios(before: CostBreakdown, after: CostBreakdown) -> tuple[float, float]:
    """(FLOPs, parameter) reduction as percentages rounded to 2 decimals."""
    if before.total_macs <= 0 or before.total_params <= 0:
        raise ValidationError(
            f"baseline costs must be positive, got {before.total_macs} MACs "
            f"and {before.total_params} params"
        )
    flops = 100.0 * (1.0 - after.total_flops / (before.flops_per_mac * before.total_macs))
    params = 100.0 * (1.0 - after.total_params / before.total_params)
    return round(flops, 2), round(params, 2)


def evaluate_top1(model: Model, batches, chunk_size: int = 256) -> float:
    """Fraction of argmax(logits) == label; argmax ties pick the lowest class."""
    from .engine import forward  # local import to avoid a cycle at module load

    if isinstance(batches, CalibrationBatch):
        batches = [batches]
    correct = 0
    total = 0
    for batch in batches:
        if batch.labels is None:
            raise ValidationError("evaluation requires labelled batches")
        images, labels = batch.images, batch.labels
        for start in range(0, images.shape[0], chunk_size):
            stop = min(start + chunk_size, images.shape[0])
            logits = forward(model, images[start:stop])
            if logits.ndim != 2:
                raise ValidationError(
                    f"model output must be B x classes logits, got shape {logits.shape}"
                )
            preds = np.argmax(logits, axis=1)
            correct += int(np.sum(preds == labels[start:stop]))
            total += stop - start
    if total == 0:
        raise ValidationError("no labelled samples to evaluate")
    return correct / total
