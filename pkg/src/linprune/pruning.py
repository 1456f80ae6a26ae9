"""Layer-by-layer channel pruning with consumer adaptation.

For each prunable convolution the pipeline captures the tensor its
consumer actually ingests, selects an independent channel subset, removes
the dependent filters (and matching BatchNorm channels), and rewrites the
consumer's kernels with the recovery matrix so the network stays
compatible without fine-tuning. Layers are processed sequentially and
every tap is recaptured from the already-pruned network, so each layer's
decision sees the compensated state of its predecessors.
"""

from __future__ import annotations

import datetime as _dt
import json
import time
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .engine import TapPoint, forward_with_taps
from .errors import LinpruneError, ValidationError
from .layers import BatchNorm, CalibrationBatch, Conv2D, Dense, Flatten, Model, validate
from .metrics import count_costs, reduction_ratios
from .selection import (
    aggregate,
    aggregate_flat,
    compute_recovery,
    recovery_residual,
    select_channels,
)


@dataclass
class PruneConfig:
    """Threshold and scope for a pruning run.

    tau is the relative diagonal cutoff in [0, 1); 1e-6 removes only
    numerically exact dependencies ("lossless"). layer_selection of None
    means every prunable convolution.
    """

    tau: float = 1e-6
    min_channels_kept: int = 1
    layer_selection: list[int] | None = None

    def __post_init__(self):
        if not 0.0 <= self.tau < 1.0:
            raise ValidationError(f"tau must lie in [0, 1), got {self.tau}")
        if self.min_channels_kept < 1:
            raise ValidationError(
                f"min_channels_kept must be >= 1, got {self.min_channels_kept}"
            )
        if self.layer_selection is not None:
            self.layer_selection = [int(i) for i in self.layer_selection]

    def to_dict(self) -> dict:
        return {
            "tau": self.tau,
            "min_channels_kept": self.min_channels_kept,
            "layer_selection": self.layer_selection,
        }


@dataclass
class LayerPruneRecord:
    """Outcome of pruning one layer.

    flops_*/params_* are whole-model totals immediately before and after
    this step (FLOPs at 2 per MAC), so consecutive records chain from the
    original model to the final one.
    """

    layer_index: int
    status: str  # "pruned" or "skipped"
    channels_before: int
    channels_after: int
    kept_indices: list[int]
    diag_magnitudes: list[float]
    recovery_residual: float
    residual_bound: float
    flops_before: int
    flops_after: int
    params_before: int
    params_after: int
    detail: str | None = None

    def to_dict(self) -> dict:
        return {
            "layer_index": self.layer_index,
            "status": self.status,
            "channels_before": self.channels_before,
            "channels_after": self.channels_after,
            "kept_indices": self.kept_indices,
            "diag_magnitudes": self.diag_magnitudes,
            "recovery_residual": self.recovery_residual,
            "residual_bound": self.residual_bound,
            "flops_before": self.flops_before,
            "flops_after": self.flops_after,
            "params_before": self.params_before,
            "params_after": self.params_after,
            "detail": self.detail,
        }


@dataclass
class PruneReport:
    records: list[LayerPruneRecord] = field(default_factory=list)
    flops_reduction_percent: float = 0.0
    params_reduction_percent: float = 0.0
    macs_before: int = 0
    macs_after: int = 0
    params_before: int = 0
    params_after: int = 0
    config: PruneConfig = field(default_factory=PruneConfig)
    duration_seconds: float = 0.0
    generated_at: str = ""

    @property
    def total_channels_removed(self) -> int:
        return sum(r.channels_before - r.channels_after for r in self.records)

    def to_dict(self) -> dict:
        return {
            "generated_at": self.generated_at,
            "duration_seconds": self.duration_seconds,
            "config": self.config.to_dict(),
            "flops_convention": "1 MAC = 2 FLOPs",
            "flops_reduction_percent": self.flops_reduction_percent,
            "params_reduction_percent": self.params_reduction_percent,
            "macs_before": self.macs_before,
            "macs_after": self.macs_after,
            "params_before": self.params_before,
            "params_after": self.params_after,
            "total_channels_removed": self.total_channels_removed,
            "records": [r.to_dict() for r in self.records],
        }

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")


def adapt_conv_consumer(consumer: Conv2D, recovery: np.ndarray) -> Conv2D:
    """Rewrite a conv consumer to ingest the kept channels.

    Each C x p x p kernel is flattened to p^2 x C (spatial-major rows),
    right-multiplied by the C x C' recovery matrix, and reshaped to
    C' x p x p; on the kept channels the original output is reproduced
    exactly in exact arithmetic.
    """
    l64 = np.asarray(recovery, dtype=np.float64)
    if l64.ndim != 2 or consumer.in_channels != l64.shape[0]:
        raise ValidationError(
            f"recovery matrix {l64.shape} does not match consumer input "
            f"channels {consumer.in_channels}"
        )
    w64 = consumer.weights.astype(np.float64)
    adapted = np.tensordot(w64, l64, axes=([1], [0]))  # O, p, p, C'
    adapted = adapted.transpose(0, 3, 1, 2)
    return Conv2D(
        weights=adapted.astype(np.float32),
        bias=None if consumer.bias is None else consumer.bias.copy(),
        stride=consumer.stride,
        padding=consumer.padding,
    )


def adapt_dense_consumer(consumer: Dense, recovery: np.ndarray, spatial) -> Dense:
    """Rewrite a dense consumer behind a channel-major flatten.

    Weights are viewed as O x C x (H*W) and the channel axis is contracted
    with the recovery matrix.
    """
    l64 = np.asarray(recovery, dtype=np.float64)
    h, w = (int(s) for s in spatial)
    hw = h * w
    if hw < 1 or consumer.in_features % hw != 0:
        raise ValidationError(
            f"dense input size {consumer.in_features} is not divisible by H*W = {hw}"
        )
    channels = consumer.in_features // hw
    if l64.ndim != 2 or l64.shape[0] != channels:
        raise ValidationError(
            f"recovery matrix {l64.shape} does not match {channels} flattened channels"
        )
    w64 = consumer.weights.astype(np.float64).reshape(consumer.out_features, channels, hw)
    adapted = np.einsum("ocs,ck->oks", w64, l64)
    adapted = adapted.reshape(consumer.out_features, l64.shape[1] * hw)
    return Dense(
        weights=adapted.astype(np.float32),
        bias=None if consumer.bias is None else consumer.bias.copy(),
    )


def find_consumer(model: Model, layer_index: int) -> int | None:
    """Index of the next Conv2D or Dense layer, or None."""
    for j in range(layer_index + 1, len(model.layers)):
        if isinstance(model.layers[j], (Conv2D, Dense)):
            return j
    return None


def prunable_layers(model: Model) -> list[int]:
    """Indices of Conv2D layers that have a Conv2D or Dense consumer."""
    return [
        i
        for i, layer in enumerate(model.layers)
        if isinstance(layer, Conv2D) and find_consumer(model, i) is not None
    ]


def _skip_record(model: Model, layer_index: int, reason: str) -> LayerPruneRecord:
    costs = count_costs(model)
    layer = model.layers[layer_index] if 0 <= layer_index < len(model.layers) else None
    channels = layer.out_channels if isinstance(layer, Conv2D) else 0
    return LayerPruneRecord(
        layer_index=layer_index,
        status="skipped",
        channels_before=channels,
        channels_after=channels,
        kept_indices=list(range(channels)),
        diag_magnitudes=[],
        recovery_residual=0.0,
        residual_bound=0.0,
        flops_before=costs.total_flops,
        flops_after=costs.total_flops,
        params_before=costs.total_params,
        params_after=costs.total_params,
        detail=reason,
    )


def prune_layer(
    model: Model, layer_index: int, batch, config: PruneConfig
) -> tuple[Model, LayerPruneRecord]:
    """Prune one convolution and adapt its consumer.

    Structural precondition violations produce a no-op with a diagnostic
    record; numerical failures (non-finite activations, rank deficiency)
    raise and are handled by the caller.
    """
    trace = validate(model)
    if not 0 <= layer_index < len(model.layers):
        return model, _skip_record(model, layer_index, "layer index out of range")
    producer = model.layers[layer_index]
    if not isinstance(producer, Conv2D):
        return model, _skip_record(
            model, layer_index, f"layer is {type(producer).__name__}, only Conv2D is prunable"
        )
    consumer_index = find_consumer(model, layer_index)
    if consumer_index is None:
        return model, _skip_record(
            model, layer_index, "no Conv2D or Dense consumer follows this layer"
        )

    channels = producer.out_channels
    costs_before = count_costs(model)
    fw = forward_with_taps(model, batch, [TapPoint(consumer_index)])
    capture = fw.at(consumer_index)

    consumer = model.layers[consumer_index]
    if isinstance(consumer, Dense):
        flatten_index = next(
            (
                j
                for j in range(layer_index + 1, consumer_index)
                if isinstance(model.layers[j], Flatten)
            ),
            None,
        )
        if flatten_index is None:
            return model, _skip_record(
                model, layer_index, "dense consumer without an intervening flatten"
            )
        spatial = trace[flatten_index][1:]  # (H, W) entering the flatten
        a = aggregate_flat(capture, channels)
    else:
        spatial = None
        a = aggregate(capture)

    kept, fact = select_channels(a, config.tau, config.min_channels_kept)
    diag_magnitudes = np.abs(fact.diag).tolist()

    if kept.size == channels:
        return model, LayerPruneRecord(
            layer_index=layer_index,
            status="pruned",
            channels_before=channels,
            channels_after=channels,
            kept_indices=kept.tolist(),
            diag_magnitudes=diag_magnitudes,
            recovery_residual=0.0,
            residual_bound=0.0,
            flops_before=costs_before.total_flops,
            flops_after=costs_before.total_flops,
            params_before=costs_before.total_params,
            params_after=costs_before.total_params,
        )

    recovery = compute_recovery(a, kept)
    residual = recovery_residual(a, kept, recovery)
    n_removed = channels - kept.size
    # Pivoting bounds each removed channel's off-subspace mass by
    # tau * |leading diagonal|, plus solver slack.
    residual_bound = float(np.sqrt(n_removed) * config.tau + 1e-9)

    new_layers = list(model.layers)
    new_layers[layer_index] = Conv2D(
        weights=producer.weights[kept].copy(),
        bias=None if producer.bias is None else producer.bias[kept].copy(),
        stride=producer.stride,
        padding=producer.padding,
    )
    for j in range(layer_index + 1, consumer_index):
        ln = model.layers[j]
        if isinstance(ln, BatchNorm):
            new_layers[j] = BatchNorm(
                gamma=ln.gamma[kept].copy(),
                beta=ln.beta[kept].copy(),
                running_mean=ln.running_mean[kept].copy(),
                running_var=ln.running_var[kept].copy(),
                epsilon=ln.epsilon,
            )
    if isinstance(consumer, Dense):
        new_layers[consumer_index] = adapt_dense_consumer(consumer, recovery, spatial)
    else:
        new_layers[consumer_index] = adapt_conv_consumer(consumer, recovery)

    pruned = Model(
        input_shape=model.input_shape,
        layers=new_layers,
        metadata=dict(model.metadata),
    )
    validate(pruned)
    costs_after = count_costs(pruned)

    record = LayerPruneRecord(
        layer_index=layer_index,
        status="pruned",
        channels_before=channels,
        channels_after=int(kept.size),
        kept_indices=kept.tolist(),
        diag_magnitudes=diag_magnitudes,
        recovery_residual=residual,
        residual_bound=residual_bound,
        flops_before=costs_before.total_flops,
        flops_after=costs_after.total_flops,
        params_before=costs_before.total_params,
        params_after=costs_after.total_params,
    )
    return pruned, record


def prune_model(model: Model, batch, config: PruneConfig | None = None) -> tuple[Model, PruneReport]:
    """Prune every selected convolution in order, re-tapping after each step.

    A layer that fails is recorded as skipped and the run continues; the
    returned model always passes validation.
    """
    config = config if config is not None else PruneConfig()
    t0 = time.perf_counter()
    validate(model)
    images = batch.images if isinstance(batch, CalibrationBatch) else batch

    if config.layer_selection is not None:
        selection = sorted(config.layer_selection)
    else:
        selection = prunable_layers(model)

    costs_start = count_costs(model)
    current = model
    records: list[LayerPruneRecord] = []
    for idx in selection:
        try:
            current, record = prune_layer(current, idx, images, config)
        except LinpruneError as exc:
            record = _skip_record(current, idx, str(exc))
        records.append(record)

    costs_end = count_costs(current)
    if costs_start.total_macs > 0 and costs_start.total_params > 0:
        flops_pct, params_pct = reduction_ratios(costs_start, costs_end)
    else:
        flops_pct, params_pct = 0.0, 0.0
    report = PruneReport(
        records=records,
        flops_reduction_percent=flops_pct,
        params_reduction_percent=params_pct,
        macs_before=costs_start.total_macs,
        macs_after=costs_end.total_macs,
        params_before=costs_start.total_params,
        params_after=costs_end.total_params,
        config=config,
        duration_seconds=time.perf_counter() - t0,
        generated_at=_dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    )
    return current, report


class ChannelPruner(BaseEstimator):
    """Estimator-style wrapper around :func:`prune_model`.

    ``fit(model, calibration)`` runs the full pipeline and exposes the
    pruned model as ``model_`` and the report as ``report_``.
    """

    def __init__(
        self,
        tau: float = 1e-6,
        min_channels_kept: int = 1,
        layer_selection: list[int] | None = None,
    ):
        self.tau = tau
        self.min_channels_kept = min_channels_kept
        self.layer_selection = layer_selection

    def fit(self, model: Model, calibration):
        config = PruneConfig(
            tau=self.tau,
            min_channels_kept=self.min_channels_kept,
            layer_selection=self.layer_selection,
        )
        self.model_, self.report_ = prune_model(model, calibration, config)
        return self
