"""Structured channel pruning for sequential CNNs.

Removes linearly dependent channels found by column-pivoted QR analysis of
captured feature maps and rewrites each consumer layer with a
least-squares recovery matrix, so compressed networks keep their outputs
without any fine-tuning. Ships a self-contained model format (LNDP),
batch format (LNDS), a deterministic inference engine, cost metrics, and
a CLI.
"""

from .engine import ForwardTrace, TapPoint, forward, forward_from, forward_with_taps
from .errors import (
    BadMagicError,
    FormatError,
    HeaderPayloadMismatchError,
    LinpruneError,
    NumericalError,
    TruncatedPayloadError,
    UnsupportedVersionError,
    ValidationError,
)
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
from .linalg import PqrFactorization, effective_rank, least_squares, matmul, pqr_decompose
from .metrics import CostBreakdown, LayerCost, count_costs, evaluate_top1, reduction_ratios
from .pruning import (
    ChannelPruner,
    LayerPruneRecord,
    PruneConfig,
    PruneReport,
    adapt_conv_consumer,
    adapt_dense_consumer,
    find_consumer,
    prunable_layers,
    prune_layer,
    prune_model,
)
from .selection import (
    DependentChannelSelector,
    aggregate,
    aggregate_flat,
    compute_recovery,
    recovery_residual,
    select_channels,
)
from .serialization import load_batch, load_model, save_batch, save_model

__version__ = "0.1.0"

__all__ = [
    "Activation",
    "BadMagicError",
    "BatchNorm",
    "CalibrationBatch",
    "ChannelPruner",
    "Conv2D",
    "CostBreakdown",
    "Dense",
    "DependentChannelSelector",
    "Flatten",
    "FormatError",
    "ForwardTrace",
    "HeaderPayloadMismatchError",
    "LayerCost",
    "LayerPruneRecord",
    "LinpruneError",
    "Model",
    "NumericalError",
    "Pool",
    "PqrFactorization",
    "PruneConfig",
    "PruneReport",
    "TapPoint",
    "TruncatedPayloadError",
    "UnsupportedVersionError",
    "ValidationError",
    "adapt_conv_consumer",
    "adapt_dense_consumer",
    "aggregate",
    "aggregate_flat",
    "compute_recovery",
    "count_costs",
    "effective_rank",
    "evaluate_top1",
    "find_consumer",
    "forward",
    "forward_from",
    "forward_with_taps",
    "least_squares",
    "load_batch",
    "load_model",
    "matmul",
    "pqr_decompose",
    "prunable_layers",
    "prune_layer",
    "prune_model",
    "recovery_residual",
    "reduction_ratios",
    "save_batch",
    "save_model",
    "select_channels",
    "validate",
]
