"""Channel dependency analysis: aggregation, selection, and recovery.

The core operates on the aggregated activation matrix ``A`` whose row j is
channel j's values over every calibration image and spatial position.
Channels to keep are the leading pivots of a column-pivoted QR of ``A.T``;
the recovery matrix reconstructs all original rows from the kept ones in
the least-squares sense. :class:`DependentChannelSelector` exposes the
same analysis as a scikit-learn transformer over (samples x features)
arrays.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import ValidationError
from .linalg import PqrFactorization, effective_rank, least_squares, pqr_decompose
from .validation import as_matrix, check_index_list, require_finite


def aggregate(capture: np.ndarray) -> np.ndarray:
    """Rearrange a B x C x H x W capture into the C x (B*H*W) analysis matrix.

    Row j concatenates channel j over (image, row, column); output is
    float64. Requires B*H*W > C so the dependency analysis is
    overdetermined.
    """
    x = np.asarray(capture)
    if x.ndim != 4:
        raise ValidationError(f"capture must be B x C x H x W, got shape {x.shape}")
    b, c, h, w = x.shape
    n = b * h * w
    if n <= c:
        raise ValidationError(
            f"need B*H*W > C for dependency analysis, got B*H*W={n} and C={c}"
        )
    return x.transpose(1, 0, 2, 3).reshape(c, n).astype(np.float64)


def aggregate_flat(capture: np.ndarray, channels: int) -> np.ndarray:
    """Aggregate a flattened B x (C*H*W) capture for a dense consumer.

    Relies on the channel-major flatten order, so feature c*(H*W)+s is
    position s of channel c.
    """
    x = np.asarray(capture)
    if x.ndim != 2:
        raise ValidationError(f"flattened capture must be 2-D, got shape {x.shape}")
    b, feat = x.shape
    if channels < 1 or feat % channels != 0:
        raise ValidationError(
            f"feature count {feat} is not divisible by {channels} channels"
        )
    spatial = feat // channels
    n = b * spatial
    if n <= channels:
        raise ValidationError(
            f"need B*H*W > C for dependency analysis, got B*H*W={n} and C={channels}"
        )
    return x.reshape(b, channels, spatial).transpose(1, 0, 2).reshape(channels, n).astype(np.float64)


def select_channels(
    a: np.ndarray, tau: float, min_channels_kept: int = 1
) -> tuple[np.ndarray, PqrFactorization]:
    """Pick a maximal independent channel subset at relative threshold tau.

    Factors ``a.T`` with column pivoting, keeps the first
    effective-rank pivots (at least ``min_channels_kept``), and maps pivot
    positions back to original row indices. Returns the kept indices in
    ascending order together with the factorization.
    """
    am = as_matrix(a, "aggregated matrix")
    require_finite(am, "aggregated matrix")
    c, n = am.shape
    if n <= c:
        raise ValidationError(f"need more samples than channels, got {n} <= {c}")
    if min_channels_kept < 1:
        raise ValidationError(f"min_channels_kept must be >= 1, got {min_channels_kept}")
    fact = pqr_decompose(am.T)
    rank = effective_rank(fact, tau)
    keep = max(rank, min(min_channels_kept, c))
    kept = np.sort(fact.perm[:keep]).astype(np.int64)
    return kept, fact


def compute_recovery(a: np.ndarray, kept_indices) -> np.ndarray:
    """Least-squares map from kept rows back to all rows of ``a``.

    Rows at kept indices are overwritten with the exact canonical basis
    pattern so retained channels pass through adapted consumers unchanged.
    """
    am = as_matrix(a, "aggregated matrix")
    c = am.shape[0]
    kept = check_index_list(kept_indices, c, "kept_indices")
    if kept.size == c and np.array_equal(kept, np.arange(c)):
        return np.eye(c)
    recovery = least_squares(am[kept], am)
    recovery[kept, :] = 0.0
    recovery[kept, np.arange(kept.size)] = 1.0
    return recovery


def recovery_residual(a: np.ndarray, kept_indices, recovery: np.ndarray) -> float:
    """Relative Frobenius reconstruction error ``||L A' - A||_F / ||A||_F``."""
    am = np.asarray(a, dtype=np.float64)
    kept = np.asarray(kept_indices, dtype=np.int64)
    denom = float(np.linalg.norm(am))
    if denom == 0.0:
        return 0.0
    return float(np.linalg.norm(recovery @ am[kept] - am) / denom)


class DependentChannelSelector(BaseEstimator, TransformerMixin):
    """Feature selection by rank-revealing QR with least-squares recovery.

    Fitting on an (n_samples, n_features) array finds a maximal subset of
    (nearly) linearly independent columns; ``transform`` keeps those
    columns and ``inverse_transform`` reconstructs all original columns
    from them. Follows scikit-learn conventions, so the selector composes
    with pipelines and ``get_params``/``set_params`` tooling.

    Parameters
    ----------
    tau : float, default 1e-6
        Relative diagonal threshold in [0, 1); columns whose pivoted-QR
        diagonal falls below ``tau`` times the leading diagonal are
        treated as dependent.
    min_channels_kept : int, default 1
        Lower bound on the number of retained columns.
    """

    def __init__(self, tau: float = 1e-6, min_channels_kept: int = 1):
        self.tau = tau
        self.min_channels_kept = min_channels_kept

    def fit(self, X, y=None):
        x = as_matrix(X, "X")
        require_finite(x, "X")
        if not 0.0 <= self.tau < 1.0:
            raise ValidationError(f"tau must lie in [0, 1), got {self.tau}")
        kept, fact = select_channels(x.T, self.tau, self.min_channels_kept)
        self.n_features_in_ = x.shape[1]
        self.kept_indices_ = kept
        self.support_ = np.zeros(x.shape[1], dtype=bool)
        self.support_[kept] = True
        self.diag_magnitudes_ = np.abs(fact.diag)
        self.recovery_ = compute_recovery(x.T, kept)
        return self

    def _check_fitted(self):
        if not hasattr(self, "kept_indices_"):
            raise ValidationError("selector is not fitted; call fit(X) first")

    def transform(self, X):
        self._check_fitted()
        x = as_matrix(X, "X")
        if x.shape[1] != self.n_features_in_:
            raise ValidationError(
                f"X has {x.shape[1]} features, selector was fitted with {self.n_features_in_}"
            )
        return x[:, self.kept_indices_]

    def inverse_transform(self, X):
        self._check_fitted()
        x = as_matrix(X, "X")
        if x.shape[1] != self.kept_indices_.size:
            raise ValidationError(
                f"X has {x.shape[1]} features, expected {self.kept_indices_.size} kept columns"
            )
        return x @ self.recovery_.T

    def get_support(self, indices: bool = False):
        self._check_fitted()
        return self.kept_indices_.copy() if indices else self.support_.copy()
