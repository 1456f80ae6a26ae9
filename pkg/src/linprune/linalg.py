"""Dense linear algebra: pivoted QR, effective rank, and least-squares solving.

All arithmetic here is 64-bit regardless of the 32-bit storage used for
model weights; factorizations of near-dependent columns are exactly the
place where single precision falls over.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ValidationError
from .validation import as_matrix, require_finite

# Exact column norms are recomputed once the running downdated estimate
# falls below this fraction of the norm at the last exact evaluation;
# guards against the classic cancellation drift in greedy pivoting.
_NORM_RECOMPUTE_RATIO = 1e-3


@dataclass
class PqrFactorization:
    """Column-pivoted QR factorization ``M[:, perm] = q @ r``.

    q has orthonormal columns (m x k, k = min(m, n)), r is k x n with an
    upper-triangular leading block, perm lists the pivot order as column
    indices into the input, and diag holds the diagonal of r in
    factorization order (non-increasing in absolute value).
    """

    q: np.ndarray
    r: np.ndarray
    perm: np.ndarray
    diag: np.ndarray


# Tall inputs are first reduced by an unpivoted thin QR so the pivoted
# stage works on a square factor; pivot decisions only depend on the
# column Gram matrix, which the reduction preserves.
_TALL_REDUCTION_MIN_ROWS = 129


def pqr_decompose(m) -> PqrFactorization:
    """Householder QR with greedy max-column-norm pivoting.

    Pivot candidates are ranked by running downdated squared norms, with
    exact recomputation whenever an estimate decays past the safeguard
    ratio, so the returned diagonal is trustworthy for rank decisions.
    """
    a = as_matrix(m, "matrix")
    require_finite(a, "matrix")
    rows, cols = a.shape

    if rows >= _TALL_REDUCTION_MIN_ROWS and rows > 2 * cols:
        q0, r0 = np.linalg.qr(a, mode="reduced")
        inner = _pqr_core(r0)
        return PqrFactorization(
            q=q0 @ inner.q, r=inner.r, perm=inner.perm, diag=inner.diag
        )
    return _pqr_core(a)


def _pqr_core(a: np.ndarray) -> PqrFactorization:
    rows, cols = a.shape
    k = min(rows, cols)

    work = np.asfortranarray(a)
    perm = np.arange(cols)
    diag = np.zeros(k)
    taus = np.zeros(k)

    norms2 = np.einsum("ij,ij->j", work, work)
    ref2 = norms2.copy()
    recompute2 = _NORM_RECOMPUTE_RATIO**2

    def _swap(i, p):
        work[:, [i, p]] = work[:, [p, i]]
        perm[[i, p]] = perm[[p, i]]
        norms2[[i, p]] = norms2[[p, i]]
        ref2[[i, p]] = ref2[[p, i]]

    for j in range(k):
        pivot = j + int(np.argmax(norms2[j:]))
        if pivot != j:
            _swap(j, pivot)

        x = work[j:, j]
        xnorm = float(np.linalg.norm(x))
        if xnorm == 0.0:
            # The downdated estimate may be stale; re-rank the remaining
            # columns from exact norms before declaring the rank exhausted.
            exact = np.einsum("ij,ij->j", work[j:, j:], work[j:, j:])
            norms2[j:] = exact
            ref2[j:] = exact
            pivot = j + int(np.argmax(norms2[j:]))
            if norms2[pivot] <= 0.0:
                work[j:, j:] = 0.0
                break
            if pivot != j:
                _swap(j, pivot)
            x = work[j:, j]
            xnorm = float(np.sqrt(norms2[j]))

        if rows == j + 1 or not np.any(x[1:]):
            # Column already upper-triangular: no reflection (so the
            # factorization of an identity is the identity).
            diag[j] = x[0]
        else:
            alpha = -xnorm if x[0] >= 0.0 else xnorm
            v0 = x[0] - alpha  # |v0| = |x0| + xnorm > 0
            v = x.copy()
            v[0] = v0
            tau_raw = 2.0 / float(np.dot(v, v))

            if j + 1 < cols:
                t = tau_raw * (v @ work[j:, j + 1 :])
                work[j:, j + 1 :] -= np.outer(v, t)
            work[j, j] = alpha
            # Store the normalized reflector (implicit leading 1) below the
            # diagonal for the later backward accumulation of q.
            work[j + 1 :, j] = v[1:] / v0
            taus[j] = tau_raw * v0 * v0
            diag[j] = alpha

        if j + 1 < cols:
            norms2[j + 1 :] -= work[j, j + 1 :] ** 2
            np.maximum(norms2[j + 1 :], 0.0, out=norms2[j + 1 :])
            stale = norms2[j + 1 :] < recompute2 * ref2[j + 1 :]
            if np.any(stale) and j + 1 < rows:
                cols_stale = j + 1 + np.nonzero(stale)[0]
                block = work[j + 1 :, cols_stale]
                exact = np.einsum("ij,ij->j", block, block)
                norms2[cols_stale] = exact
                ref2[cols_stale] = exact
            elif np.any(stale):
                norms2[j + 1 :][stale] = 0.0

    r = np.triu(work[:k, :].copy())

    q = np.eye(rows, k)
    for j in range(k - 1, -1, -1):
        if taus[j] == 0.0:
            continue
        u = np.empty(rows - j)
        u[0] = 1.0
        u[1:] = work[j + 1 :, j]
        w = taus[j] * (u @ q[j:, j:])
        q[j:, j:] -= np.outer(u, w)

    return PqrFactorization(q=q, r=r, perm=perm, diag=diag)


def effective_rank(f: PqrFactorization, tau: float) -> int:
    """Count diagonal entries at or above ``tau`` times the leading one.

    Comparison is on absolute values; a zero leading diagonal means the
    matrix itself was zero and the rank is 0.
    """
    if not 0.0 <= tau < 1.0:
        raise ValidationError(f"tau must lie in [0, 1), got {tau}")
    d = np.abs(f.diag)
    if d.size == 0 or d[0] == 0.0:
        return 0
    return int(np.count_nonzero(d >= tau * d[0]))


def least_squares(aprime, a) -> np.ndarray:
    """Solve ``min_L ||L @ aprime - a||_F`` row-wise via thin Householder QR.

    ``aprime`` is C' x N and ``a`` is C x N with N >= C' >= 1; the thin QR
    of ``aprime.T`` is computed fresh here rather than recycled from any
    pivoted factorization, and its diagonal doubles as the full-row-rank
    check. Returns the C x C' coefficient matrix.
    """
    ap = as_matrix(aprime, "aprime")
    am = as_matrix(a, "a")
    require_finite(ap, "aprime")
    require_finite(am, "a")
    cprime, n = ap.shape
    c = am.shape[0]
    if am.shape[1] != n:
        raise ValidationError(
            f"aprime and a must share their second dimension, got {n} vs {am.shape[1]}"
        )
    if n < cprime:
        raise ValidationError(f"need N >= C', got N={n}, C'={cprime}")

    if n >= _TALL_REDUCTION_MIN_ROWS and n > 2 * cprime:
        # Tall system: LAPACK thin Householder QR, then one GEMM for q^T rhs.
        q0, r0 = np.linalg.qr(ap.T, mode="reduced")
        rmat = r0
        y = q0.T @ am.T
    else:
        # Factor F = aprime.T in place while applying each reflector to the
        # right-hand side a.T, so the thin q is never formed explicitly.
        f = np.asfortranarray(ap.T)
        rhs = np.asfortranarray(am.T)
        for j in range(cprime):
            x = f[j:, j]
            xnorm = float(np.linalg.norm(x))
            if xnorm == 0.0:
                f[j, j] = 0.0
                continue
            alpha = -xnorm if x[0] >= 0.0 else xnorm
            v = x.copy()
            v[0] = x[0] - alpha
            tau_raw = 2.0 / float(np.dot(v, v))
            if j + 1 < cprime:
                t = tau_raw * (v @ f[j:, j + 1 :])
                f[j:, j + 1 :] -= np.outer(v, t)
            t = tau_raw * (v @ rhs[j:, :])
            rhs[j:, :] -= np.outer(v, t)
            f[j, j] = alpha
        rmat = f[:cprime, :cprime]
        y = rhs[:cprime, :]

    rdiag = np.diag(rmat)
    dmax = float(np.max(np.abs(rdiag))) if cprime else 0.0
    tol = max(n, cprime) * np.finfo(np.float64).eps * dmax
    small = np.abs(rdiag) <= tol
    if np.any(small):
        bad = int(np.argmax(small))
        raise NumericalError(
            f"aprime is rank deficient: |R[{bad},{bad}]| = {abs(rdiag[bad]):.3e} "
            f"(largest diagonal {dmax:.3e})"
        )

    # Back substitution on the c' x c' triangle against all C right-hand sides.
    lt = np.zeros((cprime, c))
    for i in range(cprime - 1, -1, -1):
        lt[i] = (y[i] - rmat[i, i + 1 : cprime] @ lt[i + 1 :]) / rdiag[i]
    return np.ascontiguousarray(lt.T)


def matmul(a, b) -> np.ndarray:
    """2-D matrix product in float64 with a fixed summation order."""
    am = as_matrix(a, "a")
    bm = as_matrix(b, "b")
    if am.shape[1] != bm.shape[0]:
        raise ValidationError(
            f"inner dimensions disagree: {am.shape} @ {bm.shape}"
        )
    return am @ bm
