"""Monotonicity repair by null-space preserving redistribution.

A positive off-diagonal entry ``a_ij`` is weakened by adding the pattern

    b_ii += w a_ij,  b_ij -= w a_ij,  b_ji -= w a_ij,  b_jj += w a_ij

to the operator.  Every such pattern has zero row and column sums, so the
repaired operator maps the constant vector (and its transpose does) exactly
as the original one.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sps

from .errors import InvalidOperatorError
from .linalg import as_csr

DRIFT_TOL = 1e-13


@dataclass(frozen=True, eq=False)
class FlaggedEntries:
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray
    ratios: np.ndarray
    epsilon: float

    def __len__(self) -> int:
        return len(self.rows)


@dataclass(frozen=True, eq=False)
class Perturbation:
    matrix: sps.csr_matrix
    weight: float


def _offdiagonal(A):
    coo = sps.coo_matrix(A)
    off = coo.row != coo.col
    return coo.row[off], coo.col[off], coo.data[off]


def count_positive_offdiagonals(A) -> int:
    _, _, v = _offdiagonal(A)
    return int(np.count_nonzero(v > 0))


def flag_positive_offdiagonals(A, epsilon: float) -> FlaggedEntries:
    """Off-diagonal entries with ``a_ij > 0`` and ``a_ij / a_ii > epsilon``."""
    A = as_csr(A)
    diag = A.diagonal()
    bad = np.flatnonzero(~(diag > 0))
    if len(bad):
        raise InvalidOperatorError(f"row {bad[0]} has non-positive diagonal {diag[bad[0]]}")
    r, c, v = _offdiagonal(A)
    pos = v > 0
    r, c, v = r[pos], c[pos], v[pos]
    zeta = v / diag[r]
    keep = zeta > epsilon
    order = np.lexsort((c[keep], r[keep]))
    return FlaggedEntries(r[keep][order], c[keep][order], v[keep][order], zeta[keep][order], float(epsilon))


def build_perturbation(A, entries: FlaggedEntries, w: float = 1.0) -> Perturbation:
    """Accumulate the redistribution pattern of every flagged entry.

    Uses the values of the original operator; entries that only turn
    positive through the perturbation are not revisited.
    """
    n = A.shape[0]
    i, j, x = entries.rows, entries.cols, w * entries.values
    rows = np.concatenate([i, i, j, j])
    cols = np.concatenate([i, j, i, j])
    vals = np.concatenate([x, -x, -x, x])
    B = sps.coo_matrix((vals, (rows, cols)), shape=A.shape).tocsr()
    B.sum_duplicates()
    B.sort_indices()
    ones = np.ones(n)
    scale = max(float(np.abs(x).max()) if len(x) else 0.0, 1.0)
    if np.abs(B @ ones).max(initial=0) > DRIFT_TOL * scale or np.abs(B.T @ ones).max(initial=0) > DRIFT_TOL * scale:
        raise AssertionError("perturbation does not annihilate the constant vector")
    return Perturbation(B, float(w))


def am_operator(A_c, epsilon: float = 0.01, w: float = 1.0) -> sps.csr_matrix:
    """Coarse operator with its problematic positive couplings redistributed."""
    A_c = as_csr(A_c)
    entries = flag_positive_offdiagonals(A_c, epsilon)
    if len(entries) == 0:
        return A_c.copy()
    B = build_perturbation(A_c, entries, w)
    return as_csr(A_c + B.matrix)


def m_matrix_fine(A_f) -> sps.csr_matrix:
    """Redistribute every positive off-diagonal of a fine operator (full weight).

    The result is only meant for building basis functions; coarse systems
    are formed from the untouched operator.  No ratio test is involved, so
    the diagonal of ``A_f`` need not be positive.
    """
    A_f = as_csr(A_f)
    r, c, v = _offdiagonal(A_f)
    pos = v > 0
    r, c, v = r[pos], c[pos], v[pos]
    order = np.lexsort((c, r))
    entries = FlaggedEntries(r[order], c[order], v[order], np.full(len(v), np.nan), 0.0)
    if len(entries) == 0:
        return A_f.copy()
    return as_csr(A_f + build_perturbation(A_f, entries, 1.0).matrix)


def nullspace_drift(A_c, A_m) -> float:
    """``max(|(A_m - A_c) 1|_inf, |(A_m - A_c)^T 1|_inf)``."""
    D = as_csr(A_m) - as_csr(A_c)
    ones = np.ones(D.shape[0])
    return float(max(np.abs(D @ ones).max(initial=0), np.abs(D.T @ ones).max(initial=0)))


def repair_report(A, epsilon: float, w: float) -> dict:
    """Diagnostics of a repair without touching the operator."""
    A = as_csr(A)
    diag = A.diagonal()
    r, _, v = _offdiagonal(A)
    pos = v > 0
    zeta = v[pos] / diag[r[pos]] if np.all(diag > 0) else np.array([np.nan])
    entries = flag_positive_offdiagonals(A, epsilon)
    A_m = am_operator(A, epsilon, w)
    return {
        "size": int(A.shape[0]),
        "positive_offdiagonals": int(pos.sum()),
        "flagged": len(entries),
        "epsilon": float(epsilon),
        "weight": float(w),
        "max_zeta": float(zeta.max()) if zeta.size else 0.0,
        "positive_offdiagonals_after": count_positive_offdiagonals(A_m),
        "nullspace_drift": nullspace_drift(A, A_m),
        "max_diagonal": float(np.abs(diag).max()) if diag.size else 0.0,
    }


__all__ = [
    "FlaggedEntries",
    "Perturbation",
    "count_positive_offdiagonals",
    "flag_positive_offdiagonals",
    "build_perturbation",
    "am_operator",
    "m_matrix_fine",
    "nullspace_drift",
    "repair_report",
]
