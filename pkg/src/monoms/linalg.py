"""Sparse kernels: products, direct solves and zero-fill incomplete LU.

Matrices are ``scipy.sparse`` CSR arrays with sorted column indices.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sps
from scipy.sparse.linalg import spsolve_triangular, splu

from .errors import FactorizationError, InvalidArgumentError, SingularMatrixError


def as_csr(A) -> sps.csr_matrix:
    A = sps.csr_matrix(A)
    if not A.has_sorted_indices:
        A = A.sorted_indices()
    return A


def spmv(A, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if A.shape[1] != x.shape[0]:
        raise InvalidArgumentError(f"cannot multiply {A.shape} matrix by vector of length {x.shape[0]}")
    return as_csr(A) @ x


def triple_product(R, A, P) -> sps.csr_matrix:
    """Coarse operator ``R @ (A @ P)`` with structural zeros dropped."""
    m, n = R.shape
    if A.shape != (n, n) or P.shape != (n, m):
        raise InvalidArgumentError(f"incompatible shapes R{R.shape} A{A.shape} P{P.shape}")
    C = as_csr(R) @ (as_csr(A) @ as_csr(P))
    C = sps.csr_matrix(C)
    C.sum_duplicates()
    C.data[np.abs(C.data) < 1e-300] = 0.0
    C.eliminate_zeros()
    C.sort_indices()
    return C


def _dense_zero_pivot(A):
    _, _, U = sla.lu(A.toarray())
    d = np.abs(np.diag(U))
    small = np.flatnonzero(d <= 1e-14 * max(d.max(), 1e-300))
    return int(small[0]) if len(small) else None


class DirectSolver:
    """Sparse LU factorization (SuperLU, partial pivoting) reused across solves."""

    def __init__(self, A):
        A = sps.csc_matrix(A)
        if A.shape[0] != A.shape[1]:
            raise InvalidArgumentError(f"matrix must be square, got {A.shape}")
        self.matrix = A
        self.norm_inf = float(abs(A).sum(axis=1).max()) if A.nnz else 0.0
        try:
            self._lu = splu(A)
        except RuntimeError as exc:
            pivot = _dense_zero_pivot(A) if A.shape[0] <= 2000 else None
            raise SingularMatrixError(f"matrix is singular ({exc})", pivot) from None
        d = np.abs(self._lu.U.diagonal())
        small = np.flatnonzero(d <= 1e-14 * d.max())
        if len(small):
            pivot = int(self._lu.perm_c[small[0]])
            raise SingularMatrixError(f"matrix is numerically singular near column {pivot}", pivot)

    def solve(self, b) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        x = self._lu.solve(b)
        res = np.linalg.norm(self.matrix @ x - b)
        if not res <= 1e-10 * (self.norm_inf * np.linalg.norm(x) + np.linalg.norm(b)):
            raise SingularMatrixError(f"direct solve residual {res:.3e} exceeds the accuracy bound")
        return x


def direct_solve(A, b) -> np.ndarray:
    return DirectSolver(A).solve(b)


@dataclass(frozen=True, eq=False)
class Ilu0Factors:
    """Combined ``L\\U`` factor on the pattern of the input matrix.

    ``lu`` stores the strict lower part of ``L`` (unit diagonal implied) and
    the upper part of ``U`` including its diagonal.
    """

    lu: sps.csr_matrix
    lower: sps.csr_matrix
    upper: sps.csr_matrix

    @property
    def shape(self):
        return self.lu.shape


def ilu0_factor(A) -> Ilu0Factors:
    """Incomplete LU factorization with zero fill (row-wise IKJ ordering)."""
    A = as_csr(A).astype(float)
    A.sum_duplicates()
    n = A.shape[0]
    if A.shape[1] != n:
        raise InvalidArgumentError(f"matrix must be square, got {A.shape}")
    indptr, indices = A.indptr, A.indices
    data = A.data.copy()
    diag_pos = np.full(n, -1)
    rows = np.repeat(np.arange(n), np.diff(indptr))
    on_diag = np.flatnonzero(indices == rows)
    diag_pos[rows[on_diag]] = on_diag
    if np.any(diag_pos < 0):
        raise FactorizationError(int(np.flatnonzero(diag_pos < 0)[0]))

    ip = indptr.tolist()
    ind = indices.tolist()
    dp = diag_pos.tolist()
    val = data.tolist()
    where = [-1] * n
    for i in range(n):
        start, stop = ip[i], ip[i + 1]
        for q in range(start, stop):
            where[ind[q]] = q
        for q in range(start, dp[i]):
            k = ind[q]
            pivot = val[dp[k]]
            if pivot == 0.0:
                raise FactorizationError(k)
            lik = val[q] / pivot
            val[q] = lik
            for r in range(dp[k] + 1, ip[k + 1]):
                t = where[ind[r]]
                if t >= 0:
                    val[t] -= lik * val[r]
        for q in range(start, stop):
            where[ind[q]] = -1
        if val[dp[i]] == 0.0:
            raise FactorizationError(i)

    lu = sps.csr_matrix((np.array(val), indices.copy(), indptr.copy()), shape=A.shape)
    lower = sps.tril(lu, k=-1, format="csr")
    upper = sps.triu(lu, k=0, format="csr")
    lower.sort_indices()
    upper.sort_indices()
    return Ilu0Factors(lu, lower, upper)


def ilu0_apply(factors: Ilu0Factors, r) -> np.ndarray:
    """Return ``U^{-1} L^{-1} r``."""
    r = np.asarray(r, dtype=float)
    if r.shape[0] != factors.shape[0]:
        raise InvalidArgumentError(f"vector of length {r.shape[0]} for factors of shape {factors.shape}")
    y = spsolve_triangular(factors.lower, r, lower=True, unit_diagonal=True)
    return spsolve_triangular(factors.upper, y, lower=False)


def write_coordinate(A, path) -> None:
    """Write ``row col value`` triples with 1-based indices."""
    coo = sps.coo_matrix(A)
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w") as fh:
        for i, j, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            fh.write(f"{i + 1} {j + 1} {float(v)!r}\n")


def read_coordinate(path, shape=None) -> sps.csr_matrix:
    data = np.loadtxt(path, ndmin=2)
    if data.size == 0:
        return sps.csr_matrix(shape)
    rows = data[:, 0].astype(int) - 1
    cols = data[:, 1].astype(int) - 1
    if shape is None:
        shape = (rows.max() + 1, cols.max() + 1)
    return sps.csr_matrix((data[:, 2], (rows, cols)), shape=shape)


__all__ = [
    "as_csr",
    "spmv",
    "triple_product",
    "DirectSolver",
    "direct_solve",
    "Ilu0Factors",
    "ilu0_factor",
    "ilu0_apply",
    "write_coordinate",
    "read_coordinate",
]
