"""Restricted-smoothed basis prolongation and the two restriction operators."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sps

from .errors import DivergenceError, InvalidArgumentError
from .geometry import CoarsePartition, SupportRegions
from .linalg import as_csr

UNITY_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Prolongation:
    """Sparse n x m prolongation whose columns are the basis functions."""

    matrix: sps.csr_matrix
    supports: SupportRegions | None = None
    iterations: int = 0
    max_increment: float = float("nan")
    increments: tuple = ()

    @property
    def shape(self):
        return self.matrix.shape


@dataclass(frozen=True, eq=False)
class Restriction:
    matrix: sps.csr_matrix
    kind: str  # "cv" or "galerkin"

    @property
    def shape(self):
        return self.matrix.shape


def _indicator(partition: CoarsePartition) -> sps.csr_matrix:
    n, m = partition.num_cells, partition.num_blocks
    return sps.csr_matrix((np.ones(n), (np.arange(n), partition.block_of_cell)), shape=(n, m))


def init_prolongation(partition: CoarsePartition) -> Prolongation:
    """Characteristic function of every coarse block."""
    return Prolongation(_indicator(partition))


def connectivity_matrix(A) -> sps.csr_matrix:
    """Copy of ``A`` whose diagonal is reset so that every row sums to zero."""
    A = as_csr(A).astype(float)
    off = A - sps.diags(A.diagonal())
    off = as_csr(off)
    off.eliminate_zeros()
    rowsum = np.asarray(off.sum(axis=1)).ravel()
    out = as_csr(off + sps.diags(-rowsum))
    return out


def _pattern(supports: SupportRegions, n: int):
    rows = np.concatenate(supports.support)
    cols = np.repeat(np.arange(supports.num_blocks), [len(s) for s in supports.support])
    frozen = np.zeros(len(rows), dtype=bool)
    offset = 0
    for sup, bnd in zip(supports.support, supports.boundary):
        frozen[offset:offset + len(sup)] = np.isin(sup, bnd, assume_unique=True)
        offset += len(sup)
    order = np.lexsort((cols, rows))
    rows, cols, frozen = rows[order], cols[order], frozen[order]
    indptr = np.concatenate([[0], np.cumsum(np.bincount(rows, minlength=n))])
    return rows, cols, frozen, indptr


def smooth_prolongation(A_conn, P, supports: SupportRegions, omega: float = 2.0 / 3.0,
                        tol: float = 1e-3, max_iters: int = 250) -> Prolongation:
    """Restricted Jacobi smoothing of the basis functions.

    Each sweep computes the Jacobi increment ``-omega D^{-1} A_conn P``
    from the previous iterate, discards it outside the support interior of
    every column (the support boundary stays at zero), and rescales the rows
    in the global support boundary so that they keep summing to one.  Stops
    when the largest change of ``P`` drops below ``tol`` or after
    ``max_iters`` sweeps.
    """
    if not 0 < omega <= 1:
        raise InvalidArgumentError(f"omega must lie in (0, 1], got {omega}")
    A_conn = as_csr(A_conn)
    P0 = as_csr(P.matrix if isinstance(P, Prolongation) else P)
    n, m = P0.shape
    if supports.num_blocks != m or A_conn.shape != (n, n):
        raise InvalidArgumentError("operator, prolongation and supports disagree in size")

    rows, cols, frozen, indptr = _pattern(supports, n)
    vals = np.asarray(P0[rows, cols]).ravel().astype(float)
    outside = abs(P0).sum() - np.abs(vals).sum()
    if outside > 0:
        raise InvalidArgumentError("initial prolongation has entries outside the supports")
    diag = A_conn.diagonal()
    inv_diag = np.divide(1.0, diag, out=np.zeros(n), where=diag != 0)
    in_g = supports.global_boundary[rows]
    g_rows = rows[in_g]

    increments = []
    it = 0
    max_inc = 0.0
    while it < max_iters:
        Pm = sps.csr_matrix((vals, cols, indptr), shape=(n, m))
        AP = A_conn @ Pm
        d = -omega * inv_diag[rows] * np.asarray(AP[rows, cols]).ravel()
        d[frozen] = 0.0
        new = vals + d
        # equals 1 + sum_j d_ij for exact unit rows, and removes accumulated drift
        denom = np.bincount(rows, weights=new, minlength=n)[g_rows]
        if np.any(~(denom > 0)):
            bad = int(g_rows[np.flatnonzero(~(denom > 0))[0]])
            raise DivergenceError(f"basis renormalization breaks down at cell {bad}", increments)
        new[in_g] /= denom
        max_inc = float(np.abs(new - vals).max()) if len(vals) else 0.0
        vals = new
        it += 1
        increments.append(max_inc)
        unity = np.bincount(rows, weights=vals, minlength=n)
        # rounding of a row sum grows with the size of its entries; for a
        # non-negative row this scale is exactly one
        scale = np.maximum(np.bincount(rows, weights=np.abs(vals), minlength=n), 1.0)
        err = (np.abs(unity - 1.0) / scale).max()
        if not err <= UNITY_TOL:
            raise AssertionError(f"partition of unity violated by {err:.3e} after sweep {it}")
        if max_inc < tol:
            break

    Pm = sps.csr_matrix((vals, cols, indptr), shape=(n, m))
    return Prolongation(Pm, supports, it, max_inc, tuple(increments))


def restriction_cv(partition: CoarsePartition) -> Restriction:
    return Restriction(as_csr(_indicator(partition).T), "cv")


def restriction_galerkin(P) -> Restriction:
    P = P.matrix if isinstance(P, Prolongation) else P
    return Restriction(as_csr(sps.csr_matrix(P).T), "galerkin")


def write_basis(P, path, columns=None) -> None:
    """Dump basis columns as ``cell value`` lines under ``# column j`` headers."""
    P = sps.csc_matrix(P.matrix if isinstance(P, Prolongation) else P)
    P.sort_indices()
    columns = range(P.shape[1]) if columns is None else columns
    with open(path, "w") as fh:
        for j in columns:
            fh.write(f"# column {j}\n")
            lo, hi = P.indptr[j], P.indptr[j + 1]
            for i, v in zip(P.indices[lo:hi], P.data[lo:hi]):
                fh.write(f"{i} {float(v)!r}\n")


def read_basis(path) -> dict:
    out, current = {}, None
    with open(path) as fh:
        for line in fh:
            if line.startswith("# column"):
                current = int(line.split()[-1])
                out[current] = ([], [])
            elif line.strip():
                i, v = line.split()
                out[current][0].append(int(i))
                out[current][1].append(float(v))
    return {j: (np.array(c, dtype=int), np.array(v)) for j, (c, v) in out.items()}


__all__ = [
    "Prolongation",
    "Restriction",
    "init_prolongation",
    "connectivity_matrix",
    "smooth_prolongation",
    "restriction_cv",
    "restriction_galerkin",
    "write_basis",
    "read_basis",
]
