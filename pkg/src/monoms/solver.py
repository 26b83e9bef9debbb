"""One-step and iterative multiscale solves plus their diagnostics."""
from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DivergenceError, InvalidArgumentError
from .linalg import DirectSolver, as_csr, ilu0_apply, ilu0_factor, triple_product
from .monotone import am_operator, nullspace_drift
from .msrsb import Prolongation, Restriction


def _mat(op):
    if isinstance(op, (Prolongation, Restriction)):
        return op.matrix
    return as_csr(op)


def coarse_operator(R, A_f, P, epsilon: float | None = None, w: float = 1.0):
    """``R A_f P``, repaired when ``epsilon`` is given."""
    A_c = triple_product(_mat(R), A_f, _mat(P))
    if epsilon is None:
        return A_c
    return am_operator(A_c, epsilon, w)


def one_step_multiscale(A_f, q, P, R, coarse_op, return_coarse: bool = False):
    """Prolongated coarse solution ``P coarse_op^{-1} R q``."""
    P, R = _mat(P), _mat(R)
    q = np.asarray(q, dtype=float)
    if P.shape != (A_f.shape[0], R.shape[0]) or coarse_op.shape != (R.shape[0], R.shape[0]):
        raise InvalidArgumentError("inconsistent multiscale operator shapes")
    p_c = DirectSolver(coarse_op).solve(R @ q)
    p = P @ p_c
    return (p, p_c) if return_coarse else p


def error_norms(p_ref, p_ms):
    """Scaled L2 and max-norm differences relative to the reference."""
    p_ref = np.asarray(p_ref, dtype=float)
    p_ms = np.asarray(p_ms, dtype=float)
    if p_ref.shape != p_ms.shape:
        raise InvalidArgumentError("vectors differ in length")
    ref2 = np.sum(p_ref ** 2)
    refmax = np.abs(p_ref).max(initial=0.0)
    if ref2 == 0 or refmax == 0:
        raise InvalidArgumentError("reference solution is identically zero")
    diff = p_ref - p_ms
    return float(np.sqrt(np.sum(diff ** 2) / ref2)), float(np.abs(diff).max() / refmax)


@dataclass
class BoundCensus:
    lo: float
    hi: float
    below: int
    above: int
    worst_below: float | None
    worst_above: float | None
    below_cells: list
    above_cells: list

    @property
    def violations(self) -> int:
        return self.below + self.above


def bound_check(p, lo: float = 0.0, hi: float = 1.0, max_cells: int = 100) -> BoundCensus:
    """Count entries of ``p`` outside ``[lo, hi]``; keeps up to ``max_cells`` indices each."""
    if lo > hi:
        raise InvalidArgumentError(f"lower bound {lo} exceeds upper bound {hi}")
    p = np.asarray(p, dtype=float)
    below = np.flatnonzero(p < lo)
    above = np.flatnonzero(p > hi)
    return BoundCensus(
        float(lo), float(hi), len(below), len(above),
        float(p[below].min()) if len(below) else None,
        float(p[above].max()) if len(above) else None,
        below[np.argsort(p[below])][:max_cells].tolist(),
        above[np.argsort(-p[above])][:max_cells].tolist(),
    )


@dataclass
class SolveReport:
    residuals: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    wall_time: float = 0.0
    error_l2: float | None = None
    error_linf: float | None = None
    bounds: BoundCensus | None = None
    nullspace_drift: float | None = None
    config: dict = field(default_factory=dict)
    diverged: bool = False

    def to_dict(self) -> dict:
        return asdict(self)

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    def write_residuals(self, path) -> None:
        write_residual_csv(self.residuals, path)


def write_residual_csv(residuals, path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["cycle", "relative_residual"])
        for k, r in enumerate(residuals, start=1):
            out.writerow([k, repr(float(r))])


def read_residual_csv(path) -> list:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [float(r["relative_residual"]) for r in rows]


def iterative_multiscale(A_f, q, P, R, coarse_op, smoothing_steps: int = 1, tol: float = 1e-8,
                         max_cycles: int = 300, finalize_cv: bool = False,
                         cv_restriction=None, cv_coarse_op=None, p0=None, factors=None):
    """Two-level iteration: ILU(0) smoothing followed by a coarse correction.

    Starting from ``p0`` (zero by default) each cycle applies
    ``smoothing_steps`` updates ``p += ILU0^{-1} (q - A p)`` and then
    ``p += P coarse_op^{-1} R (q - A p)``.  The relative residual
    ``|q - A p| / |q|`` is recorded after every correction.  Not reaching
    ``tol`` within ``max_cycles`` is reported through ``converged=False``;
    a non-finite residual raises :class:`DivergenceError` carrying the
    history.  With ``finalize_cv`` and a Galerkin ``R`` one extra correction
    with ``cv_restriction`` closes the iteration.

    Returns ``(p, report)``.
    """
    start = time.perf_counter()
    A = as_csr(A_f)
    Pm, Rm = _mat(P), _mat(R)
    q = np.asarray(q, dtype=float)
    qnorm = np.linalg.norm(q)
    if qnorm == 0:
        raise InvalidArgumentError("right-hand side is zero")
    ilu = factors if factors is not None else ilu0_factor(A)
    coarse = DirectSolver(coarse_op)
    p = np.zeros(A.shape[0]) if p0 is None else np.array(p0, dtype=float)

    history = []
    converged = False
    for _ in range(max_cycles):
        for _ in range(smoothing_steps):
            p += ilu0_apply(ilu, q - A @ p)
        p += Pm @ coarse.solve(Rm @ (q - A @ p))
        res = np.linalg.norm(q - A @ p) / qnorm
        history.append(float(res))
        if not np.isfinite(res):
            raise DivergenceError("residual became non-finite", history)
        if res <= tol:
            converged = True
            break

    kind = R.kind if isinstance(R, Restriction) else None
    if finalize_cv and kind != "cv":
        if cv_restriction is None:
            raise InvalidArgumentError("finalize_cv needs the control-volume restriction")
        Rcv = _mat(cv_restriction)
        op = cv_coarse_op if cv_coarse_op is not None else triple_product(Rcv, A, Pm)
        p += Pm @ DirectSolver(op).solve(Rcv @ (q - A @ p))

    report = SolveReport(
        residuals=history,
        iterations=len(history),
        converged=converged,
        wall_time=time.perf_counter() - start,
        config={"smoothing_steps": smoothing_steps, "tol": tol, "max_cycles": max_cycles,
                "restriction": kind, "finalize_cv": finalize_cv},
    )
    return p, report


__all__ = [
    "coarse_operator",
    "one_step_multiscale",
    "iterative_multiscale",
    "error_norms",
    "BoundCensus",
    "bound_check",
    "nullspace_drift",
    "SolveReport",
    "write_residual_csv",
    "read_residual_csv",
]
