"""Finite-volume assembly of the fine-scale pressure system ``A p = q``.

Row ``i`` of the assembled matrix is the net outflow of cell ``i``, so the
diagonal is positive and a consistent scheme has zero row sums away from
Dirichlet boundaries.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps

from .errors import AssemblyError, InvalidArgumentError
from .fields import TensorField
from .geometry import Grid


@dataclass
class BoundarySpec:
    """Dirichlet data and sources.

    ``dirichlet`` is a list of ``(selector, value)`` pairs where the selector
    is a side name (``"xmin"``, ``"ymax"``, ...) or an array of boundary face
    indices, and the value is a scalar or one value per selected face.
    Boundary faces not listed are no-flow.
    """

    dirichlet: list = field(default_factory=list)
    sources: np.ndarray | None = None

    def resolve(self, grid: Grid):
        faces, values = [], []
        for selector, value in self.dirichlet:
            ids = grid.side_faces(selector) if isinstance(selector, str) else np.asarray(selector, dtype=int)
            if np.any(grid.face_cells[ids, 1] >= 0):
                raise InvalidArgumentError("Dirichlet data given on an interior face")
            faces.append(ids)
            values.append(np.broadcast_to(np.asarray(value, dtype=float), ids.shape))
        if not faces:
            return np.zeros(0, dtype=int), np.zeros(0)
        faces = np.concatenate(faces)
        values = np.concatenate(values)
        if len(np.unique(faces)) != len(faces):
            raise InvalidArgumentError("a boundary face appears in more than one Dirichlet entry")
        order = np.argsort(faces)
        return faces[order], values[order]

    def source_vector(self, n: int) -> np.ndarray:
        if self.sources is None:
            return np.zeros(n)
        q = np.asarray(self.sources, dtype=float)
        if q.shape != (n,):
            raise InvalidArgumentError(f"source vector has shape {q.shape}, expected ({n},)")
        return q


def left_to_right(p_left: float = 1.0, p_right: float = 0.0) -> BoundarySpec:
    """Pressure drop along x with no-flow on the remaining sides."""
    return BoundarySpec([("xmin", p_left), ("xmax", p_right)])


def constant_dirichlet(grid: Grid, value: float) -> BoundarySpec:
    return BoundarySpec([(grid.boundary_faces, value)])


@dataclass(frozen=True, eq=False)
class SparseSystem:
    matrix: sps.csr_matrix
    rhs: np.ndarray
    dirichlet_faces: np.ndarray
    dirichlet_values: np.ndarray
    scheme: str

    @property
    def size(self) -> int:
        return self.matrix.shape[0]


def _finish(n, rows, cols, vals, rhs, faces, values, scheme):
    diag = np.arange(n)
    rows = np.concatenate([rows, diag])
    cols = np.concatenate([cols, diag])
    vals = np.concatenate([vals, np.zeros(n)])
    A = sps.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    A.sum_duplicates()
    # drop exact zeros off the diagonal only; every row keeps its diagonal
    coo = A.tocoo()
    keep = (coo.data != 0) | (coo.row == coo.col)
    A = sps.csr_matrix((coo.data[keep], (coo.row[keep], coo.col[keep])), shape=(n, n))
    A.sort_indices()
    return SparseSystem(A, rhs, faces, values, scheme)


def half_transmissibilities(grid: Grid, field: TensorField) -> np.ndarray:
    """Two-point half transmissibilities, shape (num_faces, 2); NaN where no cell."""
    K = field.for_cells(grid.num_cells)
    N = grid.face_normals
    out = np.full((grid.num_faces, 2), np.nan)
    for side, sign in ((0, 1.0), (1, -1.0)):
        has = grid.face_cells[:, side] >= 0
        c = grid.face_cells[has, side]
        d = grid.face_centroids[has] - grid.cell_centroids[c]
        kd = np.einsum("nij,nj->ni", K[c], d)
        out[has, side] = sign * np.einsum("ni,ni->n", N[has], kd) / np.einsum("ni,ni->n", d, d)
    return out


def assemble_tpfa(grid: Grid, field: TensorField, bc: BoundarySpec) -> SparseSystem:
    """Two-point flux assembly with harmonic face transmissibilities."""
    n = grid.num_cells
    if field.dim != grid.dim:
        raise InvalidArgumentError(f"{field.dim}-D tensors on a {grid.dim}-D grid")
    t = half_transmissibilities(grid, field)
    present = grid.face_cells >= 0
    bad = np.flatnonzero(np.any(present & ~(t > 0), axis=1))
    if len(bad):
        raise AssemblyError(f"non-positive half transmissibility on face {bad[0]}")

    own, nbr = grid.face_cells[:, 0], grid.face_cells[:, 1]
    inner = nbr >= 0
    ti, tj = t[inner, 0], t[inner, 1]
    T = ti * tj / (ti + tj)
    o, m = own[inner], nbr[inner]
    rows = [o, m, o, m]
    cols = [o, m, m, o]
    vals = [T, T, -T, -T]

    rhs = bc.source_vector(n).copy()
    faces, values = bc.resolve(grid)
    if len(faces):
        tb = t[faces, 0]
        ob = own[faces]
        rows.append(ob)
        cols.append(ob)
        vals.append(tb)
        np.add.at(rhs, ob, tb * values)

    system = _finish(n, np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), rhs,
                     faces, values, "tpfa")
    A = system.matrix
    off = A - sps.diags(A.diagonal())
    if off.data.size and off.data.max() > 0:
        raise AssemblyError("TPFA matrix has a positive off-diagonal entry")
    slack = A.diagonal() + np.asarray(off.sum(axis=1)).ravel()
    if np.any(slack < -1e-12 * np.abs(A.diagonal())):
        raise AssemblyError("TPFA matrix is not weakly diagonally dominant")
    return system


# --- MPFA-O ---------------------------------------------------------------

def _corner_table(grid: Grid):
    """(vertex, cell, face_a, face_b) for every cell corner, sorted by vertex.

    ``face_a`` and ``face_b`` are the two edges of the cell meeting at the
    vertex.
    """
    nc = grid.num_cells
    corner = np.tile(np.arange(4), nc)
    cell = np.repeat(np.arange(nc), 4)
    vertex = grid.cell_nodes[cell, corner]
    fa = grid.cell_faces[cell, (corner - 1) % 4]
    fb = grid.cell_faces[cell, corner]
    order = np.lexsort((cell, vertex))
    return vertex[order], cell[order], fa[order], fb[order]


def _cell_gradient_weights(grid, K, cell, fa, fb):
    """Flux weights ``w[..., s, :]`` of each cell's two half-faces.

    The flux across half-face ``s`` (along the face's reference normal) seen
    from ``cell`` is ``w[s, 0] (u_a - p) + w[s, 1] (u_b - p)`` where ``u``
    are the continuity-point pressures at the two face midpoints.
    """
    xc = grid.cell_centroids[cell]
    X = np.stack([grid.face_centroids[fa] - xc, grid.face_centroids[fb] - xc], axis=-2)
    det = X[..., 0, 0] * X[..., 1, 1] - X[..., 0, 1] * X[..., 1, 0]
    degenerate = np.abs(det) <= 1e-12 * np.abs(X).max(axis=(-1, -2)) ** 2
    if np.any(degenerate):
        return None, degenerate
    G = np.linalg.inv(X)
    nu = 0.5 * np.stack([grid.face_normals[fa], grid.face_normals[fb]], axis=-2)
    w = -np.einsum("...si,...ij,...jk->...sk", nu, K[cell], G)
    return w, degenerate


def _local_system(grid, K, v, cells, fa, fb, dirichlet_value):
    """Eliminate continuity pressures around one vertex.

    Returns the local faces and matrices ``T`` (faces x cells) and ``D``
    (faces x faces) such that the outflow of each face's owner across its
    half-face is ``T @ p[cells] + D @ d`` with ``d`` the Dirichlet data.
    """
    faces = np.unique(np.concatenate([fa, fb]))
    ns, nc = len(faces), len(cells)
    la = np.searchsorted(faces, fa)
    lb = np.searchsorted(faces, fb)
    w, _ = _cell_gradient_weights(grid, K, cells, fa, fb)
    if w is None:
        raise AssemblyError(f"degenerate cell geometry around vertex {v}")
    owner = grid.face_cells[faces, 0]
    Eu = np.zeros((ns, ns))
    Ep = np.zeros((ns, nc))
    Fu = np.zeros((ns, ns))
    Fp = np.zeros((ns, nc))
    for k in range(nc):
        for s_pos, s in enumerate((la[k], lb[k])):
            wk = w[k, s_pos]
            sign = 1.0 if owner[s] == cells[k] else -1.0
            Eu[s, la[k]] += sign * wk[0]
            Eu[s, lb[k]] += sign * wk[1]
            Ep[s, k] += sign * (wk[0] + wk[1])
            if sign > 0:
                Fu[s, la[k]] = wk[0]
                Fu[s, lb[k]] = wk[1]
                Fp[s, k] = -(wk[0] + wk[1])
    Ed = np.zeros((ns, ns))
    is_dir = np.array([f in dirichlet_value for f in faces])
    if is_dir.any():
        scale = np.abs(Eu[~is_dir]).max() if (~is_dir).any() else 1.0
        Eu[is_dir] = 0.0
        Ep[is_dir] = 0.0
        idx = np.flatnonzero(is_dir)
        Eu[idx, idx] = scale
        Ed[idx, idx] = scale
    try:
        sol = np.linalg.solve(Eu, np.hstack([Ep, Ed]))
    except np.linalg.LinAlgError:
        raise AssemblyError(f"singular interaction region at vertex {v}") from None
    if np.linalg.cond(Eu) > 1e14:
        raise AssemblyError(f"singular interaction region at vertex {v}")
    T = Fu @ sol[:, :nc] + Fp
    D = Fu @ sol[:, nc:]
    return faces, T, D


def _interior_batch(grid, K, verts, cells, fa, fb):
    """Vectorized transmissibilities for vertices with four interior faces."""
    nv = len(verts)
    both = np.concatenate([fa, fb], axis=1)
    faces = np.sort(both, axis=1)[:, ::2]
    la = (fa[..., None] == faces[:, None, :]).argmax(-1)
    lb = (fb[..., None] == faces[:, None, :]).argmax(-1)
    w, degenerate = _cell_gradient_weights(grid, K, cells, fa, fb)
    if w is None:
        bad = np.argwhere(degenerate)[0][0]
        raise AssemblyError(f"degenerate cell geometry around vertex {verts[bad]}")
    owner = grid.face_cells[faces, 0]
    Eu = np.zeros((nv, 4, 4))
    Ep = np.zeros((nv, 4, 4))
    Fu = np.zeros((nv, 4, 4))
    Fp = np.zeros((nv, 4, 4))
    vi = np.arange(nv)
    for k in range(4):
        for s_pos, loc in enumerate((la[:, k], lb[:, k])):
            wk = w[:, k, s_pos]
            own = owner[vi, loc] == cells[:, k]
            sign = np.where(own, 1.0, -1.0)
            Eu[vi, loc, la[:, k]] += sign * wk[:, 0]
            Eu[vi, loc, lb[:, k]] += sign * wk[:, 1]
            Ep[vi, loc, k] += sign * (wk[:, 0] + wk[:, 1])
            sel = vi[own]
            Fu[sel, loc[own], la[own, k]] = wk[own, 0]
            Fu[sel, loc[own], lb[own, k]] = wk[own, 1]
            Fp[sel, loc[own], k] = -(wk[own, 0] + wk[own, 1])
    cond = np.linalg.cond(Eu)
    if np.any(~(cond < 1e14)):
        raise AssemblyError(f"singular interaction region at vertex {verts[np.flatnonzero(~(cond < 1e14))[0]]}")
    T = Fu @ np.linalg.solve(Eu, Ep) + Fp
    return faces, T


MPFA_BOUNDARY = ("tpfa", "interaction")


def assemble_mpfa_o(grid: Grid, field: TensorField, bc: BoundarySpec, batched: bool = True,
                    boundary: str = "tpfa") -> SparseSystem:
    """MPFA O-method on a 2-D quadrilateral grid.

    Every vertex carries an interaction region made of its surrounding cells
    and the half-faces meeting at it.  Within each cell the pressure is
    linear through the cell centroid and the midpoints of its two half-faces;
    pressure continuity at the midpoints and flux continuity across interior
    half-faces determine the midpoint pressures, which are then eliminated.
    Boundary half-faces carry zero flux inside the interaction regions.

    ``boundary`` selects the Dirichlet treatment.  With ``"tpfa"`` a
    Dirichlet face contributes the two-point half-cell term
    ``t (p_i - p_D)`` of its owner.  With ``"interaction"`` the Dirichlet
    half-faces instead fix the midpoint pressure inside the interaction
    regions, which keeps the scheme exact for linear pressure fields up to
    the boundary.  ``batched=False`` routes every vertex through the general
    per-vertex path.
    """
    if boundary not in MPFA_BOUNDARY:
        raise InvalidArgumentError(f"unknown MPFA boundary treatment {boundary!r}")
    if grid.dim != 2:
        raise InvalidArgumentError("MPFA-O is implemented for 2-D grids only")
    if field.dim != 2:
        raise InvalidArgumentError("MPFA-O needs 2-D tensors")
    n = grid.num_cells
    K = field.for_cells(n)
    dfaces, dvalues = bc.resolve(grid)
    dirichlet_value = dict(zip(dfaces.tolist(), dvalues.tolist())) if boundary == "interaction" else {}
    rhs = bc.source_vector(n).copy()

    vertex, cell, fa, fb = _corner_table(grid)
    starts = np.flatnonzero(np.r_[True, vertex[1:] != vertex[:-1]])
    counts = np.diff(np.r_[starts, len(vertex)])
    four = counts == 4
    starts4 = starts[four]
    if batched and len(starts4):
        sel = starts4[:, None] + np.arange(4)
        candidate = grid.face_cells[np.concatenate([fa[sel], fb[sel]], axis=1), 1] >= 0
        inner = candidate.all(axis=1)
    else:
        inner = np.zeros(len(starts4), dtype=bool)

    own_all, nbr_all = grid.face_cells[:, 0], grid.face_cells[:, 1]
    rows, cols, vals = [], [], []
    if inner.any():
        sel = starts4[inner][:, None] + np.arange(4)
        faces, T = _interior_batch(grid, K, vertex[sel[:, 0]], cell[sel], fa[sel], fb[sel])
        cells_b = np.broadcast_to(cell[sel][:, None, :], T.shape)
        o = np.broadcast_to(own_all[faces][:, :, None], T.shape)
        m = np.broadcast_to(nbr_all[faces][:, :, None], T.shape)
        rows += [o.ravel(), m.ravel()]
        cols += [cells_b.ravel(), cells_b.ravel()]
        vals += [T.ravel(), -T.ravel()]
        done = set(starts4[inner].tolist())
    else:
        done = set()

    for st, cnt in zip(starts, counts):
        if int(st) in done:
            continue
        sl = slice(st, st + cnt)
        v = int(vertex[st])
        faces, T, D = _local_system(grid, K, v, cell[sl], fa[sl], fb[sl], dirichlet_value)
        d = np.array([dirichlet_value.get(f, 0.0) for f in faces.tolist()])
        flux_d = D @ d
        for s, f in enumerate(faces):
            o, m = own_all[f], nbr_all[f]
            if m < 0 and f not in dirichlet_value:
                continue
            rows.append(np.full(len(cell[sl]), o))
            cols.append(cell[sl])
            vals.append(T[s])
            rhs[o] -= flux_d[s]
            if m >= 0:
                rows.append(np.full(len(cell[sl]), m))
                cols.append(cell[sl])
                vals.append(-T[s])
                rhs[m] += flux_d[s]

    if boundary == "tpfa" and len(dfaces):
        tb = half_transmissibilities(grid, field)[dfaces, 0]
        bad = np.flatnonzero(~(tb > 0))
        if len(bad):
            raise AssemblyError(f"non-positive half transmissibility on face {dfaces[bad[0]]}")
        ob = own_all[dfaces]
        rows.append(ob)
        cols.append(ob)
        vals.append(tb)
        np.add.at(rhs, ob, tb * dvalues)

    rows = np.concatenate(rows) if rows else np.zeros(0, dtype=int)
    cols = np.concatenate(cols) if cols else np.zeros(0, dtype=int)
    vals = np.concatenate(vals) if vals else np.zeros(0)
    # round-off level entries from cancelling half-face contributions
    A = sps.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    A.sum_duplicates()
    coo = A.tocoo()
    rowmax = np.zeros(n)
    np.maximum.at(rowmax, coo.row, np.abs(coo.data))
    tiny = np.abs(coo.data) <= 1e-14 * rowmax[coo.row]
    keep = ~tiny | (coo.row == coo.col)
    data = np.where(tiny, 0.0, coo.data)
    return _finish(n, coo.row[keep], coo.col[keep], data[keep], rhs, dfaces, dvalues, "mpfa-o")


def assemble(grid: Grid, field: TensorField, bc: BoundarySpec, scheme: str = "tpfa",
             mpfa_boundary: str = "tpfa") -> SparseSystem:
    if scheme == "tpfa":
        return assemble_tpfa(grid, field, bc)
    if scheme in ("mpfa-o", "mpfa"):
        return assemble_mpfa_o(grid, field, bc, boundary=mpfa_boundary)
    raise InvalidArgumentError(f"unknown scheme {scheme!r}")


__all__ = [
    "BoundarySpec",
    "SparseSystem",
    "left_to_right",
    "constant_dirichlet",
    "half_transmissibilities",
    "assemble_tpfa",
    "assemble_mpfa_o",
    "assemble",
    "MPFA_BOUNDARY",
]
