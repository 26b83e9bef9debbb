"""Structured fine grids, uniform coarse partitions and basis support regions.

Cells, nodes and faces are numbered on logical lattices with the x index
varying fastest.  Faces are grouped by axis (all x-faces, then y-faces, then
z-faces).  Every face has an owner cell and a neighbor cell, or ``-1`` on
the domain boundary; the stored area-weighted normal points from the owner
into the neighbor (outward for boundary faces).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sps

from .errors import DegenerateGridError, InvalidArgumentError

SIDES = ("xmin", "xmax", "ymin", "ymax", "zmin", "zmax")


def _frozen(*arrays):
    for a in arrays:
        a.setflags(write=False)


def _flat(idx, shape):
    return np.ravel_multi_index(tuple(idx), shape, order="F")


@dataclass(frozen=True, eq=False)
class Grid:
    """Logically structured quadrilateral (2-D) or hexahedral (3-D) grid.

    Attributes
    ----------
    cell_counts : tuple of int
        Number of cells along each axis.
    node_coords : (num_nodes, dim) array
    cell_nodes : (num_cells, 2**dim) int array
        Corner nodes; counterclockwise in 2-D.
    cell_faces : (num_cells, 2*dim) int array
        In 2-D ordered as the counterclockwise edges (bottom, right, top,
        left), so edge ``k`` joins corners ``k`` and ``k+1``.  In 3-D ordered
        (x-, x+, y-, y+, z-, z+).
    face_cells : (num_faces, 2) int array
        Owner and neighbor cell; the neighbor is -1 on the boundary.
    face_tags : (num_faces,) int array
        Index into ``SIDES`` for boundary faces, -1 for interior faces.
    """

    cell_counts: tuple
    node_coords: np.ndarray
    cell_nodes: np.ndarray
    cell_faces: np.ndarray
    face_cells: np.ndarray
    face_nodes: np.ndarray
    face_tags: np.ndarray
    face_centroids: np.ndarray
    face_normals: np.ndarray
    cell_centroids: np.ndarray
    cell_volumes: np.ndarray
    perturbed: bool = False

    @property
    def dim(self) -> int:
        return len(self.cell_counts)

    @property
    def num_cells(self) -> int:
        return len(self.cell_volumes)

    @property
    def num_faces(self) -> int:
        return len(self.face_tags)

    @property
    def num_nodes(self) -> int:
        return len(self.node_coords)

    @property
    def node_counts(self) -> tuple:
        return tuple(n + 1 for n in self.cell_counts)

    @property
    def face_areas(self) -> np.ndarray:
        return np.linalg.norm(self.face_normals, axis=1)

    @property
    def boundary_faces(self) -> np.ndarray:
        return np.flatnonzero(self.face_tags >= 0)

    @property
    def interior_faces(self) -> np.ndarray:
        return np.flatnonzero(self.face_tags < 0)

    def side_faces(self, side: str) -> np.ndarray:
        if side not in SIDES[: 2 * self.dim]:
            raise InvalidArgumentError(f"unknown boundary side {side!r} for a {self.dim}-D grid")
        return np.flatnonzero(self.face_tags == SIDES.index(side))

    def cell_index(self) -> np.ndarray:
        """Logical (i, j[, k]) index of every cell, shape (num_cells, dim)."""
        return np.stack(np.unravel_index(np.arange(self.num_cells), self.cell_counts, order="F"), axis=1)

    def node_index(self) -> np.ndarray:
        return np.stack(np.unravel_index(np.arange(self.num_nodes), self.node_counts, order="F"), axis=1)

    def interior_node_mask(self) -> np.ndarray:
        idx = self.node_index()
        inner = (idx > 0) & (idx < np.array(self.cell_counts))
        return inner.all(axis=1)

    def adjacency(self) -> sps.csr_matrix:
        """Symmetric cell-to-cell connectivity through interior faces."""
        inner = self.face_cells[self.face_cells[:, 1] >= 0]
        rows = np.concatenate([inner[:, 0], inner[:, 1]])
        cols = np.concatenate([inner[:, 1], inner[:, 0]])
        n = self.num_cells
        return sps.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))


def _lattice_nodes(extent, counts):
    axes = [np.linspace(0.0, e, n + 1) for e, n in zip(extent, counts)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel(order="F") for m in mesh], axis=1)


def _topology(counts):
    dim = len(counts)
    ncnt = tuple(n + 1 for n in counts)
    cidx = np.unravel_index(np.arange(int(np.prod(counts))), counts, order="F")

    if dim == 2:
        i, j = cidx
        corners = [(0, 0), (1, 0), (1, 1), (0, 1)]
    else:
        i, j, k = cidx
        corners = [(0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0),
                   (0, 0, 1), (1, 0, 1), (1, 1, 1), (0, 1, 1)]
    cell_nodes = np.stack(
        [_flat([c + o for c, o in zip(cidx, off)], ncnt) for off in corners], axis=1
    )

    face_cells, face_nodes, face_tags, offsets = [], [], [], []
    start = 0
    for a in range(dim):
        fshape = tuple(n + 1 if b == a else n for b, n in enumerate(counts))
        nf = int(np.prod(fshape))
        fidx = np.unravel_index(np.arange(nf), fshape, order="F")
        pos = fidx[a]
        lower = [f.copy() for f in fidx]
        lower[a] = pos - 1
        low_cell = np.where(pos > 0, _flat([np.maximum(x, 0) for x in lower], counts), -1)
        up_idx = [np.minimum(f, n - 1) for f, n in zip(fidx, counts)]
        up_cell = np.where(pos < counts[a], _flat(up_idx, counts), -1)
        owner = np.where(low_cell >= 0, low_cell, up_cell)
        nbr = np.where(low_cell >= 0, up_cell, -1)
        tags = np.full(nf, -1)
        tags[pos == 0] = 2 * a
        tags[pos == counts[a]] = 2 * a + 1
        if dim == 2:
            step = (0, 1) if a == 0 else (1, 0)
            nodes_off = [(0, 0), step]
        else:
            u, v = [b for b in range(3) if b != a]
            eu = tuple(1 if b == u else 0 for b in range(3))
            ev = tuple(1 if b == v else 0 for b in range(3))
            euv = tuple(x + y for x, y in zip(eu, ev))
            nodes_off = [(0, 0, 0), eu, euv, ev]
        fn = np.stack([_flat([f + o for f, o in zip(fidx, off)], ncnt) for off in nodes_off], axis=1)
        face_cells.append(np.stack([owner, nbr], axis=1))
        face_nodes.append(fn)
        face_tags.append(tags)
        offsets.append(start)
        start += nf
    face_cells = np.concatenate(face_cells)
    face_nodes = np.concatenate(face_nodes)
    face_tags = np.concatenate(face_tags)

    def face_id(a, idx):
        fshape = tuple(n + 1 if b == a else n for b, n in enumerate(counts))
        return offsets[a] + _flat(idx, fshape)

    if dim == 2:
        cell_faces = np.stack([
            face_id(1, [i, j]),
            face_id(0, [i + 1, j]),
            face_id(1, [i, j + 1]),
            face_id(0, [i, j]),
        ], axis=1)
    else:
        cell_faces = np.stack([
            face_id(0, [i, j, k]), face_id(0, [i + 1, j, k]),
            face_id(1, [i, j, k]), face_id(1, [i, j + 1, k]),
            face_id(2, [i, j, k]), face_id(2, [i, j, k + 1]),
        ], axis=1)
    return cell_nodes, cell_faces, face_cells, face_nodes, face_tags


def _build(counts, nodes, perturbed=False) -> Grid:
    counts = tuple(int(n) for n in counts)
    dim = len(counts)
    cell_nodes, cell_faces, face_cells, face_nodes, face_tags = _topology(counts)
    lower_boundary = np.isin(face_tags, [0, 2, 4])

    if dim == 2:
        p0 = nodes[face_nodes[:, 0]]
        p1 = nodes[face_nodes[:, 1]]
        t = p1 - p0
        nf_x = int((counts[0] + 1) * counts[1])
        normals = np.empty_like(t)
        normals[:nf_x] = np.stack([t[:nf_x, 1], -t[:nf_x, 0]], axis=1)
        normals[nf_x:] = np.stack([-t[nf_x:, 1], t[nf_x:, 0]], axis=1)
        fcent = 0.5 * (p0 + p1)

        x = nodes[cell_nodes, 0]
        y = nodes[cell_nodes, 1]
        xn = np.roll(x, -1, axis=1)
        yn = np.roll(y, -1, axis=1)
        cross = x * yn - xn * y
        vol = 0.5 * cross.sum(axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            cx = ((x + xn) * cross).sum(axis=1) / (6.0 * vol)
            cy = ((y + yn) * cross).sum(axis=1) / (6.0 * vol)
        ccent = np.stack([cx, cy], axis=1)
    else:
        q = nodes[face_nodes]
        normals = 0.5 * np.cross(q[:, 2] - q[:, 0], q[:, 3] - q[:, 1])
        fcent = q.mean(axis=1)
        nfx = (counts[0] + 1) * counts[1] * counts[2]
        nfy = counts[0] * (counts[1] + 1) * counts[2]
        axis_of_face = np.repeat([0, 1, 2], [nfx, nfy, len(face_tags) - nfx - nfy])
        flip = normals[np.arange(len(normals)), axis_of_face] < 0
        normals[flip] *= -1
        pts = nodes[cell_nodes]
        vol = np.prod(pts.max(axis=1) - pts.min(axis=1), axis=1)
        ccent = pts.mean(axis=1)

    normals[lower_boundary] *= -1
    if np.any(vol <= 0) or not np.all(np.isfinite(vol)):
        bad = int(np.flatnonzero(~(vol > 0))[0])
        raise DegenerateGridError(f"cell {bad} has non-positive volume {vol[bad]:.3e}")
    if np.any(np.linalg.norm(normals, axis=1) == 0):
        raise DegenerateGridError("zero-area face")

    nodes = np.array(nodes, dtype=float)
    _frozen(nodes, cell_nodes, cell_faces, face_cells, face_nodes, face_tags, fcent, normals, ccent, vol)
    return Grid(counts, nodes, cell_nodes, cell_faces, face_cells, face_nodes, face_tags,
                fcent, normals, ccent, vol, perturbed)


def build_cartesian_grid(extent, cell_counts) -> Grid:
    """Regular lattice grid covering ``[0, extent[a]]`` along each axis."""
    extent = tuple(float(e) for e in np.atleast_1d(extent))
    counts = tuple(int(n) for n in np.atleast_1d(cell_counts))
    if len(extent) != len(counts) or len(counts) not in (2, 3):
        raise InvalidArgumentError("extent and cell_counts must both have 2 or 3 entries")
    if min(counts) < 1:
        raise InvalidArgumentError(f"cell counts must be >= 1, got {counts}")
    if min(extent) <= 0:
        raise InvalidArgumentError(f"extents must be positive, got {extent}")
    grid = _build(counts, _lattice_nodes(extent, counts))
    # exact lattice centroids, free of shoelace round-off
    h = np.array(extent) / np.array(counts)
    exact = (grid.cell_index() + 0.5) * h
    exact.setflags(write=False)
    vol = np.full(grid.num_cells, float(np.prod(h)))
    vol.setflags(write=False)
    object.__setattr__(grid, "cell_centroids", exact)
    object.__setattr__(grid, "cell_volumes", vol)
    return grid


def perturb_interior_nodes(grid: Grid, amplitude: float = 0.3, seed: int = 0) -> Grid:
    """Randomly displace the strictly interior nodes of a 2-D grid.

    Each interior node moves by an independent uniform offset in
    ``[-amplitude*h, amplitude*h]`` per axis, ``h`` being the shortest edge of
    the input grid.  Boundary nodes keep their position.
    """
    if grid.dim != 2:
        raise InvalidArgumentError("node perturbation is only supported for 2-D grids")
    if not 0 <= amplitude < 0.5:
        raise InvalidArgumentError(f"amplitude must lie in [0, 0.5), got {amplitude}")
    nodes = np.array(grid.node_coords)
    if amplitude > 0:
        h = grid.face_areas.min()
        inner = np.flatnonzero(grid.interior_node_mask())
        rng = np.random.default_rng(seed)
        nodes[inner] += rng.uniform(-amplitude * h, amplitude * h, size=(len(inner), 2))
    return _build(grid.cell_counts, nodes, perturbed=grid.perturbed or amplitude > 0)


@dataclass(frozen=True, eq=False)
class CoarsePartition:
    """Uniform logical partition of a structured grid into coarse blocks.

    ``axis_bounds[a]`` holds the block boundaries along axis ``a`` (cell
    indices, length ``block_counts[a] + 1``); ``axis_centers[a]`` the per-axis
    index of each block's center cell.
    """

    grid_counts: tuple
    ratio: tuple
    block_counts: tuple
    block_of_cell: np.ndarray
    cells_of_block: tuple
    block_center: np.ndarray
    axis_bounds: tuple
    axis_centers: tuple

    @property
    def num_blocks(self) -> int:
        return len(self.cells_of_block)

    @property
    def num_cells(self) -> int:
        return len(self.block_of_cell)

    def block_index(self) -> np.ndarray:
        return np.stack(np.unravel_index(np.arange(self.num_blocks), self.block_counts, order="F"), axis=1)


def partition_uniform(grid: Grid, ratio) -> CoarsePartition:
    """Group ``ratio[a]`` consecutive cells per axis into one coarse block.

    When an axis count is not divisible by its ratio the trailing block holds
    the remainder.  A ratio larger than the axis count yields one block on
    that axis.
    """
    ratio = tuple(int(r) for r in np.broadcast_to(np.atleast_1d(ratio), (grid.dim,)))
    if min(ratio) < 1:
        raise InvalidArgumentError(f"coarsening ratio must be >= 1, got {ratio}")
    counts = grid.cell_counts
    nblocks = tuple(-(-n // r) for n, r in zip(counts, ratio))
    bounds, centers = [], []
    for n, r, nb in zip(counts, ratio, nblocks):
        b = np.minimum(np.arange(nb + 1) * r, n)
        bounds.append(b)
        # nearest cell to the block midpoint, ties to the lower index
        centers.append((b[:-1] + b[1:] - 1) // 2)
    cidx = grid.cell_index()
    bidx = [np.minimum(cidx[:, a] // ratio[a], nblocks[a] - 1) for a in range(grid.dim)]
    block_of_cell = _flat(bidx, nblocks)
    order = np.argsort(block_of_cell, kind="stable")
    splits = np.cumsum(np.bincount(block_of_cell, minlength=int(np.prod(nblocks))))[:-1]
    cells_of_block = tuple(np.split(order, splits))
    bgrid = np.stack(np.unravel_index(np.arange(int(np.prod(nblocks))), nblocks, order="F"), axis=1)
    block_center = _flat([centers[a][bgrid[:, a]] for a in range(grid.dim)], counts)
    _frozen(block_of_cell, block_center, *bounds, *centers, *cells_of_block)
    return CoarsePartition(tuple(counts), ratio, nblocks, block_of_cell, cells_of_block,
                           block_center, tuple(bounds), tuple(centers))


@dataclass(frozen=True, eq=False)
class SupportRegions:
    """Support region of every basis function.

    ``support[j]`` lists the fine cells where basis ``j`` may be nonzero and
    ``boundary[j]`` those cells of the support with a face neighbor outside
    it.  ``global_boundary`` is the union of all support boundaries as a
    boolean cell mask and ``indicator`` the sparse (num_cells x num_blocks)
    membership matrix of all supports.
    """

    support: tuple
    boundary: tuple
    global_boundary: np.ndarray
    indicator: sps.csr_matrix

    @property
    def num_blocks(self) -> int:
        return len(self.support)

    def covering(self, cell: int) -> np.ndarray:
        row = self.indicator.getrow(cell)
        return np.sort(row.indices)

    def interior(self, j: int) -> np.ndarray:
        return np.setdiff1d(self.support[j], self.boundary[j], assume_unique=True)


def build_support_regions(grid: Grid, partition: CoarsePartition) -> SupportRegions:
    """Box supports spanning the center cells of the neighboring blocks.

    Along each axis the support of a block runs from the center cell of the
    previous block to the center cell of the next one, both included,
    and is clamped to the domain on edge blocks.
    """
    if tuple(grid.cell_counts) != tuple(partition.grid_counts):
        raise InvalidArgumentError("partition was built for a different grid")
    counts = grid.cell_counts
    lo_hi = []
    for a, (n, c) in enumerate(zip(counts, partition.axis_centers)):
        lo = np.concatenate([[0], c[:-1]])
        hi = np.concatenate([c[1:], [n - 1]])
        lo_hi.append((lo, hi))

    support, boundary = [], []
    for bidx in partition.block_index():
        ranges, edge = [], []
        for a in range(grid.dim):
            lo, hi = lo_hi[a][0][bidx[a]], lo_hi[a][1][bidx[a]]
            ranges.append(np.arange(lo, hi + 1))
            edge.append((lo if lo > 0 else -1, hi if hi < counts[a] - 1 else -1))
        mesh = np.meshgrid(*ranges, indexing="ij")
        idx = [m.ravel(order="F") for m in mesh]
        cells = _flat(idx, counts)
        on_edge = np.zeros(len(cells), dtype=bool)
        for a in range(grid.dim):
            on_edge |= (idx[a] == edge[a][0]) | (idx[a] == edge[a][1])
        order = np.argsort(cells)
        cells, on_edge = cells[order], on_edge[order]
        bnd = cells[on_edge]
        _frozen(cells, bnd)
        support.append(cells)
        boundary.append(bnd)

    n, m = grid.num_cells, partition.num_blocks
    gmask = np.zeros(n, dtype=bool)
    for b in boundary:
        gmask[b] = True
    rows = np.concatenate(support)
    cols = np.repeat(np.arange(m), [len(s) for s in support])
    indicator = sps.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, m))
    _frozen(gmask)
    return SupportRegions(tuple(support), tuple(boundary), gmask, indicator)


__all__ = [
    "SIDES",
    "Grid",
    "CoarsePartition",
    "SupportRegions",
    "build_cartesian_grid",
    "perturb_interior_nodes",
    "partition_uniform",
    "build_support_regions",
]
