import numpy as np
import pytest
import scipy.sparse as sps
from scipy.sparse.csgraph import connected_components

from conftest import polygon_area_centroid
from monoms import (build_cartesian_grid, build_support_regions, partition_uniform,
                    perturb_interior_nodes)
from monoms.errors import InvalidArgumentError


def test_unit_square_single_cell():
    g = build_cartesian_grid((1.0, 1.0), (1, 1))
    assert g.num_cells == 1
    assert len(g.boundary_faces) == 4
    assert g.cell_volumes[0] == pytest.approx(1.0, abs=1e-15)
    np.testing.assert_allclose(g.cell_centroids[0], [0.5, 0.5])


def test_cell_sizes_of_anisotropic_box():
    g = build_cartesian_grid((20.0, 150.0), (100, 100))
    assert g.num_cells == 10_000
    np.testing.assert_allclose(g.cell_volumes, 0.2 * 1.5, rtol=1e-12)
    x = np.unique(np.round(g.node_coords[:, 0], 12))
    np.testing.assert_allclose(np.diff(x), 0.2, rtol=1e-9)


def test_two_cell_row():
    g = build_cartesian_grid((2.0, 1.0), (2, 1))
    inner = g.interior_faces
    assert len(inner) == 1
    assert g.face_areas[inner[0]] == pytest.approx(1.0)
    np.testing.assert_allclose(g.cell_centroids[:, 0], [0.5, 1.5])


@pytest.mark.parametrize("extent,counts", [((0.0, 1.0), (2, 2)), ((1.0, 1.0), (0, 3)), ((1.0,), (3,))])
def test_invalid_boxes(extent, counts):
    with pytest.raises(InvalidArgumentError):
        build_cartesian_grid(extent, counts)


@pytest.mark.parametrize("perturb", [False, True])
def test_face_orientation_and_closure(perturb):
    g = build_cartesian_grid((2.0, 3.0), (7, 5))
    if perturb:
        g = perturb_interior_nodes(g, 0.3, 11)
    own, nbr = g.face_cells[:, 0], g.face_cells[:, 1]
    inner = nbr >= 0
    d = g.cell_centroids[nbr[inner]] - g.cell_centroids[own[inner]]
    assert np.all(np.einsum("ij,ij->i", g.face_normals[inner], d) > 0)
    out = g.face_centroids[~inner] - g.cell_centroids[own[~inner]]
    assert np.all(np.einsum("ij,ij->i", g.face_normals[~inner], out) > 0)
    # outward area vectors of a closed cell sum to zero
    total = np.zeros((g.num_cells, 2))
    np.add.at(total, own, g.face_normals)
    np.add.at(total, nbr[inner], -g.face_normals[inner])
    assert np.abs(total).max() < 1e-12


def test_3d_box_geometry():
    g = build_cartesian_grid((1.0, 2.0, 3.0), (2, 3, 4))
    assert g.num_cells == 24
    assert g.cell_volumes.sum() == pytest.approx(6.0)
    assert len(g.boundary_faces) == 2 * (3 * 4 + 2 * 4 + 2 * 3)
    assert len(g.side_faces("zmax")) == 6


def test_perturbed_geometry_against_shoelace(rough_grid):
    g = rough_grid
    assert g.cell_volumes.sum() == pytest.approx(6.0, rel=1e-12)
    for c in range(0, g.num_cells, 7):
        area, centroid = polygon_area_centroid(g.node_coords[g.cell_nodes[c]])
        assert g.cell_volumes[c] == pytest.approx(area, rel=1e-12)
        np.testing.assert_allclose(g.cell_centroids[c], centroid, rtol=1e-12)


def test_perturbation_moves_interior_nodes_only():
    base = build_cartesian_grid((1.0, 1.0), (4, 4))
    g = perturb_interior_nodes(base, 0.3, 7)
    moved = np.any(g.node_coords != base.node_coords, axis=1)
    assert moved.sum() == 9
    assert np.all(base.interior_node_mask()[moved])
    h = 0.25
    assert np.abs(g.node_coords - base.node_coords).max() <= 0.3 * h + 1e-15


def test_perturbation_is_deterministic_and_zero_amplitude_is_identity():
    base = build_cartesian_grid((1.0, 1.0), (6, 5))
    a = perturb_interior_nodes(base, 0.2, 3)
    b = perturb_interior_nodes(base, 0.2, 3)
    c = perturb_interior_nodes(base, 0.2, 4)
    assert np.array_equal(a.node_coords, b.node_coords)
    assert not np.array_equal(a.node_coords, c.node_coords)
    assert np.array_equal(perturb_interior_nodes(base, 0.0, 3).node_coords, base.node_coords)


@pytest.mark.parametrize("amplitude", [-0.1, 0.5, 0.7])
def test_perturbation_amplitude_range(amplitude):
    with pytest.raises(InvalidArgumentError):
        perturb_interior_nodes(build_cartesian_grid((1.0, 1.0), (3, 3)), amplitude, 0)


def test_perturbation_rejects_3d():
    with pytest.raises(InvalidArgumentError):
        perturb_interior_nodes(build_cartesian_grid((1.0, 1.0, 1.0), (2, 2, 2)), 0.1, 0)


# --- coarse partition ------------------------------------------------------

@pytest.mark.parametrize("ratio,blocks", [((5, 10), 12 * 22), ((3, 5), 20 * 44), ((7, 15), 9 * 15)])
def test_block_counts(ratio, blocks):
    g = build_cartesian_grid((1200.0, 2200.0), (60, 220))
    assert partition_uniform(g, ratio).num_blocks == blocks


def test_partition_covers_disjointly_with_trailing_remainder():
    g = build_cartesian_grid((1.0, 1.0), (60, 22))
    part = partition_uniform(g, (7, 5))
    cells = np.concatenate(part.cells_of_block)
    assert np.array_equal(np.sort(cells), np.arange(g.num_cells))
    sizes = sorted({len(c) for c in part.cells_of_block})
    # 60 = 8*7 + 4 and 22 = 4*5 + 2
    assert sizes == sorted([4 * 2, 4 * 5, 7 * 2, 7 * 5])
    for j, cells_j in enumerate(part.cells_of_block):
        assert np.all(part.block_of_cell[cells_j] == j)


def test_ratio_at_least_count_gives_single_block():
    g = build_cartesian_grid((1.0, 1.0), (4, 3))
    assert partition_uniform(g, (4, 3)).num_blocks == 1
    assert partition_uniform(g, (9, 9)).num_blocks == 1


def test_invalid_ratio():
    with pytest.raises(InvalidArgumentError):
        partition_uniform(build_cartesian_grid((1.0, 1.0), (4, 4)), (0, 2))


def test_blocks_are_connected():
    g = build_cartesian_grid((1.0, 1.0), (13, 11))
    part = partition_uniform(g, (4, 3))
    adj = sps.csr_matrix(g.adjacency())
    for cells in part.cells_of_block:
        sub = adj[cells][:, cells]
        assert connected_components(sub, directed=False)[0] == 1


def test_block_centers_lie_in_their_blocks():
    g = build_cartesian_grid((1.0, 1.0, 1.0), (9, 8, 5))
    part = partition_uniform(g, (3, 4, 2))
    assert np.array_equal(part.block_of_cell[part.block_center], np.arange(part.num_blocks))


# --- supports --------------------------------------------------------------

def test_single_block_support_is_everything():
    g = build_cartesian_grid((1.0, 1.0), (6, 4))
    sup = build_support_regions(g, partition_uniform(g, (6, 4)))
    assert np.array_equal(sup.support[0], np.arange(g.num_cells))
    assert len(sup.boundary[0]) == 0
    assert not sup.global_boundary.any()


def test_one_dimensional_support_intervals():
    # 9 cells in a row, 3 blocks of 3, centers at 0-based cells 1, 4, 7
    g = build_cartesian_grid((9.0, 1.0), (9, 1))
    part = partition_uniform(g, (3, 1))
    assert np.array_equal(part.block_center, [1, 4, 7])
    sup = build_support_regions(g, part)
    assert np.array_equal(sup.support[1], np.arange(1, 8))
    assert np.array_equal(sup.support[0], np.arange(0, 5))
    assert np.array_equal(sup.support[2], np.arange(4, 9))
    assert np.array_equal(sup.boundary[1], [1, 7])
    assert np.array_equal(sup.boundary[0], [4])


@pytest.mark.parametrize("counts,ratio", [((12, 12), (3, 3)), ((13, 10), (4, 3)), ((9, 8, 6), (3, 4, 3))])
def test_support_coverage_bounds(counts, ratio):
    g = build_cartesian_grid((1.0,) * len(counts), counts)
    part = partition_uniform(g, ratio)
    sup = build_support_regions(g, part)
    dim = g.dim
    cover = np.asarray(sup.indicator.sum(axis=1)).ravel()
    assert cover.min() >= 1
    # a center cell is shared by the supports of its own and both neighboring blocks
    assert cover.max() <= 3 ** dim
    idx = g.cell_index()
    off_center = np.ones(g.num_cells, dtype=bool)
    for a in range(dim):
        off_center &= ~np.isin(idx[:, a], part.axis_centers[a])
    assert cover[off_center].max() <= 2 ** dim
    for j in range(part.num_blocks):
        assert np.all(np.isin(part.cells_of_block[j], sup.support[j]))
        assert part.block_center[j] not in sup.boundary[j]


def test_support_boundary_cells_touch_the_outside():
    g = build_cartesian_grid((1.0, 1.0), (10, 9))
    sup = build_support_regions(g, partition_uniform(g, (3, 3)))
    adj = sps.csr_matrix(g.adjacency())
    for j in range(sup.num_blocks):
        inside = np.zeros(g.num_cells, dtype=bool)
        inside[sup.support[j]] = True
        leaks = np.asarray(adj[:, ~inside].sum(axis=1)).ravel() > 0
        expected = np.flatnonzero(inside & leaks)
        assert np.array_equal(np.sort(sup.boundary[j]), expected)
        assert np.array_equal(sup.interior(j), np.setdiff1d(sup.support[j], expected))
