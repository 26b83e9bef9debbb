import numpy as np
import pytest

from monoms import build_cartesian_grid, lognormal_field, perturb_interior_nodes


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def rough_grid():
    """Small perturbed quadrilateral grid."""
    return perturb_interior_nodes(build_cartesian_grid((3.0, 2.0), (12, 8)), 0.3, 3)


@pytest.fixture
def lognormal_case():
    grid = build_cartesian_grid((300.0, 400.0), (15, 20))
    return grid, lognormal_field(grid, seed=4, sigma_log=1.0)


def polygon_area_centroid(xy):
    """Shoelace area and centroid of a counterclockwise polygon."""
    x, y = xy[:, 0], xy[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    area = cross.sum() / 2
    cx = ((x + xn) * cross).sum() / (6 * area)
    cy = ((y + yn) * cross).sum() / (6 * area)
    return area, np.array([cx, cy])
