"""Permeability tensor fields (millidarcy)."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, InvalidArgumentError, SpeFormatError

SPE10_SHAPE = (60, 220, 85)


@dataclass(frozen=True, eq=False)
class TensorField:
    """Per-cell symmetric permeability tensors, shape (num_cells, dim, dim).

    A homogeneous field may be stored with a single row; ``for_cells``
    broadcasts it to a grid.
    """

    perm: np.ndarray
    homogeneous: bool = False

    def __post_init__(self):
        perm = np.array(self.perm, dtype=float)
        if perm.ndim != 3 or perm.shape[1] != perm.shape[2] or perm.shape[1] not in (2, 3):
            raise InvalidArgumentError(f"tensor array must have shape (n, d, d), got {perm.shape}")
        if not np.allclose(perm, perm.transpose(0, 2, 1), rtol=1e-12, atol=0):
            raise DataError("permeability tensors must be symmetric")
        diag = np.diagonal(perm, axis1=1, axis2=2)
        bad = np.flatnonzero(~np.all(diag > 0, axis=1) | ~(np.linalg.det(perm) > 0))
        if len(bad):
            raise DataError(f"tensor of cell {bad[0]} is not positive definite")
        perm.setflags(write=False)
        object.__setattr__(self, "perm", perm)

    @property
    def dim(self) -> int:
        return self.perm.shape[1]

    @property
    def num_cells(self) -> int:
        return self.perm.shape[0]

    def for_cells(self, n: int) -> np.ndarray:
        if self.num_cells == n:
            return self.perm
        if self.num_cells == 1:
            return np.broadcast_to(self.perm, (n, self.dim, self.dim))
        raise InvalidArgumentError(f"field has {self.num_cells} cells, grid has {n}")

    def component(self, a: int, b: int | None = None) -> np.ndarray:
        return self.perm[:, a, a if b is None else b]


def uniform_tensor(tensor, num_cells: int = 1) -> TensorField:
    tensor = np.asarray(tensor, dtype=float)
    return TensorField(np.broadcast_to(tensor, (num_cells,) + tensor.shape).copy(), homogeneous=True)


def rotated_tensor(theta: float, k1: float, k2: float, num_cells: int = 1) -> TensorField:
    """Homogeneous 2-D tensor ``R(theta) diag(k1, k2) R(theta)^T``, theta in degrees."""
    if k1 <= 0 or k2 <= 0:
        raise InvalidArgumentError(f"principal permeabilities must be positive, got {k1}, {k2}")
    t = np.deg2rad(theta)
    c, s = np.cos(t), np.sin(t)
    kxx = k1 * c * c + k2 * s * s
    kyy = k1 * s * s + k2 * c * c
    kxy = (k1 - k2) * c * s
    return uniform_tensor([[kxx, kxy], [kxy, kyy]], num_cells)


def diagonal_field(components) -> TensorField:
    """Field of diagonal tensors from per-axis arrays, e.g. ``(kx, ky)``."""
    comps = np.stack([np.asarray(c, dtype=float) for c in components], axis=1)
    n, d = comps.shape
    perm = np.zeros((n, d, d))
    perm[:, np.arange(d), np.arange(d)] = comps
    return TensorField(perm)


def lognormal_field(grid, seed: int = 1, mu_log: float = 0.0, sigma_log: float = 1.0) -> TensorField:
    """Uncorrelated isotropic field ``k = exp(mu_log + sigma_log * z)``."""
    if sigma_log < 0:
        raise InvalidArgumentError("sigma_log must be non-negative")
    z = np.random.default_rng(seed).standard_normal(grid.num_cells)
    k = np.exp(mu_log + sigma_log * z)
    field = diagonal_field([k] * grid.dim)
    if sigma_log == 0:
        object.__setattr__(field, "homogeneous", True)
    return field


def _layer_range(layers, nz):
    if isinstance(layers, (int, np.integer)):
        first = last = int(layers)
    else:
        first, last = (int(v) for v in layers)
    if not 1 <= first <= last <= nz:
        raise InvalidArgumentError(f"layer range ({first}, {last}) outside 1..{nz}")
    return first, last


def read_spe10_components(path, shape=SPE10_SHAPE) -> np.ndarray:
    """Parse a raw permeability file into an array of shape (3, nz, ny, nx).

    The file holds whitespace separated values: every kx, then every ky,
    then every kz, each block ordered with x fastest, then y, then z.
    """
    nx, ny, nz = shape
    expected = 3 * nx * ny * nz
    text = Path(path).read_text()
    values = np.array(text.split(), dtype=float)
    if values.size != expected:
        raise SpeFormatError(expected, values.size, path)
    bad = np.flatnonzero(~(values > 0))
    if len(bad):
        comp, cell = divmod(int(bad[0]), nx * ny * nz)
        raise DataError(f"non-positive permeability {values[bad[0]]} for component {'xyz'[comp]} of cell {cell}")
    return values.reshape(3, nz, ny, nx)


def read_spe10(path, layers=85, shape=SPE10_SHAPE, isotropic: bool = False) -> TensorField:
    """Diagonal field over the selected 1-based layer range.

    A single layer gives a 2-D field built from (kx, ky); several layers a
    3-D field from (kx, ky, kz).  With ``isotropic`` every diagonal entry is
    kx.
    """
    first, last = _layer_range(layers, shape[2])
    comps = read_spe10_components(path, shape)[:, first - 1:last]
    flat = comps.reshape(3, -1)
    if first == last:
        cols = [flat[0], flat[0]] if isotropic else [flat[0], flat[1]]
    else:
        cols = [flat[0]] * 3 if isotropic else [flat[0], flat[1], flat[2]]
    return diagonal_field(cols)


def write_spe10(path, kx, ky, kz) -> None:
    """Write three equally sized component arrays in the raw SPE10 layout."""
    with open(path, "w") as fh:
        for comp in (kx, ky, kz):
            vals = np.asarray(comp, dtype=float).ravel()
            for start in range(0, len(vals), 6):
                fh.write(" ".join(repr(float(v)) for v in vals[start:start + 6]) + "\n")


__all__ = [
    "SPE10_SHAPE",
    "TensorField",
    "uniform_tensor",
    "rotated_tensor",
    "diagonal_field",
    "lognormal_field",
    "read_spe10",
    "read_spe10_components",
    "write_spe10",
]
