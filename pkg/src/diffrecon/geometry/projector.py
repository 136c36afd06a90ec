"""Ray-driven Siddon projector stored as a sparse system matrix.

Each sinogram bin is one ray through the bin centre. Its row of the system
matrix holds the intersection length (mm) of that ray with every voxel it
crosses, so back projection is the exact transpose of forward projection.
"""

import logging
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from diffrecon.errors import ConfigurationError
from diffrecon.geometry.models import GridSpec, Image, ProjSpec, Sinogram


logger = logging.getLogger(__name__)

# Direction components below this are treated as axis-parallel.
_PARALLEL_EPS = 1e-12


# =============================================================================
# Ray tracing
# =============================================================================


def _plane_crossings(p0: float, d: float, lo: float, hi: float, edges: np.ndarray):
    """Ray parameters where the ray crosses each plane, and its slab interval.

    Returns (crossings, tau_enter, tau_exit); an empty interval means the ray
    misses the slab entirely.
    """
    if abs(d) < _PARALLEL_EPS:
        if lo <= p0 <= hi:
            return np.empty(0), -np.inf, np.inf
        return np.empty(0), np.inf, -np.inf
    taus = (edges - p0) / d
    return taus, min(taus[0], taus[-1]), max(taus[0], taus[-1])


def trace_ray(
    grid: GridSpec, p0: tuple[float, float], direction: tuple[float, float]
) -> tuple[np.ndarray, np.ndarray]:
    """
    Intersect one infinite line with the image grid.

    Args:
        grid: Image grid, centred on the origin
        p0: A point on the line (x, y) in mm
        direction: Unit direction of the line

    Returns:
        (flat voxel indices, intersection lengths in mm) for every crossed voxel
    """
    half_x = grid.nx * grid.voxel_size / 2.0
    half_y = grid.ny * grid.voxel_size / 2.0
    x_edges = -half_x + grid.voxel_size * np.arange(grid.nx + 1)
    y_edges = -half_y + grid.voxel_size * np.arange(grid.ny + 1)

    tx, tx_in, tx_out = _plane_crossings(p0[0], direction[0], -half_x, half_x, x_edges)
    ty, ty_in, ty_out = _plane_crossings(p0[1], direction[1], -half_y, half_y, y_edges)

    tau_in = max(tx_in, ty_in)
    tau_out = min(tx_out, ty_out)
    if not tau_in < tau_out:
        return np.empty(0, dtype=np.int64), np.empty(0)

    taus = np.concatenate(([tau_in, tau_out], tx, ty))
    taus = np.unique(taus[(taus >= tau_in) & (taus <= tau_out)])
    lengths = np.diff(taus)
    mids = 0.5 * (taus[:-1] + taus[1:])

    cols = np.floor((p0[0] + mids * direction[0] + half_x) / grid.voxel_size).astype(np.int64)
    rows = np.floor((p0[1] + mids * direction[1] + half_y) / grid.voxel_size).astype(np.int64)
    keep = (
        (lengths > 0)
        & (cols >= 0)
        & (cols < grid.nx)
        & (rows >= 0)
        & (rows < grid.ny)
    )
    return rows[keep] * grid.nx + cols[keep], lengths[keep]


def build_system_matrix(grid: GridSpec, proj: ProjSpec) -> sp.csr_matrix:
    """Assemble the (M, N) intersection-length matrix for a parallel-beam geometry."""
    row_idx: list[np.ndarray] = []
    col_idx: list[np.ndarray] = []
    weights: list[np.ndarray] = []

    offsets = proj.radial_offsets()
    for a, theta in enumerate(proj.angles()):
        normal = (np.cos(theta), np.sin(theta))
        direction = (-np.sin(theta), np.cos(theta))
        for b, s in enumerate(offsets):
            voxels, lengths = trace_ray(grid, (s * normal[0], s * normal[1]), direction)
            if voxels.size:
                row_idx.append(np.full(voxels.size, a * proj.n_bins + b, dtype=np.int64))
                col_idx.append(voxels)
                weights.append(lengths)

    shape = (proj.n_bins_total, grid.n_voxels)
    if not weights:
        logger.warning("No ray intersects the image grid; system matrix is empty")
        return sp.csr_matrix(shape)

    matrix = sp.coo_matrix(
        (np.concatenate(weights), (np.concatenate(row_idx), np.concatenate(col_idx))),
        shape=shape,
    ).tocsr()
    logger.debug(
        f"System matrix {shape[0]}x{shape[1]} with {matrix.nnz} non-zeros "
        f"({grid.nx}x{grid.ny} grid, {proj.n_angles} angles x {proj.n_bins} bins)"
    )
    return matrix


# =============================================================================
# Projector
# =============================================================================


class Projector:
    """Forward/back projection pair for one fixed (grid, layout) session geometry."""

    def __init__(self, grid: GridSpec, proj: ProjSpec):
        self.grid = grid
        self.proj = proj
        self.matrix = build_system_matrix(grid, proj)
        self._matrix_t = self.matrix.T.tocsr()
        self._sensitivity: np.ndarray | None = None

    def forward_array(self, x: np.ndarray) -> np.ndarray:
        """A x for an image array shaped (ny, nx)."""
        return (self.matrix @ x.reshape(-1)).reshape(self.proj.shape)

    def back_array(self, s: np.ndarray) -> np.ndarray:
        """A^T s for a sinogram array shaped (n_angles, n_bins)."""
        return (self._matrix_t @ s.reshape(-1)).reshape(self.grid.shape)

    def sensitivity_array(self) -> np.ndarray:
        if self._sensitivity is None:
            self._sensitivity = self.back_array(np.ones(self.proj.shape))
        return self._sensitivity

    def forward(self, img: Image) -> Sinogram:
        if img.grid != self.grid:
            raise ConfigurationError(
                f"Image grid {img.grid} does not match session grid {self.grid}"
            )
        return Sinogram(self.proj, self.forward_array(img.values))

    def back(self, sino: Sinogram) -> Image:
        if sino.proj != self.proj:
            raise ConfigurationError(
                f"Sinogram layout {sino.proj} does not match session layout {self.proj}"
            )
        return Image(self.grid, self.back_array(sino.values))

    def sensitivity(self) -> Image:
        return Image(self.grid, self.sensitivity_array().copy())


@lru_cache(maxsize=8)
def get_projector(grid: GridSpec, proj: ProjSpec) -> Projector:
    """Projector for a geometry, built once per process."""
    return Projector(grid, proj)


def forward_project(img: Image, proj: ProjSpec) -> Sinogram:
    """Ax for the image's grid and the given layout."""
    return get_projector(img.grid, proj).forward(img)


def back_project(sino: Sinogram, grid: GridSpec) -> Image:
    """A^T s, the exact adjoint of `forward_project`."""
    return get_projector(grid, sino.proj).back(sino)


def sensitivity(proj: ProjSpec, grid: GridSpec) -> Image:
    """S_j = sum_i A_ij, the back projection of an all-ones sinogram."""
    return get_projector(grid, proj).sensitivity()
