"""Cubic occupancy grid over a mesh and boundary/internal/external labels.

The grid covers the mesh's bounding box scaled by 1.001 about its center
(so cell faces avoid lying exactly in mesh faces), with cubic cells sized by
a named granularity preset along the longest axis.  A cell is *boundary*
when the surface clipped to it is non-empty, otherwise *internal* or
*external* by a ray-parity test at the cell center.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .clip import clip_surface_to_box, grid_cell_volumes, points_in_mesh
from .errors import NonWatertightInput
from .mesh import Aabb, TriangleMesh, aabb_of, triangle_normals, validate_watertight

logger = logging.getLogger(__name__)

#: Cells along the longest bounding-box axis for each named granularity.
GRANULARITY_CELLS = {"coarse": 8, "medium": 10, "fine": 12, "very_fine": 15}
#: Bounding-box safety scale so mesh faces never coincide with cell faces.
BBOX_SCALE = 1.001

_UNSET = -1


class CellClass(IntEnum):
    EXTERNAL = 0
    BOUNDARY = 1
    INTERNAL = 2


@dataclass(frozen=True)
class Cell:
    """Read-only view of one grid cell."""

    coord: tuple[int, int, int]
    classification: CellClass
    owner: int
    clipped_surface_vertex_count: int


@dataclass
class Grid:
    """Dense cubic grid; classification/owner/surface counts live in arrays."""

    origin: np.ndarray
    cell_size: float
    dims: tuple[int, int, int]
    classification: np.ndarray = field(default=None)  # int8, CellClass values
    owner: np.ndarray = field(default=None)           # int32, -1 = unowned
    surface_count: np.ndarray = field(default=None)   # int32

    def __post_init__(self) -> None:
        self.origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
        self.dims = tuple(int(d) for d in self.dims)
        if self.classification is None:
            self.classification = np.full(self.dims, _UNSET, dtype=np.int8)
        if self.owner is None:
            self.owner = np.full(self.dims, -1, dtype=np.int32)
        if self.surface_count is None:
            self.surface_count = np.zeros(self.dims, dtype=np.int32)

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.dims))

    def cell(self, i: int, j: int, k: int) -> Cell:
        return Cell((i, j, k), CellClass(int(self.classification[i, j, k])),
                    int(self.owner[i, j, k]), int(self.surface_count[i, j, k]))

    def cell_box(self, i: int, j: int, k: int) -> Aabb:
        lo = self.origin + np.array([i, j, k], dtype=np.float64) * self.cell_size
        return Aabb(lo, lo + self.cell_size)

    def box_of_range(self, lo, hi) -> Aabb:
        """Physical box spanned by cells lo..hi inclusive."""
        lo = np.asarray(lo, dtype=np.float64)
        hi = np.asarray(hi, dtype=np.float64)
        return Aabb(self.origin + lo * self.cell_size,
                    self.origin + (hi + 1.0) * self.cell_size)

    def cell_center(self, i: int, j: int, k: int) -> np.ndarray:
        return self.origin + (np.array([i, j, k], dtype=np.float64) + 0.5) * self.cell_size

    def centers(self) -> np.ndarray:
        """(n, 3) centers for all cells in C-order."""
        nx, ny, nz = self.dims
        idx = np.stack(np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz),
                                   indexing="ij"), axis=-1).reshape(-1, 3)
        return self.origin + (idx + 0.5) * self.cell_size


def build_grid(mesh: TriangleMesh, granularity: str = "very_fine") -> Grid:
    """Lay a cubic grid over the scaled bounding box of a mesh."""
    if granularity not in GRANULARITY_CELLS:
        raise ValueError(f"unknown granularity {granularity!r}; "
                         f"expected one of {sorted(GRANULARITY_CELLS)}")
    box = aabb_of(mesh).scaled(BBOX_SCALE)
    extent = box.extent
    longest = float(extent.max())
    if longest <= 0:
        raise ValueError("mesh bounding box has no extent")
    n_longest = GRANULARITY_CELLS[granularity]
    cell_size = longest / n_longest
    # The epsilon guards against ceil(5.0000000001) = 6 on exact divisions.
    dims = tuple(int(np.ceil(e / cell_size - 1e-9)) if e > 0 else 1 for e in extent)
    dims = tuple(max(d, 1) for d in dims)
    return Grid(origin=box.min, cell_size=cell_size, dims=dims)


def _triangle_cell_bins(mesh: TriangleMesh, grid: Grid) -> dict[tuple[int, int, int], list[int]]:
    """Map each cell to the triangles whose bounding boxes overlap it."""
    bins: dict[tuple[int, int, int], list[int]] = {}
    v, t = mesh.vertices, mesh.triangles
    if len(t) == 0:
        return bins
    corners = v[t]  # (m, 3, 3)
    tri_lo = corners.min(axis=1)
    tri_hi = corners.max(axis=1)
    lo_idx = np.floor((tri_lo - grid.origin) / grid.cell_size - 1e-12).astype(np.int64)
    hi_idx = np.floor((tri_hi - grid.origin) / grid.cell_size + 1e-12).astype(np.int64)
    lo_idx = np.clip(lo_idx, 0, np.array(grid.dims) - 1)
    hi_idx = np.clip(hi_idx, 0, np.array(grid.dims) - 1)
    for ti in range(len(t)):
        for i in range(lo_idx[ti, 0], hi_idx[ti, 0] + 1):
            for j in range(lo_idx[ti, 1], hi_idx[ti, 1] + 1):
                for k in range(lo_idx[ti, 2], hi_idx[ti, 2] + 1):
                    bins.setdefault((i, j, k), []).append(ti)
    return bins


def classify_cells(grid: Grid, mesh: TriangleMesh) -> Grid:
    """Label every cell boundary/internal/external, in place.

    Boundary means the clipped surface inside the cell has vertices; the
    remaining cells are resolved by ray parity at their centers, with a
    3-ray majority vote when the mesh is not closed.
    """
    _classify_and_measure(grid, mesh, want_measures=False)
    return grid


@dataclass
class CellMeasures:
    """Per-cell quantities the growth objective consumes."""

    volume: np.ndarray        # solid volume inside each cell
    area: np.ndarray          # cap-free clipped surface area
    overhang: np.ndarray      # (6, nx, ny, nz): per down-direction overhang area
    approximate_volume: bool  # True when a parity fallback estimated volumes


#: Growth direction order: +x, -x, +y, -y, +z, -z.
DIRECTIONS = np.array(
    [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]],
    dtype=np.int64,
)


def measure_cells(grid: Grid, mesh: TriangleMesh,
                  overhang_tolerance_deg: float = 1.0) -> CellMeasures:
    """Compute per-cell solid volume, surface area, and overhang areas."""
    return _classify_and_measure(grid, mesh, want_measures=True,
                                 overhang_tolerance_deg=overhang_tolerance_deg)


def _classify_and_measure(grid: Grid, mesh: TriangleMesh, want_measures: bool,
                          overhang_tolerance_deg: float = 1.0):
    bins = _triangle_cell_bins(mesh, grid)
    nx, ny, nz = grid.dims
    area = np.zeros(grid.dims) if want_measures else None
    over = np.zeros((6,) + grid.dims) if want_measures else None
    normals = triangle_normals(mesh) if want_measures else None
    sin_tol = np.sin(np.radians(overhang_tolerance_deg))

    classification = np.full(grid.dims, _UNSET, dtype=np.int8)
    for (i, j, k), tri_ids in bins.items():
        pieces, sources = clip_surface_to_box(mesh, grid.cell_box(i, j, k), tri_ids)
        if len(pieces) == 0:
            continue
        flat = pieces.reshape(-1, 3)
        keys = np.round(flat / 1e-9).astype(np.int64)
        count = len(np.unique(keys, axis=0))
        if count == 0:
            continue
        grid.surface_count[i, j, k] = count
        classification[i, j, k] = CellClass.BOUNDARY
        if want_measures:
            cross = np.cross(pieces[:, 1] - pieces[:, 0], pieces[:, 2] - pieces[:, 0])
            piece_area = 0.5 * np.linalg.norm(cross, axis=1)
            area[i, j, k] = float(piece_area.sum())
            piece_n = normals[sources]
            for d in range(6):
                mask = piece_n @ DIRECTIONS[d] > sin_tol
                over[d, i, j, k] = float(piece_area[mask].sum())

    # Cells without surface: parity test at centers.
    undecided = classification == _UNSET
    if undecided.any():
        watertight = validate_watertight(mesh).is_watertight
        centers = grid.centers().reshape(nx, ny, nz, 3)[undecided]
        inside = points_in_mesh(mesh, centers, votes=1 if watertight else 3)
        filled = np.where(inside, np.int8(CellClass.INTERNAL), np.int8(CellClass.EXTERNAL))
        classification[undecided] = filled
    grid.classification = classification

    if not want_measures:
        return None

    try:
        volume = grid_cell_volumes(mesh, grid.origin, grid.cell_size, grid.dims)
        approx = False
    except NonWatertightInput:
        # Open surface: estimate as full interior cells plus half-full
        # boundary cells; only relative scoring consumes these anyway.
        logger.warning("open mesh: per-cell volumes are parity estimates")
        cs3 = grid.cell_size ** 3
        volume = np.zeros(grid.dims)
        volume[classification == CellClass.INTERNAL] = cs3
        volume[classification == CellClass.BOUNDARY] = 0.5 * cs3
        approx = True
    return CellMeasures(volume, area, over, approx)


def dump_classification_csv(grid: Grid, path) -> None:
    """Voxel debug dump: one `x,y,z,class` row per cell."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "z", "class"])
        nx, ny, nz = grid.dims
        for i in range(nx):
            for j in range(ny):
                for k in range(nz):
                    writer.writerow(
                        [i, j, k, CellClass(int(grid.classification[i, j, k])).name.lower()]
                    )
