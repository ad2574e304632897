"""Voxel regions, frustum coverage and per-voxel direction histograms.

Camera convention: rotations are camera-to-world and the camera looks down
its local -z axis with +y up (the NeRF / OpenGL layout used by
``transforms.json``).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .model import SCENE_HALF_EXTENT, CameraView, Trajectory


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    lo: np.ndarray
    hi: np.ndarray
    resolution: tuple
    centers: np.ndarray

    def __len__(self):
        return self.centers.shape[0]


@dataclass(frozen=True)
class FrustumParams:
    fov_y: float = math.radians(90.0)
    aspect: float = 1.0
    near: float = 0.05
    far: float = 20.0

    def __post_init__(self):
        if not 0.0 < self.fov_y < math.pi:
            raise ValueError(f"fov_y must lie in (0, pi), got {self.fov_y}")
        if not self.aspect > 0:
            raise ValueError("aspect must be positive")
        if not 0.0 < self.near < self.far:
            raise ValueError(f"need 0 < near < far, got near={self.near}, far={self.far}")


@dataclass(frozen=True, eq=False)
class AngularBins:
    directions: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.directions, dtype=np.float64)
        if d.ndim != 2 or d.shape[1] != 3 or d.shape[0] < 2:
            raise ValueError("need at least two 3D bin directions")
        if np.abs(np.linalg.norm(d, axis=1) - 1.0).max() > 1e-9:
            raise ValueError("bin directions must be unit vectors")
        object.__setattr__(self, "directions", d)

    def __len__(self):
        return self.directions.shape[0]

    @classmethod
    def axes(cls):
        """Six bins: +x, -x, +y, -y, +z, -z."""
        return cls(np.array([[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]], float))

    @classmethod
    def lattice26(cls):
        """The 26 non-zero directions of the 3x3x3 lattice."""
        dirs = [d for d in itertools.product((-1, 0, 1), repeat=3) if any(d)]
        dirs = np.array(dirs, dtype=np.float64)
        return cls(dirs / np.linalg.norm(dirs, axis=1, keepdims=True))


def build_grid(traj: Trajectory, resolution: int, half_extent: float = SCENE_HALF_EXTENT) -> VoxelGrid:
    """Cubic grid over [-half_extent, half_extent]^3 with ``resolution`` cells
    per axis; region centers sit at the cell midpoints."""
    if int(resolution) != resolution or resolution < 1:
        raise ValueError(f"grid resolution must be an integer >= 1, got {resolution}")
    resolution = int(resolution)
    if traj is not None and np.abs(traj.positions).max() > half_extent + 1e-9:
        raise ValueError("trajectory positions exceed the grid box; normalize positions first")
    step = 2.0 * half_extent / resolution
    axis = -half_extent + (np.arange(resolution) + 0.5) * step
    gx, gy, gz = np.meshgrid(axis, axis, axis, indexing="ij")
    centers = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)
    lo = np.full(3, -half_extent)
    return VoxelGrid(lo, -lo, (resolution,) * 3, centers)


def _camera_coords(position, rotation, points):
    # world -> camera: R^T (p - t), written row-wise
    return (np.asarray(points, dtype=np.float64) - position) @ rotation


def covers_mask(position, rotation, params: FrustumParams, points) -> np.ndarray:
    """Vectorized frustum test for many points against one camera."""
    pc = _camera_coords(position, rotation, np.atleast_2d(points))
    depth = -pc[:, 2]
    tan_y = math.tan(params.fov_y / 2.0)
    tan_x = tan_y * params.aspect
    return (
        (depth >= params.near)
        & (depth <= params.far)
        & (np.abs(pc[:, 1]) <= depth * tan_y)
        & (np.abs(pc[:, 0]) <= depth * tan_x)
    )


def frustum_covers(view: CameraView, params: FrustumParams, point) -> bool:
    return bool(covers_mask(view.position, view.rotation, params, point)[0])


def direction_bin(view_position, voxel_center, bins: AngularBins) -> int:
    """Index of the bin direction closest to the voxel-to-camera direction;
    ties go to the lowest index."""
    d = np.asarray(view_position, dtype=np.float64) - np.asarray(voxel_center, dtype=np.float64)
    norm = np.linalg.norm(d)
    if norm == 0.0:
        raise ValueError("camera position coincides with the voxel center")
    return int(np.argmax(bins.directions @ (d / norm)))


def direction_bins(position, centers, bins: AngularBins) -> np.ndarray:
    d = np.asarray(position, dtype=np.float64) - centers
    norm = np.linalg.norm(d, axis=1, keepdims=True)
    # coincident pairs get bin 0; callers only look at covered voxels, which
    # are at depth >= near > 0
    norm[norm == 0.0] = 1.0
    return np.argmax((d / norm) @ bins.directions.T, axis=1)


def total_variation(hist, count: int, bins: AngularBins | int) -> float:
    """Half the L1 distance between the normalized histogram and the uniform
    distribution over the bins. An empty histogram scores 1."""
    nbins = bins if isinstance(bins, int) else len(bins)
    if count == 0:
        return 1.0
    p = np.asarray(hist, dtype=np.float64) / count
    return float(0.5 * np.abs(p - 1.0 / nbins).sum())


def total_variation_rows(hist: np.ndarray, count: np.ndarray) -> np.ndarray:
    """Row-wise total variation for a (V, B) histogram block."""
    nbins = hist.shape[1]
    out = np.ones(hist.shape[0])
    nz = count > 0
    if nz.any():
        p = hist[nz] / count[nz, None]
        out[nz] = 0.5 * np.abs(p - 1.0 / nbins).sum(axis=1)
    return out


@dataclass(frozen=True, eq=False)
class CoverageModel:
    """Static per-view coverage data: which voxels each view sees and from
    which direction bin."""

    grid: VoxelGrid
    bins: AngularBins
    params: FrustumParams
    covers: np.ndarray  # (N, V) bool
    bin_index: np.ndarray  # (N, V) int, meaningful where covers is True

    @property
    def n(self) -> int:
        return self.covers.shape[0]


def build_coverage(traj: Trajectory, grid: VoxelGrid, params: FrustumParams, bins: AngularBins) -> CoverageModel:
    n, v = len(traj), len(grid)
    covers = np.zeros((n, v), dtype=bool)
    idx = np.zeros((n, v), dtype=np.int16)
    for i in range(n):
        pos, rot = traj.positions[i], traj.rotations[i]
        covers[i] = covers_mask(pos, rot, params, grid.centers)
        idx[i] = direction_bins(pos, grid.centers, bins)
    covers.setflags(write=False)
    idx.setflags(write=False)
    return CoverageModel(grid, bins, params, covers, idx)


@dataclass(frozen=True, eq=False)
class CoverageState:
    selected: tuple
    count: np.ndarray  # (V,) views in `selected` covering each voxel
    hist: np.ndarray  # (V, B) direction histogram of those views
    tv: np.ndarray  # (V,) cached total variation of `hist`

    @property
    def uniform(self) -> float:
        return 1.0 / self.hist.shape[1]

    @classmethod
    def empty(cls, n_voxels: int, n_bins: int):
        return cls((), np.zeros(n_voxels, dtype=np.int64), np.zeros((n_voxels, n_bins), dtype=np.int64),
                   np.ones(n_voxels))

    def cover_ratio(self) -> np.ndarray:
        if not self.selected:
            return np.zeros_like(self.count, dtype=np.float64)
        return self.count / len(self.selected)
