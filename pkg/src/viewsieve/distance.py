"""Pairwise view similarity measures and the combined affinity matrix.

All measures map to [0, 1] with 1 meaning "same view" (minimal distance).
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .model import CameraView, DistanceWeights, Trajectory


class MissingFeaturesError(ValueError):
    pass


def dist3d(view_i: CameraView, view_j: CameraView, sigma: float) -> float:
    """Gaussian kernel on camera positions."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    d2 = float(np.sum((view_i.position - view_j.position) ** 2))
    return max(0.0, float(np.exp(-d2 / (2.0 * sigma * sigma))))


def ang3d(view_i: CameraView, view_j: CameraView) -> float:
    # (trace(Ri^T Rj) + 1) / 4 equals the squared quaternion dot product
    tr = float(np.sum(view_i.rotation * view_j.rotation))
    return min(1.0, max(0.0, (tr + 1.0) / 4.0))


def distsem(view_i: CameraView, view_j: CameraView) -> float:
    """Cosine similarity of the two feature vectors, clamped to [0, 1]."""
    if view_i.feature is None or view_j.feature is None:
        raise MissingFeaturesError(
            "semantic similarity needs features on both views; set gamma=0 to build without them"
        )
    pi, pj = view_i.feature, view_j.feature
    if pi.shape != pj.shape:
        raise ValueError(f"feature dimensions differ: {pi.shape[0]} vs {pj.shape[0]}")
    cos = float(pi @ pj) / (np.linalg.norm(pi) * np.linalg.norm(pj))
    return min(1.0, max(0.0, cos))


@dataclass(frozen=True, eq=False)
class AffinityMatrix:
    entries: np.ndarray
    weights: DistanceWeights

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def to_csv(self) -> str:
        buf = io.StringIO()
        for row in self.entries:
            buf.write(",".join(f"{x:.17g}" for x in row))
            buf.write("\n")
        return buf.getvalue()


def build_matrix(traj: Trajectory, weights: DistanceWeights) -> AffinityMatrix:
    """Assemble ``alpha*Dist3D + beta*Ang3D + gamma*DistSem`` for every view pair.

    Only the upper triangle is evaluated; the lower one is its mirror so the
    result is exactly symmetric. The diagonal is exactly 1.
    """
    if not isinstance(weights, DistanceWeights):
        raise TypeError("weights must be a DistanceWeights")
    if weights.gamma > 0 and not traj.has_features:
        raise MissingFeaturesError(
            f"gamma={weights.gamma} needs image features on every view; "
            "pass a feature table or set gamma=0"
        )
    n = len(traj)
    m = np.zeros(n * (n - 1) // 2)
    if weights.alpha > 0:
        d2 = pdist(traj.positions, "sqeuclidean")
        m += weights.alpha * np.exp(-d2 / (2.0 * weights.sigma ** 2))
    if weights.beta > 0:
        flat = traj.rotations.reshape(n, 9)
        m += weights.beta * np.clip((_upper(flat @ flat.T) + 1.0) / 4.0, 0.0, 1.0)
    if weights.gamma > 0:
        feats = traj.features
        m += weights.gamma * np.clip(_upper(feats @ feats.T), 0.0, 1.0)
    np.clip(m, 0.0, 1.0, out=m)
    full = squareform(m)
    np.fill_diagonal(full, 1.0)
    full.setflags(write=False)
    return AffinityMatrix(full, weights)


def _upper(square: np.ndarray) -> np.ndarray:
    # condensed upper triangle, same order as pdist
    i, j = np.triu_indices(square.shape[0], k=1)
    return square[i, j]
