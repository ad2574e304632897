"""Diversity-driven view subset selection for camera trajectories."""

__version__ = "0.1.0"

from .distance import AffinityMatrix, ang3d, build_matrix, dist3d, distsem
from .model import (
    CameraView,
    DistanceWeights,
    Trajectory,
    attach_features,
    load_features,
    load_trajectory,
    normalize_positions,
)
from .selector import (
    NumericalSingularityError,
    SelectionConfig,
    SelectionResult,
    greedy_select,
    random_select,
    run_selection,
    uniform_select,
)
from .utility import CfUtility, DfUtility, DppUtility

__all__ = [
    "AffinityMatrix", "CameraView", "CfUtility", "DfUtility", "DistanceWeights", "DppUtility",
    "NumericalSingularityError", "SelectionConfig", "SelectionResult", "Trajectory",
    "ang3d", "attach_features", "build_matrix", "dist3d", "distsem", "greedy_select",
    "load_features", "load_trajectory", "normalize_positions", "random_select",
    "run_selection", "uniform_select",
]
