"""Greedy marginal-gain selection and the Random / Uniform baselines."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .distance import build_matrix
from .geometry import AngularBins, FrustumParams, build_coverage, build_grid
from .model import DistanceWeights, Trajectory, normalize_positions
from .utility import CfUtility, DfUtility, DppUtility

TIE_TOL = 1e-12
STRATEGIES = ("random", "uniform", "greedy_df", "greedy_dpp", "greedy_cf")


class NumericalSingularityError(ArithmeticError):
    """Every remaining candidate would make the selected DPP minor singular."""

    def __init__(self, step: int, selected):
        self.step = step
        self.selected = tuple(selected)
        super().__init__(
            f"log-determinant selection became singular at step {step} "
            f"(after {len(self.selected)} picks): every remaining candidate has a "
            f"Schur complement <= {1e-12:g}; reduce k or pass a DPP jitter"
        )


@dataclass
class SelectionResult:
    strategy: str
    indices: list
    gains: list
    k: int
    seed: int
    params: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @property
    def total_utility(self) -> Optional[float]:
        return float(sum(self.gains)) if self.gains else None


def _tie_ranks(n: int, seed: int) -> np.ndarray:
    perm = np.random.default_rng(seed).permutation(n)
    ranks = np.empty(n, dtype=np.int64)
    ranks[perm] = np.arange(n)
    return ranks


def greedy_select(utility, n: int, k: int, seed: int = 0) -> SelectionResult:
    """Pick ``k`` of ``n`` items by repeatedly adding the best marginal gain.

    Gains within ``TIE_TOL`` of the step maximum are tied; the tie goes to the
    candidate that comes first in one seeded permutation drawn before the
    loop, so the run is a pure function of (utility, k, seed).
    """
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    ranks = _tie_ranks(n, seed)
    available = np.ones(n, dtype=bool)
    state = utility.initial_state()
    picked, gains = [], []
    for step in range(k):
        g = np.where(available, utility.gains(state), -np.inf)
        best = g.max()
        if best == -np.inf:
            raise NumericalSingularityError(step, picked)
        tied = np.flatnonzero(available & (g >= best - TIE_TOL))
        j = int(tied[np.argmin(ranks[tied])])
        gains.append(float(g[j]))
        picked.append(j)
        available[j] = False
        state = utility.commit(state, j)
    return SelectionResult(utility.strategy, picked, gains, k, seed)


def random_select(n: int, k: int, seed: int = 0) -> SelectionResult:
    """Uniform subset without replacement (seeded Fisher-Yates prefix),
    reported in ascending order."""
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    rng = np.random.default_rng(seed)
    items = list(range(n))
    for i in range(k):
        j = int(rng.integers(i, n))
        items[i], items[j] = items[j], items[i]
    return SelectionResult("random", sorted(items[:k]), [], k, seed)


def uniform_select(n: int, k: int, seed: int = 0, start: Optional[int] = None) -> SelectionResult:
    """Equal-interval stride sampling from a seeded start, wrapping past the end.

    Pick ``t`` is ``floor(start + t*n/k) mod n``; a collision moves forward to
    the next unused index. ``meta["temporal_order"]`` keeps the raw pick order.
    """
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    if start is None:
        start = int(np.random.default_rng(seed).integers(0, n))
    if not 0 <= start < n:
        raise ValueError(f"start {start} outside [0, {n})")
    used = set()
    order = []
    for t in range(k):
        idx = ((start * k + t * n) // k) % n
        while idx in used:
            idx = (idx + 1) % n
        used.add(idx)
        order.append(idx)
    return SelectionResult("uniform", sorted(order), [], k, seed,
                           meta={"start": start, "temporal_order": order})


# --- configured runs ------------------------------------------------------

def ratio_to_k(ratio: float, n: int) -> int:
    if not 0.0 < ratio <= 1.0:
        raise ValueError(f"ratio must lie in (0, 1], got {ratio}")
    return max(1, math.floor(ratio * n + 0.5))


@dataclass
class SelectionConfig:
    strategy: str
    k: Optional[int] = None
    ratio: Optional[float] = None
    seed: int = 0
    weights: DistanceWeights = field(default_factory=DistanceWeights)
    lam: float = 0.5
    grid_res: int = 16
    frustum: FrustumParams = field(default_factory=FrustumParams)
    n_bins: int = 26
    dpp_jitter: float = 0.0

    def __post_init__(self):
        self.strategy = self.strategy.replace("-", "_")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; choose from {', '.join(STRATEGIES)}")
        if (self.k is None) == (self.ratio is None):
            raise ValueError("give exactly one of k or ratio")
        if self.ratio is not None and not 0.0 < self.ratio <= 1.0:
            raise ValueError(f"ratio must lie in (0, 1], got {self.ratio}")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if self.n_bins not in (6, 26):
            raise ValueError("n_bins must be 6 (axes) or 26 (lattice)")

    def resolve_k(self, n: int) -> int:
        k = self.k if self.k is not None else ratio_to_k(self.ratio, n)
        if not 1 <= k <= n:
            raise ValueError(f"k={k} outside [1, {n}] for a {n}-frame trajectory")
        return k

    def params(self) -> dict:
        return {
            "weights": self.weights.as_dict(),
            "lambda": self.lam,
            "grid_res": self.grid_res,
            "n_bins": self.n_bins,
            "fov_y_deg": math.degrees(self.frustum.fov_y),
            "aspect": self.frustum.aspect,
            "near": self.frustum.near,
            "far": self.frustum.far,
            "dpp_jitter": self.dpp_jitter,
            "ratio": self.ratio,
        }


def make_utility(traj: Trajectory, config: SelectionConfig):
    """Build the gain evaluator for a greedy strategy on an already
    normalized trajectory."""
    if config.strategy in ("greedy_df", "greedy_dpp"):
        m = build_matrix(traj, config.weights).entries
        if config.strategy == "greedy_df":
            return DfUtility(m)
        return DppUtility(m, jitter=config.dpp_jitter)
    if config.strategy == "greedy_cf":
        grid = build_grid(traj, config.grid_res)
        bins = AngularBins.lattice26() if config.n_bins == 26 else AngularBins.axes()
        return CfUtility(build_coverage(traj, grid, config.frustum, bins), config.lam)
    raise ValueError(f"{config.strategy} is not a greedy strategy")


def run_selection(traj: Trajectory, config: SelectionConfig) -> SelectionResult:
    """Normalize positions to the [-4, 4] box and run the configured strategy."""
    n = len(traj)
    k = config.resolve_k(n)
    if config.strategy == "random":
        result = random_select(n, k, config.seed)
    elif config.strategy == "uniform":
        result = uniform_select(n, k, config.seed)
    else:
        utility = make_utility(normalize_positions(traj), config)
        result = greedy_select(utility, n, k, config.seed)
    result.params = config.params()
    return result
