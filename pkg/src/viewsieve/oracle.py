"""Exhaustive optimum and randomized property checks for the utilities.

Set values are canonicalized by accumulating marginal gains in ascending
index order, so brute force and greedy compare against one function.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .distance import build_matrix
from .geometry import AngularBins, FrustumParams, build_coverage, build_grid
from .model import DistanceWeights, Trajectory, random_trajectory
from .selector import greedy_select
from .utility import CfUtility, DfUtility, DppUtility, accumulate

PROPERTY_TOL = 1e-9
MAX_SUBSETS = 2_000_000
MAX_WITNESSES = 50
APPROX_RATIO = 1.0 - 1.0 / math.e


class BudgetError(ValueError):
    pass


@dataclass
class PropertyReport:
    name: str
    instances: int = 0
    violations: list = field(default_factory=list)
    violation_count: int = 0
    max_violation: float = 0.0
    details: dict = field(default_factory=dict)

    def record(self, magnitude: float, witness: dict):
        self.violation_count += 1
        self.max_violation = max(self.max_violation, float(magnitude))
        if len(self.violations) < MAX_WITNESSES:
            self.violations.append(witness)

    @property
    def ok(self) -> bool:
        return self.violation_count == 0

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=False)

    @classmethod
    def from_json(cls, text: str) -> "PropertyReport":
        return cls(**json.loads(text))


# --- brute force ----------------------------------------------------------

def brute_force_optimum(utility, n: int, k: int, chunk: int = 20000):
    """Best size-``k`` subset by full enumeration.

    Returns ``(subset, value)``; ties go to the lexicographically smallest
    subset. Raises BudgetError when ``n > 16`` or ``C(n, k) > 2e6``.
    """
    if n > 16 or math.comb(n, k) > MAX_SUBSETS:
        raise BudgetError(f"C({n}, {k}) = {math.comb(n, k)} exceeds the enumeration budget")
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    best_val, best_set = -math.inf, None
    it = itertools.combinations(range(n), k)
    while True:
        block = list(itertools.islice(it, chunk))
        if not block:
            break
        combos = np.array(block, dtype=np.int64)
        vals = utility.set_values(combos)
        # argmax returns the first maximum, i.e. the lexicographically smallest
        j = int(np.argmax(vals))
        if best_set is None or vals[j] > best_val:
            best_val, best_set = float(vals[j]), tuple(int(x) for x in combos[j])
    return best_set, best_val


# --- random instances -----------------------------------------------------

def random_df(rng, n_min=2, n_max=12, weights=None):
    n = int(rng.integers(n_min, n_max + 1))
    traj = random_trajectory(rng, n)
    return DfUtility(build_matrix(traj, weights or DistanceWeights()).entries)


def random_dpp(rng, n_min=2, n_max=12, weights=None, jitter=1e-4):
    n = int(rng.integers(n_min, n_max + 1))
    traj = random_trajectory(rng, n)
    return DppUtility(build_matrix(traj, weights or DistanceWeights()).entries, jitter=jitter)


@dataclass
class CfInstance:
    positions: list
    rotations: list
    grid_res: int
    fov_y: float
    lam: float
    n_bins: int

    def utility(self) -> CfUtility:
        traj = Trajectory.from_arrays(np.array(self.positions), np.array(self.rotations))
        grid = build_grid(traj, self.grid_res)
        bins = AngularBins.lattice26() if self.n_bins == 26 else AngularBins.axes()
        cov = build_coverage(traj, grid, FrustumParams(fov_y=self.fov_y), bins)
        util = CfUtility(cov, self.lam)
        util.instance = self
        return util


def random_cf(rng, n_min=2, n_max=6, res_max=4, lam=0.5):
    n = int(rng.integers(n_min, n_max + 1))
    traj = random_trajectory(rng, n, feature_dim=None)
    inst = CfInstance(
        traj.positions.tolist(), traj.rotations.tolist(),
        int(rng.integers(1, res_max + 1)), math.radians(90.0), lam,
        int(rng.choice([6, 26])),
    )
    return inst.utility()


def _state_for(utility, items):
    state, _ = accumulate(utility, sorted(items))
    return state


def _describe(utility) -> dict:
    inst = getattr(utility, "instance", None)
    if inst is not None:
        return {"kind": "cf", **asdict(inst)}
    return {"kind": utility.strategy, "matrix": utility.matrix.tolist()}


# --- property checks ------------------------------------------------------

def check_submodularity(make_utility: Callable, trials: int, seed: int = 0, name: str = "submodular",
                        tol: float = PROPERTY_TOL) -> PropertyReport:
    """Sample chains A <= B and k outside B; flag gain(A, k) < gain(B, k) - tol.

    ``make_utility(rng)`` draws one random instance per trial.
    """
    rng = np.random.default_rng(seed)
    report = PropertyReport(name)
    for _ in range(trials):
        util = make_utility(rng)
        n = util.n
        perm = rng.permutation(n)
        size_b = int(rng.integers(0, n))
        size_a = int(rng.integers(0, size_b + 1))
        b = sorted(int(x) for x in perm[:size_b])
        a = sorted(int(x) for x in rng.choice(b, size=size_a, replace=False)) if size_a else []
        k = int(perm[size_b])
        g_a = util.gain(_state_for(util, a), k)
        g_b = util.gain(_state_for(util, b), k)
        report.instances += 1
        if g_b > g_a + tol:
            report.record(g_b - g_a, {"A": a, "B": b, "k": k, "gain_A": g_a, "gain_B": g_b,
                                      "instance": _describe(util)})
    return report


def check_monotonicity(make_utility: Callable, trials: int, seed: int = 0, name: str = "monotone",
                       tol: float = PROPERTY_TOL) -> PropertyReport:
    """Flag any marginal gain below ``-tol`` on random (S, k) pairs."""
    rng = np.random.default_rng(seed)
    report = PropertyReport(name)
    for _ in range(trials):
        util = make_utility(rng)
        n = util.n
        perm = rng.permutation(n)
        size = int(rng.integers(0, n))
        s = sorted(int(x) for x in perm[:size])
        k = int(perm[size])
        g = util.gain(_state_for(util, s), k)
        report.instances += 1
        if g < -tol:
            report.record(-g, {"S": s, "k": k, "gain": g})
    return report


def check_approximation(trials: int = 200, seed: int = 0, n_max: int = 12, k_max: int = 5) -> PropertyReport:
    """Greedy max-min value against (1 - 1/e) times the exhaustive optimum."""
    rng = np.random.default_rng(seed)
    report = PropertyReport("approx")
    worst = math.inf
    for t in range(trials):
        util = random_df(rng, n_min=2, n_max=n_max)
        n = util.n
        k = int(rng.integers(1, min(k_max, n) + 1))
        greedy = greedy_select(util, n, k, seed=int(rng.integers(2 ** 63)))
        g_val = sum(greedy.gains)
        opt_set, opt = brute_force_optimum(util, n, k)
        report.instances += 1
        ratio = g_val / opt if opt > 0 else 1.0
        worst = min(worst, ratio)
        if g_val < APPROX_RATIO * opt - PROPERTY_TOL:
            report.record(APPROX_RATIO * opt - g_val,
                          {"trial": t, "n": n, "k": k, "greedy": g_val, "opt": opt,
                           "greedy_set": greedy.indices, "opt_set": list(opt_set)})
    report.details = {"worst_ratio": worst, "bound": APPROX_RATIO}
    return report


def check_dpp_dense(trials: int = 100, seed: int = 0, n_max: int = 32, rel_tol: float = 1e-8) -> PropertyReport:
    """Incremental log-det along greedy runs against dense slogdet, plus the
    non-increasing gain sequence."""
    rng = np.random.default_rng(seed)
    report = PropertyReport("dpp-dense")
    worst_err = 0.0
    for t in range(trials):
        n = int(rng.integers(2, n_max + 1))
        traj = random_trajectory(rng, n)
        util = DppUtility(build_matrix(traj, DistanceWeights()).entries)
        k = int(rng.integers(1, n + 1))
        res = greedy_select(util, n, k, seed=t)
        state = util.initial_state()
        report.instances += 1
        for step, j in enumerate(res.indices):
            state = util.commit(state, j)
            idx = list(state.selected)
            sign, dense = np.linalg.slogdet(util.matrix[np.ix_(idx, idx)])
            err = abs(state.log_det - dense)
            worst_err = max(worst_err, float(err / max(1.0, abs(dense))))
            if sign <= 0 or err > rel_tol * max(1.0, abs(dense)):
                report.record(err, {"trial": t, "step": step, "incremental": state.log_det,
                                    "dense": float(dense)})
        for step in range(1, len(res.gains)):
            rise = res.gains[step] - res.gains[step - 1]
            if rise > PROPERTY_TOL:
                report.record(rise, {"trial": t, "step": step, "gains": res.gains[step - 1:step + 1]})
    report.details = {"worst_relative_error": worst_err}
    return report


def find_cf_counterexample(trials: int = 2000, seed: int = 0) -> PropertyReport:
    """Search small coverage instances for a diminishing-returns violation."""
    report = check_submodularity(random_cf, trials, seed, name="submodular-cf")
    report.details = {"expectation": "at least one violation"}
    return report
