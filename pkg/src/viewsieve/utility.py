"""Marginal-gain evaluators for the three utilities.

Each utility exposes the same small surface used by the greedy selector and
the brute-force oracle:

``initial_state()``
    state for the empty selection
``gain(state, k)`` / ``gains(state)``
    marginal gain of adding ``k`` (or of every index at once)
``commit(state, k)``
    new state with ``k`` appended; the input state is left untouched
``set_values(combos)``
    utility of each row of an (S, k) index array, accumulated in
    ascending-index order

States are immutable snapshots so callers can branch from any prefix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import CoverageModel, CoverageState, total_variation_rows

SINGULAR_EPS = 1e-12


class ContractError(ValueError):
    """A gain/commit was requested for an index that is not a valid candidate."""


def _check_candidate(selected, k, n):
    if not 0 <= k < n:
        raise ContractError(f"index {k} out of range [0, {n})")
    if k in selected:
        raise ContractError(f"index {k} is already selected")


# --- max-min distance -----------------------------------------------------

@dataclass(frozen=True, eq=False)
class DfState:
    selected: tuple
    min_dist: np.ndarray


class DfUtility:
    """Max-min distance: the gain of ``k`` is its smallest ``1 - M`` to the
    selection, and 1.0 for the first pick."""

    strategy = "greedy_df"

    def __init__(self, matrix):
        self.matrix = np.asarray(matrix, dtype=np.float64)
        self.dist = 1.0 - self.matrix
        self.n = self.matrix.shape[0]

    def initial_state(self) -> DfState:
        return DfState((), np.ones(self.n))

    def gain(self, state: DfState, k: int) -> float:
        _check_candidate(state.selected, k, self.n)
        return float(state.min_dist[k])

    def gains(self, state: DfState) -> np.ndarray:
        return state.min_dist.copy()

    def commit(self, state: DfState, k: int) -> DfState:
        _check_candidate(state.selected, k, self.n)
        return DfState(state.selected + (k,), np.minimum(state.min_dist, self.dist[k]))

    def set_values(self, combos) -> np.ndarray:
        combos = np.sort(np.atleast_2d(combos), axis=1)
        kk = combos.shape[1]
        sub = self.dist[combos[:, :, None], combos[:, None, :]]
        # column t takes the min over rows i < t
        below = np.tril(np.ones((kk, kk), dtype=bool))
        sub = np.where(below[None], np.inf, sub)
        mins = sub.min(axis=1)
        mins[:, 0] = 1.0
        return mins.sum(axis=1)


# --- log determinant ------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DppState:
    selected: tuple
    chol: np.ndarray  # (m, m) lower-triangular factor of M_S
    log_det: float
    proj: np.ndarray  # (m, N): column j solves chol @ c = M[S, j]
    resid: np.ndarray  # (N,): M[j, j] - |proj[:, j]|^2, the Schur complements


class DppUtility:
    """Log-determinant of the selected principal minor, maintained through an
    incrementally grown Cholesky factor.

    A candidate whose Schur complement falls to ``eps`` or below has gain
    ``-inf`` (adding it would make the minor singular).
    """

    strategy = "greedy_dpp"

    def __init__(self, matrix, jitter: float = 0.0, eps: float = SINGULAR_EPS):
        m = np.array(matrix, dtype=np.float64)
        d = np.diag(m).copy()
        if np.any(d <= 0):
            raise ValueError("DPP kernel needs a positive diagonal")
        if not np.allclose(d, 1.0, rtol=0, atol=1e-12):
            s = 1.0 / np.sqrt(d)
            m = m * s[:, None] * s[None, :]
        if jitter:
            m = m + jitter * np.eye(m.shape[0])
        self.matrix = m
        self.jitter = jitter
        self.eps = eps
        self.n = m.shape[0]

    def initial_state(self) -> DppState:
        return DppState((), np.zeros((0, 0)), 0.0, np.zeros((0, self.n)), np.diag(self.matrix).copy())

    def _gain_of(self, s: float) -> float:
        return math.log(s) if s > self.eps else -math.inf

    def gain(self, state: DppState, k: int) -> float:
        _check_candidate(state.selected, k, self.n)
        return self._gain_of(float(state.resid[k]))

    def gains(self, state: DppState) -> np.ndarray:
        r = state.resid
        out = np.full(self.n, -np.inf)
        ok = r > self.eps
        out[ok] = np.log(r[ok])
        return out

    def commit(self, state: DppState, k: int) -> DppState:
        _check_candidate(state.selected, k, self.n)
        s = float(state.resid[k])
        if not s > self.eps:
            raise ContractError(f"committing {k} would make the selected minor singular (Schur complement {s:.3g})")
        c = state.proj[:, k]
        root = math.sqrt(s)
        m = len(state.selected)
        chol = np.zeros((m + 1, m + 1))
        chol[:m, :m] = state.chol
        chol[m, :m] = c
        chol[m, m] = root
        row = (self.matrix[k] - c @ state.proj) / root
        proj = np.vstack([state.proj, row])
        resid = state.resid - row * row
        resid[k] = 0.0
        return DppState(state.selected + (k,), chol, state.log_det + math.log(s), proj, resid)

    def set_values(self, combos) -> np.ndarray:
        combos = np.atleast_2d(combos)
        sub = self.matrix[combos[:, :, None], combos[:, None, :]]
        sign, logdet = np.linalg.slogdet(sub)
        return np.where(sign > 0, logdet, -np.inf)


# --- uniform coverage -----------------------------------------------------

class CfUtility:
    """Coverage utility over voxel regions: for the hypothetical selection
    ``S + {k}`` the gain sums, over voxels, the cover ratio raised to
    ``lam`` plus one minus the direction-histogram total variation."""

    strategy = "greedy_cf"

    def __init__(self, coverage: CoverageModel, lam: float = 0.5):
        if not lam > 0:
            raise ValueError(f"lambda must be positive, got {lam}")
        self.coverage = coverage
        self.lam = lam
        self.n = coverage.n
        self.n_bins = len(coverage.bins)

    def initial_state(self) -> CoverageState:
        return CoverageState.empty(len(self.coverage.grid), self.n_bins)

    def gain(self, state: CoverageState, k: int) -> float:
        _check_candidate(state.selected, k, self.n)
        return self._gain(state, k)

    def _gain(self, state: CoverageState, k: int) -> float:
        cov = self.coverage.covers[k]
        size = len(state.selected) + 1
        count = state.count + cov
        ratio_term = float(np.sum((count / size) ** self.lam))
        # voxels k does not see keep their current histogram
        tv_sum_unchanged = float(np.sum(1.0 - state.tv[~cov]))
        if not cov.any():
            return ratio_term + tv_sum_unchanged
        rows = np.flatnonzero(cov)
        hist = state.hist[rows].copy()
        hist[np.arange(rows.size), self.coverage.bin_index[k, rows]] += 1
        tv = total_variation_rows(hist, count[rows])
        return ratio_term + tv_sum_unchanged + float(np.sum(1.0 - tv))

    def gains(self, state: CoverageState) -> np.ndarray:
        out = np.full(self.n, -np.inf)
        chosen = set(state.selected)
        for k in range(self.n):
            if k not in chosen:
                out[k] = self._gain(state, k)
        return out

    def commit(self, state: CoverageState, k: int) -> CoverageState:
        _check_candidate(state.selected, k, self.n)
        cov = self.coverage.covers[k]
        count = state.count + cov
        hist = state.hist.copy()
        rows = np.flatnonzero(cov)
        hist[rows, self.coverage.bin_index[k, rows]] += 1
        tv = state.tv.copy()
        tv[rows] = total_variation_rows(hist[rows], count[rows])
        return CoverageState(state.selected + (k,), count, hist, tv)

    def set_values(self, combos) -> np.ndarray:
        combos = np.sort(np.atleast_2d(combos), axis=1)
        out = np.empty(combos.shape[0])
        for r, combo in enumerate(combos):
            state = self.initial_state()
            total = 0.0
            for k in combo:
                total += self._gain(state, int(k))
                state = self.commit(state, int(k))
            out[r] = total
        return out


def accumulate(utility, order):
    """Walk ``order`` through ``utility``; return (final state, per-step gains)."""
    state = utility.initial_state()
    gains = []
    for k in order:
        gains.append(utility.gain(state, int(k)))
        state = utility.commit(state, int(k))
    return state, gains
