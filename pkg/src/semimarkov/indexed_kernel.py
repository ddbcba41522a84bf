"""Semi-Markov kernels conditioned on a discretized index level.

The same estimator serves the moving-average (ISMC) and the EWMA (WISMC)
models; they differ only in the index series supplied.
"""

import hashlib
from functools import cached_property

import numpy as np

from ._validation import check_index, check_int, check_time
from .discretization import IndexGrid
from .exceptions import ConfigError, UnobservedRowError, UsageError
from .smc import SemiMarkovKernel, estimate_kernel

DEFAULT_BACKOFF = 50


class IndexedKernel:
    """Kernel ``Q[i, v, j, t]`` for state ``i``, index level ``v``.

    Cells ``(i, v)`` with fewer than ``backoff_threshold`` observations are
    backed off: they use the unconditional row of ``fallback``.
    """

    def __init__(self, Q_cells, grid, index_config, *, cell_counts=None,
                 counts=None, backoff_threshold=0, fallback=None,
                 state_values=None):
        Q_cells = np.asarray(Q_cells, dtype=float)
        if Q_cells.ndim != 4 or Q_cells.shape[0] != Q_cells.shape[2]:
            raise ConfigError(f"indexed kernel must have shape (S, L, S, t_max+1), "
                              f"got {Q_cells.shape}")
        S, L = Q_cells.shape[:2]
        if L != grid.num_levels:
            raise ConfigError(f"kernel has {L} levels but grid has {grid.num_levels}")
        if index_config.initial_value is None:
            raise ConfigError("indexed kernel needs a resolved initial index value")
        self.num_states, self.num_levels = S, L
        self.t_max = Q_cells.shape[3] - 1
        self.grid = grid
        self.index_config = index_config
        self.backoff_threshold = int(backoff_threshold)
        self.counts = None if counts is None else np.asarray(counts, dtype=np.int64)
        self.cell_counts = (None if cell_counts is None
                            else np.asarray(cell_counts, dtype=np.int64))
        self.fallback = fallback
        if state_values is None:
            state_values = (fallback.state_values if fallback is not None
                            else np.arange(S, dtype=float) - S // 2)
        self.state_values = np.asarray(state_values, dtype=float)
        self._Q_cells = Q_cells
        if self.cell_counts is None:
            self.backed_off = np.zeros((S, L), dtype=bool)
        else:
            self.backed_off = self.cell_counts < max(self.backoff_threshold, 1)
        if fallback is None and self.backed_off.any():
            raise ConfigError("backed-off cells need a fallback kernel")

    @classmethod
    def from_probabilities(cls, p, sojourn_pmf, grid, index_config, state_values=None):
        """Explicit kernel ``Q_ij(v;t) = p_ij(v) * sum_{s<=t} g_ij(v;s)``."""
        p = np.asarray(p, dtype=float)
        g = np.asarray(sojourn_pmf, dtype=float)
        if np.any(p < 0) or np.any(np.abs(p.sum(axis=2) - 1) > 1e-12):
            raise ConfigError("every p(v) row must be stochastic")
        if np.any(g < 0) or np.any(g[..., 0] != 0):
            raise ConfigError("sojourn pmf must be non-negative with no mass at 0")
        if np.any(np.abs(g[p > 0].sum(axis=-1) - 1) > 1e-12):
            raise ConfigError("sojourn pmf must sum to one for every used pair")
        return cls(p[..., None] * np.cumsum(g, axis=-1), grid, index_config,
                   state_values=state_values)

    @classmethod
    def from_counts(cls, counts, grid, index_config, backoff_threshold=DEFAULT_BACKOFF,
                    state_values=None, allow_self_transitions=False, fallback=False):
        """Cell estimates from ``counts[i, v, j, t]``; the level-summed
        counts give the unconditional back-off kernel."""
        counts = np.asarray(counts, dtype=np.int64)
        base = SemiMarkovKernel.from_counts(
            counts.sum(axis=1), state_values=state_values,
            allow_self_transitions=allow_self_transitions, fallback=fallback)
        cell_n = counts.sum(axis=(2, 3))
        Q = np.zeros(counts.shape)
        seen = cell_n > 0
        Q[seen] = np.cumsum(counts[seen], axis=-1) / cell_n[seen][:, None, None]
        return cls(Q, grid, index_config, cell_counts=cell_n, counts=counts,
                   backoff_threshold=backoff_threshold, fallback=base,
                   state_values=base.state_values)

    @cached_property
    def raw_Q(self):
        """Cell estimates without back-off (zero on empty cells)."""
        return self._Q_cells

    @cached_property
    def Q(self):
        Q = self._Q_cells.copy()
        for i, v in zip(*np.nonzero(self.backed_off)):
            Q[i, v] = self.fallback.Q[i]
        Q.setflags(write=False)
        return Q

    @cached_property
    def usable(self):
        """``usable[i, v]``: the cell can be sampled from."""
        u = ~self.backed_off
        if self.fallback is not None:
            u = u | (self.backed_off & self.fallback.usable[:, None])
        return u

    @property
    def p(self):
        return self.Q[..., -1]

    @cached_property
    def H(self):
        return self.Q.sum(axis=2)

    @cached_property
    def G(self):
        p = self.p[..., None]
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(p != 0, self.Q / np.where(p != 0, p, 1.0), 1.0)

    def _cell(self, i, v):
        i = check_index(i, self.num_states, "state")
        v = check_index(v, self.num_levels, "level")
        if not self.usable[i, v]:
            raise UnobservedRowError(i, f"cell (state {i}, level {v}) is unobserved")
        return i, v

    def p_of(self, i, j, v):
        i, v = self._cell(i, v)
        return float(self.p[i, v, check_index(j, self.num_states, "state")])

    def Q_of(self, i, j, v, t):
        i, v = self._cell(i, v)
        j = check_index(j, self.num_states, "state")
        return float(self.Q[i, v, j, check_time(t, self.t_max)])

    def H_of(self, i, v, t):
        i, v = self._cell(i, v)
        return float(self.H[i, v, check_time(t, self.t_max)])

    def G_of(self, i, j, v, t):
        i, v = self._cell(i, v)
        j = check_index(j, self.num_states, "state")
        return float(self.G[i, v, j, check_time(t, self.t_max)])

    def level_kernel(self, v):
        """The plain kernel of level ``v`` (backed-off rows included)."""
        v = check_index(v, self.num_levels, "level")
        return SemiMarkovKernel(self.Q[:, v], self.usable[:, v],
                                state_values=self.state_values,
                                allow_self_transitions=self._allow_self)

    @property
    def _allow_self(self):
        return bool(self.fallback.allow_self_transitions) if self.fallback else False

    def fingerprint(self):
        h = hashlib.sha256()
        for arr in (self.Q, self.grid.thresholds, self.state_values):
            h.update(np.ascontiguousarray(arr).tobytes())
        h.update(repr(sorted(self.index_config.to_dict().items())).encode())
        return h.hexdigest()


def indexed_G(kernel, i, j, v, t):
    return kernel.G_of(i, j, v, t)


def indexed_H(kernel, i, v, t):
    return kernel.H_of(i, v, t)


def estimate_indexed_kernel(sample, index, grid, t_max=None,
                            backoff_threshold=DEFAULT_BACKOFF, fallback=False):
    """Count transitions per ``(state, level)`` cell.

    A sojourn starting at ``T_n`` is binned by the level of ``U_n``, the
    index value on entering the state.  The unconditional kernel of the same
    sample serves as back-off for thin cells.
    """
    if len(index.values) != len(sample.J):
        raise UsageError(f"index has {len(index.values)} values for "
                         f"{len(sample.J)} jumps")
    if not isinstance(grid, IndexGrid):
        raise UsageError("grid must be an IndexGrid")
    backoff_threshold = check_int(backoff_threshold, "backoff_threshold", 0)
    base = estimate_kernel(sample, t_max, fallback=fallback)
    if not fallback:
        base.require_rows()
    levels = grid.level_of(index.values)
    n = sample.completed
    S, L = sample.num_states, grid.num_levels
    counts = np.zeros((S, L, S, base.t_max + 1), dtype=np.int64)
    np.add.at(counts, (sample.J[n], levels[n], sample.J[n + 1],
                       sample.T[n + 1] - sample.T[n]), 1)
    return IndexedKernel.from_counts(
        counts, grid, index.config, backoff_threshold, sample.state_values,
        sample.allow_self_transitions, fallback)
