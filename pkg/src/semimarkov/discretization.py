"""Discretization of returns into symmetric states and of index values into
volatility levels."""

import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_day_starts, check_int, check_state_labels
from .exceptions import ConfigError, DegenerateGridError
from .ingestion import DataWarning, RawReturnSeries


@dataclass(frozen=True, eq=False)
class ReturnGrid:
    """Symmetric cut points and one representative return per state.

    State ``k`` holds returns ``r`` with ``thresholds[k-1] <= r <
    thresholds[k]``; a return equal to a cut point belongs to the higher
    state.
    """

    thresholds: np.ndarray
    state_values: np.ndarray
    mode: str = "quantile"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        th = np.asarray(self.thresholds, dtype=float)
        sv = np.asarray(self.state_values, dtype=float)
        if len(sv) != len(th) + 1 or len(sv) % 2 == 0:
            raise ConfigError("a return grid needs an odd number of states "
                              "and one fewer thresholds")
        if np.any(np.diff(th) <= 0) or np.any(np.diff(sv) <= 0):
            raise ConfigError("grid thresholds and state values must be "
                              "strictly increasing")
        if not np.array_equal(th, -th[::-1]):
            raise ConfigError("return grid thresholds must be symmetric")
        if sv[len(sv) // 2] != 0.0:
            raise ConfigError("middle state value must be 0")
        object.__setattr__(self, "thresholds", th)
        object.__setattr__(self, "state_values", sv)

    @property
    def num_states(self):
        return len(self.state_values)

    def state_of(self, returns):
        return np.searchsorted(self.thresholds, returns, side="right")


@dataclass(frozen=True, eq=False)
class IndexGrid:
    """Cut points splitting index values into volatility levels.

    Level ``v`` holds values in ``[thresholds[v-1], thresholds[v])`` with
    open outer intervals; ties go to the higher level.
    """

    thresholds: np.ndarray

    def __post_init__(self):
        th = np.asarray(self.thresholds, dtype=float).reshape(-1)
        if np.any(np.diff(th) <= 0):
            raise ConfigError("index grid thresholds must be strictly increasing")
        object.__setattr__(self, "thresholds", th)

    @property
    def num_levels(self):
        return len(self.thresholds) + 1

    def level_of(self, values):
        return np.searchsorted(self.thresholds, values, side="right")


@dataclass(frozen=True, eq=False)
class StateSeries:
    """Discretized minute series with day boundaries.

    ``states`` are labels ``0..num_states-1``; ``state_values`` maps a
    label to its return value.
    """

    states: np.ndarray
    state_values: np.ndarray
    day_starts: np.ndarray = None
    grid: ReturnGrid | None = None

    def __post_init__(self):
        sv = np.asarray(self.state_values, dtype=float)
        st = check_state_labels(self.states, len(sv))
        object.__setattr__(self, "states", st)
        object.__setattr__(self, "state_values", sv)
        object.__setattr__(self, "day_starts",
                           check_day_starts(self.day_starts, len(st)))

    def __len__(self):
        return len(self.states)

    @property
    def num_states(self):
        return len(self.state_values)

    @property
    def values(self):
        return self.state_values[self.states]

    def day_ids(self):
        ids = np.zeros(len(self.states), dtype=np.int64)
        ids[self.day_starts[1:]] = 1
        return np.cumsum(ids)


def _as_returns(returns):
    if isinstance(returns, RawReturnSeries):
        return np.asarray(returns.values, dtype=float), returns.day_starts
    return np.asarray(returns, dtype=float).reshape(-1), None


def _quantile_cuts(abs_returns, targets):
    """Cut points between distinct ``|r|`` values, nearest to the targeted
    cumulative fractions, forced strictly increasing."""
    u, counts = np.unique(abs_returns, return_counts=True)
    if len(u) < 2:
        raise DegenerateGridError("returns have no spread")
    below = np.cumsum(counts)[:-1]  # count of |r| <= u[i], gap i follows u[i]
    n = len(abs_returns)
    cuts, prev = [], -1
    for q in targets:
        i = int(np.argmin(np.abs(below - q * n)))
        i = max(i, prev + 1)
        if i >= len(below):
            raise DegenerateGridError(
                f"returns have only {len(u)} distinct magnitudes, too few for "
                f"{2 * len(targets) + 1} states")
        cuts.append(0.5 * (u[i] + u[i + 1]))
        prev = i
    return np.array(cuts)


def _cell_values(r, thresholds):
    states = np.searchsorted(thresholds, r, side="right")
    n = len(thresholds) + 1
    med = np.full(n, np.nan)
    for k in range(n):
        cell = r[states == k]
        if len(cell):
            med[k] = np.median(cell)
    for k in range(n):
        if np.isnan(med[k]):
            med[k] = -med[n - 1 - k]
    med[n // 2] = 0.0
    return med


def fit_return_grid(returns, num_states=5, mode="quantile", tail_mass=None,
                    delta=None):
    """Fit a symmetric return grid.

    ``mode="quantile"`` places the cut points at empirical quantiles of
    ``|r|`` mirrored about zero: each outer tail receives ``tail_mass``
    (default ``1/num_states``) and the inner states share the remaining
    mass equally.  State values are the cell medians, the middle one forced
    to zero.  ``mode="fixed-delta"`` puts the cuts at ``±delta/2,
    ±3 delta/2, ...`` with state values at multiples of ``delta``.
    """
    num_states = check_int(num_states, "num_states", 3)
    if num_states % 2 == 0:
        raise ConfigError(f"num_states must be odd, got {num_states}")
    r, _ = _as_returns(returns)
    r = r[np.isfinite(r)]
    half = num_states // 2
    if mode == "fixed-delta":
        if delta is None or not delta > 0:
            raise ConfigError("fixed-delta mode needs a positive delta")
        cuts = (np.arange(1, half + 1) - 0.5) * delta
        values = np.arange(-half, half + 1) * float(delta)
        return ReturnGrid(np.concatenate([-cuts[::-1], cuts]), values,
                          mode, {"delta": float(delta)})
    if mode != "quantile":
        raise ConfigError(f"unknown discretization mode {mode!r}")
    if len(r) == 0 or np.all(r == r[0]):
        raise DegenerateGridError("returns are constant")
    tail = 1.0 / num_states if tail_mass is None else float(tail_mass)
    if not 0 < tail < 0.5:
        raise ConfigError(f"tail_mass must lie in (0, 0.5), got {tail}")
    inner = (1 - 2 * tail) / (2 * half - 1)
    targets = [(2 * k - 1) * inner for k in range(1, half + 1)]
    cuts = _quantile_cuts(np.abs(r), targets)
    thresholds = np.concatenate([-cuts[::-1], cuts])
    return ReturnGrid(thresholds, _cell_values(r, thresholds), mode,
                      {"tail_mass": tail})


def discretize_returns(returns, grid):
    """Map returns to the states of ``grid``; day markers are kept."""
    r, day_starts = _as_returns(returns)
    return StateSeries(grid.state_of(r), grid.state_values, day_starts, grid)


def fit_index_grid(index_values, num_levels=5):
    """Cut points at the empirical ``k / num_levels`` quantiles
    (linear-interpolation convention).  Coinciding cut points are merged,
    which yields fewer levels and a warning."""
    num_levels = check_int(num_levels, "num_levels", 1)
    v = np.asarray(index_values, dtype=float).reshape(-1)
    v = v[np.isfinite(v)]
    if num_levels == 1:
        return IndexGrid(np.array([]))
    if len(v) == 0 or np.all(v == v[0]):
        raise DegenerateGridError("index values are constant")
    cuts = np.quantile(v, np.arange(1, num_levels) / num_levels)
    uniq = np.unique(cuts)
    if len(uniq) < len(cuts):
        warnings.warn(f"index values are tied: {num_levels} levels reduced "
                      f"to {len(uniq) + 1}", DataWarning, stacklevel=2)
    return IndexGrid(uniq)


class ReturnDiscretizer(TransformerMixin, BaseEstimator):
    """Transformer mapping returns to symmetric state labels.

    Parameters
    ----------
    n_states : int
        Odd number of states.
    mode : {"quantile", "fixed-delta"}
    tail_mass : float, optional
        Probability mass per outer tail in quantile mode.
    delta : float, optional
        State spacing in fixed-delta mode.
    train_size : int or float, optional
        Fit the grid on a leading prefix of the sample (count or fraction).
    """

    def __init__(self, n_states=5, mode="quantile", tail_mass=None,
                 delta=None, train_size=None):
        self.n_states = n_states
        self.mode = mode
        self.tail_mass = tail_mass
        self.delta = delta
        self.train_size = train_size

    def fit(self, X, y=None):
        r, _ = _as_returns(X)
        if self.train_size is not None:
            size = self.train_size
            n = int(round(size * len(r))) if isinstance(size, float) else int(size)
            r = r[:n]
        self.grid_ = fit_return_grid(r, self.n_states, self.mode,
                                     self.tail_mass, self.delta)
        return self

    def transform(self, X):
        check_is_fitted(self, "grid_")
        return self.grid_.state_of(_as_returns(X)[0])

    def inverse_transform(self, X):
        check_is_fitted(self, "grid_")
        return self.grid_.state_values[check_state_labels(X, self.grid_.num_states)]


class IndexDiscretizer(TransformerMixin, BaseEstimator):
    """Transformer mapping index values to volatility levels."""

    def __init__(self, n_levels=5):
        self.n_levels = n_levels

    def fit(self, X, y=None):
        self.grid_ = fit_index_grid(X, self.n_levels)
        return self

    def transform(self, X):
        check_is_fitted(self, "grid_")
        return self.grid_.level_of(np.asarray(X, dtype=float))
