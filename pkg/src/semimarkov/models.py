"""Estimator front-ends for plain and indexed semi-Markov chains.

Both follow the scikit-learn conventions: hyper-parameters are set in
``__init__`` and exposed through ``get_params``; ``fit`` learns from a
discretized minute series and stores fitted state in trailing-underscore
attributes; ``sample`` draws new minute series.
"""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .diagnostics import acf_squared, mean_acf
from .discretization import StateSeries, fit_index_grid
from .index import IndexConfig, compute_index
from .indexed_kernel import DEFAULT_BACKOFF, estimate_indexed_kernel
from .simulate import (SimulationConfig, expand_to_minutes, monte_carlo_transition,
                       simulate_indexed, simulate_smc)
from .smc import estimate_kernel, extract_mrp, solve_evolution


def _as_series(X, state_values=None):
    if isinstance(X, StateSeries):
        return X
    labels = np.asarray(X).reshape(-1)
    if state_values is None:
        k = int(labels.max()) + 1 if labels.size else 1
        state_values = np.arange(k, dtype=float) - k // 2
    return StateSeries(labels, state_values)


class _ChainBase(BaseEstimator):

    def _sample(self, simulate, kernel, horizon, seed, replications, burn_in,
                initial_state):
        cfg = SimulationConfig(horizon, seed, initial_state, burn_in, replications)
        out = [expand_to_minutes(simulate(kernel, cfg, r)) for r in range(replications)]
        return out[0] if replications == 1 else out

    def acf_squared(self, horizon, max_lag=100, seed=0, replications=1):
        """Replication-mean autocorrelation of squared simulated states."""
        draws = self.sample(horizon, seed=seed, replications=replications)
        draws = [draws] if replications == 1 else draws
        return mean_acf(acf_squared(d, max_lag) for d in draws)


class SemiMarkovChain(_ChainBase):
    """Discrete-time semi-Markov chain fitted by empirical kernel counts.

    Parameters
    ----------
    t_max : int, optional
        Kernel horizon; defaults to the longest observed sojourn.
    allow_self_transitions : bool
        If False, a jump happens only when the state changes.
    truncate_days : bool
        Treat day boundaries as censoring points.
    fallback : bool
        Give unobserved rows a uniform one-step exit instead of raising.
    state_values : array-like, optional
        Return value of each label when ``X`` is a bare label array.

    Attributes
    ----------
    sample_ : MarkovRenewalSample
    kernel_ : SemiMarkovKernel
    n_states_ : int
    """

    def __init__(self, t_max=None, allow_self_transitions=False,
                 truncate_days=True, fallback=False, state_values=None):
        self.t_max = t_max
        self.allow_self_transitions = allow_self_transitions
        self.truncate_days = truncate_days
        self.fallback = fallback
        self.state_values = state_values

    def fit(self, X, y=None):
        series = _as_series(X, self.state_values)
        self.sample_ = extract_mrp(series, self.allow_self_transitions, self.truncate_days)
        self.kernel_ = estimate_kernel(self.sample_, self.t_max, self.fallback)
        self.n_states_ = self.kernel_.num_states
        return self

    def transition_function(self, horizon):
        """``phi[t, i, j]`` for ``t = 0..horizon`` from the evolution equation."""
        check_is_fitted(self, "kernel_")
        return solve_evolution(self.kernel_, horizon)

    def sample(self, horizon, seed=0, replications=1, burn_in=None, initial_state=None):
        """Minute state series of length ``horizon`` (a list if ``replications > 1``)."""
        check_is_fitted(self, "kernel_")
        return self._sample(simulate_smc, self.kernel_,
                            horizon, seed, replications, burn_in, initial_state)


class IndexedSemiMarkovChain(_ChainBase):
    """Semi-Markov chain whose kernel depends on a volatility index level.

    ``index="moving_average"`` gives the moving-average model over ``m + 1``
    sojourns, ``index="ewma"`` the exponentially weighted one with weight
    ``lam``; ``"ewma_windowed"`` uses both.

    Parameters
    ----------
    index : {"ewma", "moving_average", "ewma_windowed"}
    m : int, optional
    lam : float, optional
    f : {"squared", "absolute"}
        Reward function of the state value.
    n_levels : int
        Number of quantile levels of the index.
    backoff_threshold : int
        Cells with fewer observations use the unconditional row.
    t_max, allow_self_transitions, truncate_days, fallback, state_values
        As in :class:`SemiMarkovChain`.
    initial_value : float, optional
        Pre-sample index value; defaults to the sample mean of ``f``.

    Attributes
    ----------
    sample_, index_, grid_, kernel_, n_states_
    """

    def __init__(self, index="ewma", m=None, lam=0.97, f="squared", n_levels=5,
                 backoff_threshold=DEFAULT_BACKOFF, t_max=None, initial_value=None,
                 allow_self_transitions=False, truncate_days=True, fallback=False,
                 state_values=None):
        self.index = index
        self.m = m
        self.lam = lam
        self.f = f
        self.n_levels = n_levels
        self.backoff_threshold = backoff_threshold
        self.t_max = t_max
        self.initial_value = initial_value
        self.allow_self_transitions = allow_self_transitions
        self.truncate_days = truncate_days
        self.fallback = fallback
        self.state_values = state_values

    def index_config(self):
        lam = self.lam if self.index in ("ewma", "ewma_windowed") else None
        m = self.m if self.index in ("moving_average", "ewma_windowed") else None
        return IndexConfig(self.index, m, lam, self.f, self.initial_value)

    def fit(self, X, y=None):
        series = _as_series(X, self.state_values)
        self.sample_ = extract_mrp(series, self.allow_self_transitions, self.truncate_days)
        self.index_ = compute_index(self.sample_, self.index_config())
        self.grid_ = fit_index_grid(self.index_.values, self.n_levels)
        self.kernel_ = estimate_indexed_kernel(self.sample_, self.index_, self.grid_,
                                               self.t_max, self.backoff_threshold,
                                               self.fallback)
        self.n_states_ = self.kernel_.num_states
        return self

    def transition_function(self, initial_state, horizon, replications=10000,
                            seed=0, history=None):
        """Monte Carlo estimate of ``P[Z(t) = j | Z(0) = initial_state]``."""
        check_is_fitted(self, "kernel_")
        return monte_carlo_transition(self.kernel_, initial_state, horizon,
                                      replications, seed, history=history)

    def sample(self, horizon, seed=0, replications=1, burn_in=None, initial_state=None):
        check_is_fitted(self, "kernel_")
        return self._sample(simulate_indexed, self.kernel_,
                            horizon, seed, replications, burn_in, initial_state)
