"""Seeded Monte Carlo simulation of plain and indexed semi-Markov chains.

Each step consumes exactly two uniforms from the replication's stream:
the first picks the next state by inverse CDF over the embedded row (states
in index order), the second picks the sojourn by inverse CDF over ``G``.
A trajectory is therefore fully determined by the kernel and the seed.
"""

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from ._rng import GENERATOR_ID, replication_rng
from ._validation import check_int, check_state_labels
from .discretization import StateSeries
from .exceptions import UnobservedRowError, UsageError
from .index import _ewma_step, _ewma_window_at, _ma_at
from .indexed_kernel import IndexedKernel

DEFAULT_INDEX_BURN_IN = 1000


@dataclass(frozen=True)
class SimulationConfig:
    """Monte Carlo settings.

    ``burn_in`` minutes are simulated and discarded before the clock starts;
    ``None`` means 0 for plain chains and 1000 for indexed chains.  An
    explicit ``history`` ``(states, times)`` replaces the burn-in: it is
    taken as the jumps preceding time 0, the last one at time 0.
    """

    horizon: int
    seed: int = 0
    initial_state: int | None = None
    burn_in: int | None = None
    replications: int = 1
    history: tuple | None = None

    def __post_init__(self):
        check_int(self.horizon, "horizon", 1)
        check_int(self.replications, "replications", 1)
        check_int(self.seed, "seed", 0)
        if self.burn_in is not None:
            check_int(self.burn_in, "burn_in", 0)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Visited states and jump times on ``[0, horizon)``."""

    J: np.ndarray
    T: np.ndarray
    horizon: int
    state_values: np.ndarray
    seed: int = 0
    replication: int = 0
    kernel_fingerprint: str = ""
    generator: str = GENERATOR_ID
    index_values: np.ndarray | None = None
    levels: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.J)


@njit(cache=True)
def _pick(cum, u):
    k = len(cum)
    for j in range(k):
        if u < cum[j]:
            return j
    # rounding left the total just below 1: take the last state with mass
    for j in range(k - 1, -1, -1):
        prev = cum[j - 1] if j > 0 else 0.0
        if cum[j] > prev:
            return j
    return k - 1


@njit(cache=True)
def _first_reaching(cdf, u):
    for t in range(1, len(cdf)):
        if u < cdf[t]:
            return t
    return len(cdf) - 1


@njit(cache=True)
def _run(p_cum, g_cdf, usable, thresholds, kind, fvals, m, lam, init,
         J, T, U, V, n0, t_end, u):
    """Advance from jump ``n0`` until the next jump would reach ``t_end``.

    Returns ``(n_jumps, bad_state)`` with ``bad_state = -1`` on success.
    """
    n_pre = n0 + 1
    fj = np.empty(len(J))
    for k in range(n_pre):
        fj[k] = fvals[J[k]]
    S = 0.0
    D = 0.0
    if kind == 1:
        for k in range(1, n_pre):
            S, D = _ewma_step(S, D, fj[k - 1], T[k] - T[k - 1], lam)
    n = n0
    draw = 0
    while True:
        i = J[n]
        v = 0
        if kind >= 0:
            if n == 0:
                Un = init
            elif kind == 0:
                Un = _ma_at(fj, T, n, m)
            elif kind == 1:
                if n >= n_pre:
                    S, D = _ewma_step(S, D, fj[n - 1], T[n] - T[n - 1], lam)
                Un = S / D
            else:
                Un = _ewma_window_at(fj, T, n, m, lam)
            U[n] = Un
            v = np.searchsorted(thresholds, Un, side="right")
            V[n] = v
        if not usable[i, v]:
            return n + 1, i
        j = _pick(p_cum[i, v], u[draw])
        w = _first_reaching(g_cdf[i, v, j], u[draw + 1])
        draw += 2
        t_next = T[n] + w
        if t_next >= t_end:
            return n + 1, -1
        n += 1
        J[n] = j
        T[n] = t_next
        fj[n] = fvals[j]


class _Sampler:
    """Arrays of a plain or indexed kernel laid out for :func:`_run`."""

    def __init__(self, kernel, index_config=None):
        if isinstance(kernel, IndexedKernel):
            cfg = index_config or kernel.index_config
            if cfg.initial_value is None:
                cfg = kernel.index_config
            Q, usable = kernel.Q, kernel.usable
            self.thresholds = kernel.grid.thresholds
            self.kind = cfg.code
            self.m = cfg.m or 1
            self.lam = cfg.lam or 1.0
            self.init = float(cfg.initial_value if cfg.initial_value is not None
                              else kernel.index_config.initial_value)
            self.fvals = cfg.reward(kernel.state_values)
        else:
            Q, usable = kernel.Q[:, None], kernel.usable[:, None]
            self.thresholds = np.empty(0)
            self.kind, self.m, self.lam, self.init = -1, 1, 1.0, 0.0
            self.fvals = np.zeros(kernel.num_states)
        p = Q[..., -1]
        self.p_cum = np.cumsum(p, axis=-1)
        with np.errstate(invalid="ignore", divide="ignore"):
            self.g_cdf = np.where(p[..., None] != 0,
                                  Q / np.where(p != 0, p, 1.0)[..., None], 1.0)
        self.usable = np.ascontiguousarray(usable)
        self.num_states = kernel.num_states
        self.state_values = kernel.state_values
        self.fingerprint = kernel.fingerprint()

    def run(self, prefix_J, prefix_T, t_end, u):
        size = len(prefix_J) + t_end + 1
        J = np.empty(size, dtype=np.int64)
        T = np.empty(size, dtype=np.int64)
        U = np.full(size, np.nan)
        V = np.full(size, -1, dtype=np.int64)
        n0 = len(prefix_J) - 1
        J[:n0 + 1] = prefix_J
        T[:n0 + 1] = prefix_T
        n, bad = _run(self.p_cum, self.g_cdf, self.usable, self.thresholds,
                      self.kind, self.fvals, self.m, self.lam, self.init,
                      J, T, U, V, n0, t_end, u)
        if bad >= 0:
            raise UnobservedRowError(int(bad))
        return J[:n], T[:n], U[:n], V[:n]


def _simulate(kernel, cfg, replication, index_config=None):
    sampler = _Sampler(kernel, index_config)
    indexed = sampler.kind >= 0
    if cfg.history is not None:
        hJ = check_state_labels(cfg.history[0], sampler.num_states)
        hT = np.asarray(cfg.history[1], dtype=np.int64)
        if len(hJ) != len(hT) or len(hJ) == 0 or np.any(np.diff(hT) <= 0):
            raise UsageError("history needs matching, strictly increasing jumps")
        prefix_J, prefix_T, burn = hJ, hT - hT[-1], 0
    else:
        j0 = sampler.num_states // 2 if cfg.initial_state is None else cfg.initial_state
        j0 = check_state_labels([j0], sampler.num_states)[0]
        burn = cfg.burn_in if cfg.burn_in is not None else (
            DEFAULT_INDEX_BURN_IN if indexed else 0)
        prefix_J, prefix_T = np.array([j0]), np.array([0])
    t_end = burn + cfg.horizon
    u = replication_rng(cfg.seed, replication).random(2 * (t_end + 1))
    J, T, U, V = sampler.run(prefix_J, prefix_T, t_end, u)
    first = int(np.searchsorted(T, burn, side="right") - 1)
    J, T, U, V = J[first:], T[first:] - burn, U[first:], V[first:]
    T = T.copy()
    T[0] = 0
    return Trajectory(J, T, cfg.horizon, sampler.state_values, cfg.seed,
                      replication, sampler.fingerprint, GENERATOR_ID,
                      U if indexed else None, V if indexed else None,
                      {"burn_in": burn})


def simulate_smc(kernel, cfg, replication=0):
    """Simulate one trajectory of a plain semi-Markov chain.

    Steps: ``J_0 = i, T_0 = 0``; draw ``J_{n+1}`` from ``p[J_n]``; draw the
    sojourn ``W`` from ``G[J_n, J_{n+1}]``; stop once ``T_n + W`` reaches
    the horizon.
    """
    return _simulate(kernel, cfg, replication)


def simulate_indexed(kernel, cfg, replication=0, index_config=None):
    """Simulate one trajectory of an indexed chain.

    At every jump the index is recomputed from the simulated history, mapped
    to its level, and the next state and sojourn are drawn from that level's
    kernel row.  The index value and level of each jump are recorded.
    """
    if not isinstance(kernel, IndexedKernel):
        raise UsageError("simulate_indexed needs an IndexedKernel")
    return _simulate(kernel, cfg, replication, index_config)


def simulate_replications(kernel, cfg, n_jobs=None):
    """All ``cfg.replications`` trajectories; replication ``r`` uses its own
    stream derived from ``(cfg.seed, r)``."""
    reps = range(cfg.replications)
    if n_jobs and n_jobs != 1:
        from joblib import Parallel, delayed
        return Parallel(n_jobs=n_jobs, prefer="threads")(
            delayed(_simulate)(kernel, cfg, r) for r in reps)
    return [_simulate(kernel, cfg, r) for r in reps]


def expand_to_minutes(traj, horizon=None):
    """Minute states ``Z(t) = J_{N(t)}`` for ``t = 0..horizon-1``."""
    horizon = traj.horizon if horizon is None else horizon
    keep = traj.T < horizon
    J, T = traj.J[keep], traj.T[keep]
    states = np.repeat(J, np.diff(np.append(T, horizon)))
    return StateSeries(states, traj.state_values)


@njit(cache=True)
def _tally(J, T, horizon, counts):
    n = len(J)
    for k in range(n):
        stop = T[k + 1] if k + 1 < n else horizon
        for t in range(T[k], min(stop, horizon)):
            counts[t, J[k]] += 1


def monte_carlo_transition(kernel, initial_state, horizon, replications,
                           seed=0, index_config=None, history=None):
    """Monte Carlo estimate of ``P[Z(t) = j | Z(0) = i]`` for ``t = 0..horizon``.

    Works for plain and indexed kernels; for indexed kernels it is the only
    available estimate of the transition function.  Replication ``r`` uses
    the stream of ``(seed, r)`` and starts with a jump at time 0 (after the
    optional ``history``).
    """
    replications = check_int(replications, "replications", 1)
    sampler = _Sampler(kernel, index_config)
    if history is not None:
        prefix_J = check_state_labels(history[0], sampler.num_states)
        prefix_T = np.asarray(history[1], dtype=np.int64)
        prefix_T = prefix_T - prefix_T[-1]
        if prefix_J[-1] != initial_state:
            raise UsageError("history must end in the initial state")
    else:
        prefix_J = np.array([initial_state], dtype=np.int64)
        prefix_T = np.array([0], dtype=np.int64)
    n_pre = len(prefix_J) - 1
    counts = np.zeros((horizon + 1, sampler.num_states), dtype=np.int64)
    for r in range(replications):
        u = replication_rng(seed, r).random(2 * (horizon + 2))
        J, T, _, _ = sampler.run(prefix_J, prefix_T, horizon + 1, u)
        _tally(J[n_pre:], T[n_pre:], horizon + 1, counts)
    return counts / replications
