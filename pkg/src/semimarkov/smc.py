"""Discrete-time semi-Markov chains: Markov renewal samples, empirical
kernels, the evolution equation and the backward recurrence time.

Notation follows the usual semi-Markov conventions: ``J[n]`` is the state
entered at the ``n``-th jump, ``T[n]`` the jump time, ``Q[i, j, t]`` the
probability of leaving ``i`` for ``j`` within ``t`` steps.
"""

import hashlib
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ._validation import check_index, check_int, check_time
from .exceptions import ConfigError, DataError, EstimationError, UnobservedRowError, UsageError
from .ingestion import DataWarning


@dataclass(frozen=True, eq=False)
class MarkovRenewalSample:
    """Jump chain ``(J_n, T_n)`` extracted from a minute state series.

    ``segment_starts`` lists the jump indices that open a new observation
    segment (always including 0).  The sojourn preceding a segment start,
    and the last sojourn of the sample, are censored: their end is not a
    transition.  ``end_time`` is the length of the underlying series.
    """

    J: np.ndarray
    T: np.ndarray
    end_time: int
    state_values: np.ndarray
    segment_starts: np.ndarray = None
    allow_self_transitions: bool = False

    def __post_init__(self):
        J = np.asarray(self.J, dtype=np.int64)
        T = np.asarray(self.T, dtype=np.int64)
        if len(J) != len(T) or len(J) == 0:
            raise UsageError("J and T must be non-empty and of equal length")
        if np.any(np.diff(T) <= 0) or T[0] < 0 or T[-1] >= self.end_time:
            raise UsageError("jump times must be strictly increasing within "
                             "[0, end_time)")
        seg = (np.zeros(1, dtype=np.int64) if self.segment_starts is None
               else np.unique(np.concatenate([[0], self.segment_starts])).astype(np.int64))
        object.__setattr__(self, "J", J)
        object.__setattr__(self, "T", T)
        object.__setattr__(self, "segment_starts", seg)
        object.__setattr__(self, "state_values",
                           np.asarray(self.state_values, dtype=float))

    def __len__(self):
        return len(self.J)

    @property
    def num_states(self):
        return len(self.state_values)

    @cached_property
    def completed(self):
        """Indices ``n`` whose sojourn ends with an observed transition."""
        n = np.arange(len(self.J) - 1)
        starts = np.zeros(len(self.J), dtype=bool)
        starts[self.segment_starts] = True
        return n[~starts[1:]]

    def transitions(self):
        """``(from_state, to_state, sojourn)`` arrays of completed sojourns."""
        n = self.completed
        return self.J[n], self.J[n + 1], self.T[n + 1] - self.T[n]

    def sojourns(self):
        """Length of every sojourn, the last one running to ``end_time``."""
        return np.diff(np.append(self.T, self.end_time))

    def last_jump(self, t):
        """``N(t)``, the index of the last jump at or before ``t``."""
        t = check_time(t)
        if t < self.T[0]:
            raise UsageError(f"time {t} precedes the first jump {self.T[0]}")
        return int(np.searchsorted(self.T, t, side="right") - 1)

    def to_states(self):
        """Minute states ``Z(t) = J_{N(t)}`` over ``[T_0, end_time)``."""
        return np.repeat(self.J, self.sojourns())


def extract_mrp(series, allow_self_transitions=False, truncate_days=True):
    """Extract the Markov renewal sample of a :class:`StateSeries`.

    By default a jump is recorded exactly when the state changes, so a
    sojourn is a run of one repeated state.  With ``truncate_days`` every
    day start opens a new segment and a fresh jump.  With
    ``allow_self_transitions`` every minute is a jump epoch.
    """
    s = series.states
    if len(s) == 0:
        raise DataError("cannot extract jumps from an empty series")
    starts = np.zeros(len(s), dtype=bool)
    starts[0] = True
    if truncate_days:
        starts[series.day_starts] = True
    if allow_self_transitions:
        jump = np.ones(len(s), dtype=bool)
    else:
        jump = starts.copy()
        jump[1:] |= s[1:] != s[:-1]
    pos = np.flatnonzero(jump)
    seg = np.flatnonzero(starts[pos])
    if len(pos) - len(seg) == 0:
        warnings.warn("state series has no transitions", DataWarning, stacklevel=2)
    return MarkovRenewalSample(s[pos], pos, len(s), series.state_values, seg,
                               allow_self_transitions)


class SemiMarkovKernel:
    """Discrete semi-Markov kernel ``Q[i, j, t]`` for ``t = 0..t_max``.

    Build it with :func:`estimate_kernel` (from counts) or
    :meth:`from_probabilities`.  Rows without any observed exit are
    unobserved; using them raises :class:`UnobservedRowError` unless
    ``fallback`` is set, in which case they jump after one step uniformly
    to the other states.
    """

    def __init__(self, Q, observed=None, counts=None, state_values=None,
                 allow_self_transitions=False, fallback=False):
        Q = np.asarray(Q, dtype=float)
        if Q.ndim != 3 or Q.shape[0] != Q.shape[1] or Q.shape[2] < 2:
            raise ConfigError(f"kernel must have shape (S, S, t_max+1), got {Q.shape}")
        S = Q.shape[0]
        self.num_states = S
        self.t_max = Q.shape[2] - 1
        self.counts = None if counts is None else np.asarray(counts, dtype=np.int64)
        self.observed = (np.ones(S, dtype=bool) if observed is None
                         else np.asarray(observed, dtype=bool))
        self.state_values = (np.arange(S, dtype=float) - S // 2
                             if state_values is None
                             else np.asarray(state_values, dtype=float))
        self.allow_self_transitions = bool(allow_self_transitions)
        self.fallback = bool(fallback)
        self._Q = Q
        if np.any(Q[:, :, 0] != 0) or np.any(np.diff(Q, axis=2) < -1e-15):
            raise ConfigError("kernel must vanish at t=0 and be non-decreasing")
        tot = Q[self.observed, :, -1].sum(axis=1)
        if np.any(np.abs(tot - 1) > 1e-9):
            raise ConfigError("observed kernel rows must have total mass 1")

    @classmethod
    def from_counts(cls, counts, **kwargs):
        """Empirical kernel from transition counts ``counts[i, j, t]``."""
        counts = np.asarray(counts, dtype=np.int64)
        exits = counts.sum(axis=(1, 2))
        observed = exits > 0
        Q = np.zeros(counts.shape)
        Q[observed] = (np.cumsum(counts[observed], axis=2)
                       / exits[observed, None, None])
        return cls(Q, observed, counts, **kwargs)

    @classmethod
    def from_probabilities(cls, p, sojourn_pmf, **kwargs):
        """Kernel ``Q_ij(t) = p_ij * sum_{s<=t} g_ij(s)``.

        ``sojourn_pmf[i, j, s]`` is the probability of a sojourn of ``s``
        steps (``s = 0..t_max``, zero at ``s = 0``) given the pair.
        """
        p = np.asarray(p, dtype=float)
        g = np.asarray(sojourn_pmf, dtype=float)
        if np.any(p < 0) or np.any(np.abs(p.sum(axis=1) - 1) > 1e-12):
            raise ConfigError("embedded transition matrix must be row-stochastic")
        if np.any(g < 0) or np.any(g[:, :, 0] != 0):
            raise ConfigError("sojourn pmf must be non-negative with no mass at 0")
        used = p > 0
        if np.any(np.abs(g[used].sum(axis=-1) - 1) > 1e-12):
            raise ConfigError("sojourn pmf must sum to one for every used pair")
        return cls(p[:, :, None] * np.cumsum(g, axis=2), **kwargs)

    def _fallback_Q(self, i):
        S, row = self.num_states, np.zeros((self.num_states, self.t_max + 1))
        targets = [j for j in range(S) if j != i or S == 1
                   or self.allow_self_transitions]
        row[targets, 1:] = 1.0 / len(targets)
        return row

    @cached_property
    def Q(self):
        """Kernel array; unusable rows are all zero."""
        Q = self._Q.copy()
        if self.fallback:
            for i in np.flatnonzero(~self.observed):
                Q[i] = self._fallback_Q(i)
        Q.setflags(write=False)
        return Q

    @cached_property
    def usable(self):
        return self.observed | self.fallback

    def require_rows(self, rows=None):
        rows = range(self.num_states) if rows is None else rows
        for i in rows:
            if not self.usable[i]:
                raise UnobservedRowError(i)

    def _row(self, i):
        i = check_index(i, self.num_states, "state")
        if not self.usable[i]:
            raise UnobservedRowError(i)
        return i

    @property
    def p(self):
        """Embedded transition matrix ``p_ij = Q_ij(t_max)``."""
        return self.Q[:, :, -1]

    @cached_property
    def b(self):
        """``b[i, j, t] = Q_ij(t) - Q_ij(t-1)`` with ``b[..., 0] = 0``."""
        b = np.zeros_like(self.Q)
        b[:, :, 1:] = np.diff(self.Q, axis=2)
        return b

    @cached_property
    def H(self):
        """Sojourn-time CDF ``H[i, t] = sum_j Q_ij(t)``."""
        return self.Q.sum(axis=1)

    @cached_property
    def G(self):
        """Conditional sojourn CDF ``G_ij(t) = Q_ij(t) / p_ij``, 1 if ``p_ij = 0``."""
        p = self.p[:, :, None]
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(p != 0, self.Q / np.where(p != 0, p, 1.0), 1.0)

    def b_of(self, i, j, t):
        i = self._row(i)
        j = check_index(j, self.num_states, "state")
        return float(self.b[i, j, check_time(t, self.t_max)])

    def H_of(self, i, t):
        return float(self.H[self._row(i), check_time(t, self.t_max)])

    def survival_of(self, i, t):
        """``1 - H_i(t)``, the probability of staying in ``i`` beyond ``t``."""
        return 1.0 - self.H_of(i, t)

    def G_of(self, i, j, t):
        i = self._row(i)
        j = check_index(j, self.num_states, "state")
        return float(self.G[i, j, check_time(t, self.t_max)])

    def fingerprint(self):
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.Q).tobytes())
        h.update(np.ascontiguousarray(self.state_values).tobytes())
        h.update(bytes([self.allow_self_transitions, self.fallback]))
        return h.hexdigest()


def b_of(kernel, i, j, t):
    return kernel.b_of(i, j, t)


def H_of(kernel, i, t):
    return kernel.H_of(i, t)


def G_of(kernel, i, j, t):
    return kernel.G_of(i, j, t)


def estimate_kernel(sample, t_max=None, fallback=False):
    """Empirical kernel: the fraction of exits from ``i`` that go to ``j``
    after at most ``t`` steps.  Censored sojourns are discarded.

    ``t_max`` defaults to the longest observed sojourn.
    """
    src, dst, w = sample.transitions()
    if len(src) == 0:
        raise EstimationError("sample has no completed transition")
    longest = int(w.max())
    t_max = max(longest, 1) if t_max is None else check_int(t_max, "t_max", 1)
    if t_max < longest:
        raise ConfigError(f"t_max={t_max} is shorter than the longest observed "
                          f"sojourn ({longest})")
    S = sample.num_states
    counts = np.zeros((S, S, t_max + 1), dtype=np.int64)
    np.add.at(counts, (src, dst, w), 1)
    return SemiMarkovKernel.from_counts(
        counts, state_values=sample.state_values,
        allow_self_transitions=sample.allow_self_transitions, fallback=fallback)


@dataclass(frozen=True, eq=False)
class TransitionProbabilityTable:
    """``phi[t, i, j] = P[Z(t) = j | Z(0) = i]`` with a jump at time 0."""

    phi: np.ndarray

    @property
    def horizon(self):
        return self.phi.shape[0] - 1

    def at(self, i, j, t):
        return float(self.phi[t, i, j])


def solve_evolution(kernel, horizon):
    """Solve the discrete evolution equation forward in time.

    ``phi_ij(t) = delta_ij (1 - H_i(t))
    + sum_k sum_{tau=1..t} b_ik(tau) phi_kj(t - tau)``.
    Beyond the kernel horizon ``b = 0`` and ``H = 1``.
    """
    horizon = check_int(horizon, "horizon", 0)
    kernel.require_rows()
    S, K = kernel.num_states, kernel.t_max
    B = np.moveaxis(kernel.b, 2, 0)  # B[tau, i, k]
    H = kernel.H
    phi = np.zeros((horizon + 1, S, S))
    eye = np.eye(S)
    for t in range(horizon + 1):
        survive = 1.0 - H[:, t] if t <= K else np.zeros(S)
        acc = eye * survive[:, None]
        span = min(t, K)
        if span:
            acc = acc + np.einsum("tik,tkj->ij", B[1:span + 1],
                                  phi[t - span:t][::-1])
        phi[t] = acc
    return TransitionProbabilityTable(phi)


def backward_recurrence(sample, t):
    """``B(t) = t - T_{N(t)}``, the time elapsed since the last jump."""
    return int(t - sample.T[sample.last_jump(t)])
