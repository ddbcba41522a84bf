"""Volatility index processes built on a Markov renewal sample.

Three kinds are supported, all with a time-independent reward rate
``f(J)`` (default: the squared state value):

``moving_average``
    ``U_n`` is the duration-weighted average of ``f`` over the last
    ``m + 1`` sojourns, normalised by the span ``T_n - T_{n-(m+1)}``.
``ewma``
    ``U_n`` is the exponentially weighted average of ``f`` over every past
    minute ``a < T_n`` with weight ``lam ** (T_n - a)``.
``ewma_windowed``
    As ``ewma`` but restricted to the minutes of the last ``m`` sojourns.

``U_0`` is the fixed pre-sample value ``initial_value``.  Before a full
window of history exists the window is truncated at ``T_0``.  Integrals
over time are sums over whole minutes.
"""

from dataclasses import dataclass, replace

import numpy as np
from numba import njit

from ._validation import check_int, check_lambda
from .exceptions import ConfigError, UsageError

REWARD_FUNCTIONS = {
    "squared": np.square,
    "absolute": np.abs,
}

KINDS = ("moving_average", "ewma", "ewma_windowed")
_KIND_CODE = {k: c for c, k in enumerate(KINDS)}


@dataclass(frozen=True)
class IndexConfig:
    kind: str = "ewma"
    m: int | None = None
    lam: float | None = None
    f_id: str = "squared"
    initial_value: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown index kind {self.kind!r}; expected one of {KINDS}")
        if self.kind in ("moving_average", "ewma_windowed"):
            object.__setattr__(self, "m", check_int(self.m, "m", 1))
        if self.kind in ("ewma", "ewma_windowed"):
            object.__setattr__(self, "lam", check_lambda(self.lam))
        if self.f_id not in REWARD_FUNCTIONS:
            raise ConfigError(f"unknown reward function {self.f_id!r}")
        if self.initial_value is not None and not np.isfinite(self.initial_value):
            raise ConfigError("initial_value must be finite")

    def reward(self, state_values):
        return REWARD_FUNCTIONS[self.f_id](np.asarray(state_values, dtype=float))

    @property
    def code(self):
        return _KIND_CODE[self.kind]

    def resolved(self, sample):
        """Fill in ``initial_value`` with the sample's time-average of ``f``."""
        if self.initial_value is not None:
            return self
        f = self.reward(sample.state_values)[sample.to_states()]
        return replace(self, initial_value=float(f.mean()))

    def to_dict(self):
        return {"kind": self.kind, "m": self.m, "lam": self.lam,
                "f_id": self.f_id, "initial_value": self.initial_value}


@dataclass(frozen=True, eq=False)
class IndexSeries:
    """Index values ``U_n`` at the jump epochs of a sample.

    ``minutes`` optionally holds ``U(t)`` for ``t = T_0 .. end_time - 1``.
    """

    values: np.ndarray
    config: IndexConfig
    minutes: np.ndarray | None = None

    def __len__(self):
        return len(self.values)


@njit(cache=True)
def _geom(lam, w):
    # sum_{i=1..w} lam**i
    if lam == 1.0:
        return float(w)
    return lam * (1.0 - lam ** w) / (1.0 - lam)


@njit(cache=True)
def _ma_at(fj, T, n, m):
    last = min(m, n - 1)
    num = 0.0
    for k in range(last + 1):
        i = n - 1 - k
        num += fj[i] * (T[i + 1] - T[i])
    return num / (T[n] - T[n - 1 - last])


@njit(cache=True)
def _ewma_window_at(fj, T, n, m, lam):
    num = 0.0
    den = 0.0
    for k in range(min(m, n)):
        i = n - 1 - k
        wt = lam ** (T[n] - T[i + 1]) * _geom(lam, T[i + 1] - T[i])
        num += fj[i] * wt
        den += wt
    return num / den


@njit(cache=True)
def _ewma_step(S, D, f, w, lam):
    lw = lam ** w
    g = _geom(lam, w)
    return lw * S + f * g, lw * D + g


@njit(cache=True)
def _index_at_jumps(kind, fj, T, m, lam, init):
    n_jumps = len(T)
    out = np.empty(n_jumps)
    out[0] = init
    S = 0.0
    D = 0.0
    for n in range(1, n_jumps):
        if kind == 0:
            out[n] = _ma_at(fj, T, n, m)
        elif kind == 1:
            S, D = _ewma_step(S, D, fj[n - 1], T[n] - T[n - 1], lam)
            out[n] = S / D
        else:
            out[n] = _ewma_window_at(fj, T, n, m, lam)
    return out


@njit(cache=True)
def _index_minutes(kind, fj, T, end, m, lam, init, jump_values):
    t0 = T[0]
    out = np.empty(end - t0)
    n_jumps = len(T)
    # scratch arrays hold the sample truncated at a virtual jump at t
    vT = np.empty(n_jumps + 1, dtype=np.int64)
    vT[:n_jumps] = T
    S = 0.0
    D = 0.0
    for n in range(n_jumps):
        stop = T[n + 1] if n + 1 < n_jumps else end
        out[T[n] - t0] = jump_values[n]
        if kind == 1 and n > 0:
            S, D = _ewma_step(S, D, fj[n - 1], T[n] - T[n - 1], lam)
        for t in range(T[n] + 1, stop):
            if kind == 1:
                s1, d1 = _ewma_step(S, D, fj[n], t - T[n], lam)
                out[t - t0] = s1 / d1
            else:
                vT[n + 1] = t
                if kind == 0:
                    out[t - t0] = _ma_at(fj, vT, n + 1, m)
                else:
                    out[t - t0] = _ewma_window_at(fj, vT, n + 1, m, lam)
        if n + 1 < n_jumps:
            vT[n + 1] = T[n + 1]
    return out


def _jump_rewards(sample, cfg):
    return cfg.reward(sample.state_values)[sample.J]


def _params(cfg):
    return (cfg.m if cfg.m is not None else 1,
            cfg.lam if cfg.lam is not None else 1.0)


def compute_index(sample, cfg, minutes=False):
    """Index values at every jump epoch of ``sample`` (any kind)."""
    cfg = cfg.resolved(sample)
    m, lam = _params(cfg)
    fj = _jump_rewards(sample, cfg)
    values = _index_at_jumps(cfg.code, fj, sample.T, m, lam, cfg.initial_value)
    minute_values = None
    if minutes:
        minute_values = _index_minutes(cfg.code, fj, sample.T, sample.end_time,
                                       m, lam, cfg.initial_value, values)
    return IndexSeries(values, cfg, minute_values)


def _require_kind(cfg, kind):
    if cfg.kind != kind:
        raise ConfigError(f"expected an index config of kind {kind!r}, got {cfg.kind!r}")


def index_ma(sample, cfg):
    """Moving average of the reward over the last ``m + 1`` sojourns."""
    _require_kind(cfg, "moving_average")
    return compute_index(sample, cfg)


def index_ewma(sample, cfg):
    """Exponentially weighted average of the reward over all past minutes."""
    _require_kind(cfg, "ewma")
    return compute_index(sample, cfg)


def index_ewma_windowed(sample, cfg):
    """EWMA restricted to the last ``m`` sojourns."""
    _require_kind(cfg, "ewma_windowed")
    return compute_index(sample, cfg)


def index_at_time(sample, cfg, t):
    """Index value ``U(t)`` at an arbitrary minute ``t``.

    At a jump epoch ``t = T_n`` this is ``U_n``.  Inside a sojourn the
    running sojourn contributes its minutes up to ``t - 1``, as if a jump
    happened at ``t``; for ``moving_average`` that window holds the running
    sojourn plus the ``m`` before it.
    """
    cfg = cfg.resolved(sample)
    n = sample.last_jump(t)
    if t >= sample.end_time:
        raise UsageError(f"time {t} is beyond the sample end {sample.end_time}")
    m, lam = _params(cfg)
    fj = _jump_rewards(sample, cfg)
    if t == sample.T[n]:
        T = sample.T[:n + 1]
        return float(_index_at_jumps(cfg.code, fj[:n + 1], T, m, lam,
                                     cfg.initial_value)[-1])
    T = np.append(sample.T[:n + 1], t)
    return float(_index_at_jumps(cfg.code, fj[:n + 2], T, m, lam,
                                 cfg.initial_value)[-1])
