"""Autocorrelation diagnostics and calibration sweeps over the index memory.

Autocorrelation at lag ``tau`` uses the standard biased estimator

    Sigma(tau) = sum_t (x_t - mean)(x_{t+tau} - mean) / sum_t (x_t - mean)^2,

which keeps every value in ``[-1, 1]``.  For model comparisons ``x`` is
built from the discretized state values.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .discretization import StateSeries, fit_index_grid
from .exceptions import SemiMarkovError, UsageError, ZeroVarianceError
from .index import IndexConfig, compute_index
from .indexed_kernel import DEFAULT_BACKOFF, estimate_indexed_kernel
from .ingestion import RawReturnSeries
from .simulate import SimulationConfig, expand_to_minutes, simulate_indexed
from .smc import extract_mrp

log = logging.getLogger(__name__)

DEFAULT_MAX_LAG = 100
DEFAULT_LAMBDA_GRID = tuple(np.round(np.arange(0.90, 0.999 + 1e-9, 0.005), 3)) + (0.999,)


@dataclass(frozen=True, eq=False)
class AcfCurve:
    lags: np.ndarray
    values: np.ndarray
    n: int
    kind: str = "squared"
    source: str = "states"
    replications: int = 1

    def band(self):
        """Half-width ``3 / sqrt(N)`` of the white-noise band."""
        return 3.0 / np.sqrt(self.n)

    def at(self, lag):
        return float(self.values[lag - 1])


def _series_values(series):
    if isinstance(series, StateSeries):
        return series.values, series.day_ids(), "states"
    if isinstance(series, RawReturnSeries):
        ids = np.zeros(len(series.values), dtype=np.int64)
        ids[series.day_starts[1:]] = 1
        return np.asarray(series.values, dtype=float), np.cumsum(ids), "raw"
    return np.asarray(series, dtype=float).reshape(-1), None, "raw"


def autocorrelation(x, max_lag, day_ids=None):
    """Autocorrelation of ``x`` at lags ``1..max_lag``.

    With ``day_ids`` only pairs within the same day enter the lagged sums.
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    if max_lag < 1 or n <= max_lag + 1:
        raise UsageError(f"series of length {n} is too short for lag {max_lag}")
    if np.all(x == x[0]):
        raise ZeroVarianceError("series has zero variance")
    xc = x - x.mean()
    c0 = np.dot(xc, xc)
    out = np.empty(max_lag)
    for tau in range(1, max_lag + 1):
        a, b = xc[:-tau], xc[tau:]
        if day_ids is not None:
            same = day_ids[:-tau] == day_ids[tau:]
            a, b = a[same], b[same]
        out[tau - 1] = np.dot(a, b) / c0
    return out


def _acf(series, max_lag, exclude_day_boundaries, transform, kind):
    x, ids, source = _series_values(series)
    values = autocorrelation(transform(x), max_lag,
                             ids if exclude_day_boundaries else None)
    return AcfCurve(np.arange(1, max_lag + 1), values, len(x), kind, source)


def acf_squared(series, max_lag=DEFAULT_MAX_LAG, exclude_day_boundaries=False):
    """Autocorrelation of squared returns (or squared state values)."""
    return _acf(series, max_lag, exclude_day_boundaries, np.square, "squared")


def acf_returns(series, max_lag=DEFAULT_MAX_LAG, exclude_day_boundaries=False):
    """Autocorrelation of the returns themselves."""
    return _acf(series, max_lag, exclude_day_boundaries, lambda x: x, "returns")


def mean_acf(curves):
    """Average several curves on the same lag grid (replication mean)."""
    curves = list(curves)
    first = curves[0]
    for c in curves[1:]:
        if not np.array_equal(c.lags, first.lags):
            raise UsageError("curves have different lag grids")
    values = np.mean([c.values for c in curves], axis=0)
    return AcfCurve(first.lags, values, first.n, first.kind, first.source,
                    sum(c.replications for c in curves))


def mse_acf(real, synth):
    """Mean over lags of the squared difference between two curves."""
    if not np.array_equal(real.lags, synth.lags):
        raise UsageError("curves have different lag grids")
    d = np.asarray(real.values) - np.asarray(synth.values)
    return float(np.mean(d * d))


@dataclass(frozen=True)
class SweepConfig:
    """Settings shared by every point of a calibration sweep."""

    replications: int = 10
    seed: int = 7
    max_lag: int = DEFAULT_MAX_LAG
    n_levels: int = 5
    backoff_threshold: int = DEFAULT_BACKOFF
    t_max: int | None = None
    burn_in: int = 1000
    truncate_days: bool = True
    exclude_day_boundaries: bool = False
    lam: float | None = None  # fixed lambda when sweeping m of ewma_windowed
    n_jobs: int | None = None


@dataclass(frozen=True, eq=False)
class SweepResult:
    param: str
    grid: np.ndarray
    mse: np.ndarray
    seeds: np.ndarray
    replications: int
    errors: tuple = ()
    curves: tuple = ()
    data_curve: AcfCurve | None = None
    meta: dict = field(default_factory=dict)

    @property
    def argmin_index(self):
        return int(np.nanargmin(self.mse))

    @property
    def argmin(self):
        return self.grid[self.argmin_index]


def simulate_indexed_acf(data, icfg, cfg):
    """Fit an indexed chain to ``data`` and return the replication-mean
    autocorrelation of squared simulated states, matched in length."""
    sample = extract_mrp(data, truncate_days=cfg.truncate_days)
    index = compute_index(sample, icfg)
    grid = fit_index_grid(index.values, cfg.n_levels)
    kernel = estimate_indexed_kernel(sample, index, grid, cfg.t_max,
                                     cfg.backoff_threshold)
    sim = SimulationConfig(horizon=len(data), seed=cfg.seed,
                           burn_in=cfg.burn_in, replications=cfg.replications)
    curves = [acf_squared(expand_to_minutes(simulate_indexed(kernel, sim, r)),
                          cfg.max_lag)
              for r in range(cfg.replications)]
    return mean_acf(curves)


def _sweep_point(data, icfg, cfg, target):
    try:
        curve = simulate_indexed_acf(data, icfg, cfg)
    except SemiMarkovError as exc:
        log.warning("sweep point %s failed: %s", icfg, exc)
        return np.nan, None, f"{type(exc).__name__}: {exc}"
    return mse_acf(target, curve), curve, None


def _sweep(data, param, grid, cfg, make_config):
    grid = np.asarray(list(grid), dtype=float)
    if len(grid) == 0:
        raise UsageError("sweep grid is empty")
    target = acf_squared(data, cfg.max_lag, cfg.exclude_day_boundaries)
    configs = [make_config(g) for g in grid]
    if cfg.n_jobs and cfg.n_jobs != 1:
        from joblib import Parallel, delayed
        points = Parallel(n_jobs=cfg.n_jobs)(
            delayed(_sweep_point)(data, c, cfg, target) for c in configs)
    else:
        points = [_sweep_point(data, c, cfg, target) for c in configs]
    mse = np.array([p[0] for p in points])
    return SweepResult(param, grid, mse, np.full(len(grid), cfg.seed),
                       cfg.replications, tuple(p[2] for p in points),
                       tuple(p[1] for p in points), target,
                       {"index_kind": configs[0].kind})


def sweep_m(data, m_grid, cfg=None, kind="moving_average"):
    """MSE between data and simulated squared-return ACFs for each memory
    ``m`` of the moving-average index (or of the windowed EWMA with
    ``cfg.lam``)."""
    cfg = cfg or SweepConfig()
    if kind == "ewma_windowed":
        return _sweep(data, "m", m_grid, cfg,
                      lambda m: IndexConfig("ewma_windowed", m=int(m), lam=cfg.lam))
    return _sweep(data, "m", m_grid, cfg,
                  lambda m: IndexConfig("moving_average", m=int(m)))


def sweep_lambda(data, lam_grid=DEFAULT_LAMBDA_GRID, cfg=None):
    """MSE between data and simulated squared-return ACFs for each EWMA
    weight ``lam``."""
    cfg = cfg or SweepConfig()
    return _sweep(data, "lambda", lam_grid, cfg,
                  lambda lam: IndexConfig("ewma", lam=float(lam)))
