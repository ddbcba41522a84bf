"""Synthetic state series from explicit kernels.

``known-kernel`` draws from a given plain kernel.  ``clustered-wismc``
draws from a two-level EWMA-indexed kernel on five states
``{-2, -1, 0, 1, 2} * delta``: in the high level the rows put more mass on
the outer states and calm (zero-return) sojourns are short, so high index
values feed themselves and volatility clusters.  Non-zero states always
last one minute and every row is symmetric in sign, which keeps the
returns uncorrelated.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .discretization import IndexGrid, StateSeries
from .exceptions import ConfigError
from .index import IndexConfig
from .indexed_kernel import IndexedKernel
from .ingestion import DataWarning
from .simulate import SimulationConfig, expand_to_minutes, simulate_indexed, simulate_smc
from .smc import SemiMarkovKernel

GENERATOR_KINDS = ("known-kernel", "clustered-wismc")


@dataclass(frozen=True)
class SyntheticGeneratorSpec:
    kind: str
    horizon: int
    seed: int = 0
    kernel: SemiMarkovKernel | None = None
    lam: float = 0.97
    threshold: float = 0.8
    delta: float = 1.0
    burn_in: int = 1000

    def __post_init__(self):
        if self.kind not in GENERATOR_KINDS:
            raise ConfigError(f"unknown generator kind {self.kind!r}")
        if self.kind == "known-kernel" and self.kernel is None:
            raise ConfigError("known-kernel generator needs a kernel")
        if self.horizon < 0:
            raise ConfigError("horizon must be non-negative")


def _geometric_pmf(mean, t_max):
    q = 1.0 - 1.0 / mean
    pmf = np.zeros(t_max + 1)
    pmf[1:] = (1 - q) * q ** np.arange(t_max)
    pmf[t_max] += 1.0 - pmf.sum()
    return pmf


# rows: destination masses for magnitudes (0, 1, 2), split evenly by sign
_ROWS = {
    "low": {0: (0.0, 0.84, 0.16), 1: (0.80, 0.0, 0.20), 2: (0.70, 0.30, 0.0)},
    "high": {0: (0.0, 0.602, 0.398), 1: (0.52, 0.0, 0.48), 2: (0.42, 0.58, 0.0)},
}
_CALM_SOJOURN_MEAN = {"low": 4.0, "high": 2.25}
T_MAX = 30


def _level_rows(level):
    values = np.arange(-2, 3)
    p = np.zeros((5, 5))
    for i, vi in enumerate(values):
        masses = _ROWS[level][abs(vi)]
        for j, vj in enumerate(values):
            mag = abs(vj)
            p[i, j] = masses[mag] if mag == 0 else masses[mag] / 2
    g = np.zeros((5, 5, T_MAX + 1))
    g[:, :, 1] = 1.0
    g[2, :, :] = _geometric_pmf(_CALM_SOJOURN_MEAN[level], T_MAX)
    return p, g


def clustered_wismc_kernel(lam=0.97, threshold=0.8, delta=1.0):
    """The two-level EWMA-indexed kernel used by ``clustered-wismc``.

    ``threshold`` splits the index (mean squared state, in units of
    ``delta**2``) into the low and the high level.
    """
    p_low, g_low = _level_rows("low")
    p_high, g_high = _level_rows("high")
    p = np.stack([p_low, p_high], axis=1)
    g = np.stack([g_low, g_high], axis=1)
    values = np.arange(-2, 3) * float(delta)
    grid = IndexGrid(np.array([threshold * delta ** 2]))
    cfg = IndexConfig("ewma", lam=lam, initial_value=float(threshold * delta ** 2))
    return IndexedKernel.from_probabilities(p, g, grid, cfg, state_values=values)


def generate_synthetic(spec):
    """Generate a minute state series of length ``spec.horizon``."""
    if spec.horizon == 0:
        warnings.warn("zero-length horizon: empty series", DataWarning, stacklevel=2)
        values = (spec.kernel.state_values if spec.kernel is not None
                  else np.arange(-2, 3) * float(spec.delta))
        return StateSeries(np.array([], dtype=np.int64), values)
    if spec.kind == "known-kernel":
        cfg = SimulationConfig(spec.horizon, spec.seed, burn_in=0)
        traj = simulate_smc(spec.kernel, cfg)
    else:
        kernel = clustered_wismc_kernel(spec.lam, spec.threshold, spec.delta)
        cfg = SimulationConfig(spec.horizon, spec.seed, burn_in=spec.burn_in)
        traj = simulate_indexed(kernel, cfg)
    return expand_to_minutes(traj)
