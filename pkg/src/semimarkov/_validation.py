"""Input validation helpers shared by the estimators and functions."""

import numbers

import numpy as np

from .exceptions import ConfigError, UsageError


def check_int(value, name, minimum=None):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    value = int(value)
    if minimum is not None and value < minimum:
        raise ConfigError(f"{name} must be >= {minimum}, got {value}")
    return value


def check_lambda(lam):
    if lam is None or not (0.0 < float(lam) <= 1.0):
        raise ConfigError(f"lambda must lie in (0, 1], got {lam!r}")
    return float(lam)


def check_state_labels(states, num_states=None):
    """Return ``states`` as a 1-D int64 array of non-negative labels."""
    arr = np.asarray(states)
    if arr.ndim != 1:
        raise UsageError(f"state series must be 1-D, got shape {arr.shape}")
    if arr.size and not np.issubdtype(arr.dtype, np.integer):
        if not np.all(np.mod(arr, 1) == 0):
            raise UsageError("state labels must be integers")
    arr = arr.astype(np.int64, copy=False)
    if arr.size and arr.min() < 0:
        raise UsageError("state labels must be non-negative")
    if num_states is not None and arr.size and arr.max() >= num_states:
        raise UsageError(
            f"state label {arr.max()} out of range for {num_states} states")
    return arr


def check_day_starts(day_starts, length):
    """Normalise day start offsets: sorted, unique, starting at 0."""
    if day_starts is None:
        return np.zeros(1 if length else 0, dtype=np.int64)
    ds = np.unique(np.asarray(day_starts, dtype=np.int64))
    if ds.size and (ds[0] < 0 or ds[-1] >= max(length, 1)):
        raise UsageError("day start offsets out of range")
    if length and (ds.size == 0 or ds[0] != 0):
        ds = np.concatenate([[0], ds])
    return ds


def check_index(value, size, name):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise UsageError(f"{name} must be an integer, got {value!r}")
    if not 0 <= value < size:
        raise UsageError(f"{name}={value} out of range [0, {size})")
    return int(value)


def check_time(t, t_max=None):
    if isinstance(t, bool) or not isinstance(t, numbers.Integral) or t < 0:
        raise UsageError(f"time must be a non-negative integer, got {t!r}")
    if t_max is not None and t > t_max:
        raise UsageError(f"time {t} exceeds kernel horizon {t_max}")
    return int(t)
