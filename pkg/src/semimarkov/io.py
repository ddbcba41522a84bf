"""Versioned text persistence for every pipeline artifact.

Each file starts with a header line ``# semimarkov <kind> v<version>``
followed by one ``# {json}`` metadata line; the body is comma-separated
rows.  Floats are written with ``repr`` so that write -> read -> write is
byte-identical, and readers reject unknown kinds and versions.
"""

import datetime as dt
import hashlib
import json
import os
import re

import numpy as np

from .diagnostics import AcfCurve, SweepResult
from .discretization import IndexGrid, ReturnGrid, StateSeries
from .exceptions import FormatVersionError, InputError
from .index import IndexConfig, IndexSeries
from .indexed_kernel import IndexedKernel
from .ingestion import DayPrices, PriceSeries
from .smc import MarkovRenewalSample, SemiMarkovKernel

FORMAT_VERSION = 1
_HEADER = re.compile(r"^# semimarkov (\S+) v(\d+)$")


def _f(x):
    return repr(float(x))


def _dumps(meta):
    return json.dumps(meta, sort_keys=True, separators=(",", ":"))


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write(path, kind, meta, rows):
    with open(path, "w", newline="\n") as fh:
        fh.write(f"# semimarkov {kind} v{FORMAT_VERSION}\n")
        fh.write(f"# {_dumps(meta)}\n")
        for row in rows:
            fh.write(row)
            fh.write("\n")
    return path


def _read(path, kind):
    try:
        with open(path) as fh:
            lines = fh.read().split("\n")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    m = _HEADER.match(lines[0]) if lines else None
    if m is None:
        raise InputError(f"{path}: not a semimarkov artifact")
    if m.group(1) != kind:
        raise InputError(f"{path}: expected a {kind} file, found {m.group(1)}")
    if int(m.group(2)) != FORMAT_VERSION:
        raise FormatVersionError(f"{path}: unsupported {kind} format version "
                                 f"{m.group(2)} (this build reads v{FORMAT_VERSION})")
    if len(lines) < 2 or not lines[1].startswith("# "):
        raise InputError(f"{path}: missing metadata line")
    try:
        meta = json.loads(lines[1][2:])
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: bad metadata: {exc}") from exc
    body = [ln for ln in lines[2:] if ln]
    return meta, body


def _table(body, path, columns, dtypes):
    """Parse the CSV body (first line is the column header)."""
    if not body or body[0] != ",".join(columns):
        raise InputError(f"{path}: expected columns {','.join(columns)}")
    out = [[] for _ in columns]
    try:
        for ln in body[1:]:
            parts = ln.split(",")
            if len(parts) != len(columns):
                raise ValueError(f"bad row {ln!r}")
            for k, p in enumerate(parts):
                out[k].append(p)
        return [np.array(c, dtype=d) if c else np.array([], dtype=d)
                for c, d in zip(out, dtypes)]
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from exc


def _sparse_rows(header, Q, counts):
    """Count triples, or the change points of the cumulative kernel."""
    rows = [header + (",count" if counts is not None else ",cum")]
    if counts is not None:
        for idx in zip(*np.nonzero(counts)):
            rows.append(",".join(map(str, idx)) + f",{int(counts[idx])}")
        return rows
    step = np.diff(Q, axis=-1, prepend=0.0) != 0
    for idx in zip(*np.nonzero(step)):
        rows.append(",".join(map(str, idx)) + "," + _f(Q[idx]))
    return rows


def _dense_from_cum(shape, idx, vals):
    Q = np.zeros(shape)
    marks = np.zeros(shape, dtype=bool)
    Q[idx] = vals
    marks[idx] = True
    # forward-fill the cumulative values along t
    flat_Q = Q.reshape(-1, shape[-1])
    flat_m = marks.reshape(-1, shape[-1])
    for r in np.flatnonzero(flat_m.any(axis=1)):
        pos = np.where(flat_m[r], np.arange(shape[-1]), 0)
        np.maximum.accumulate(pos, out=pos)
        flat_Q[r] = np.where(pos > 0, flat_Q[r][pos], 0.0)
    return flat_Q.reshape(shape)


# prices ---------------------------------------------------------------------

def write_prices(path, prices):
    meta = {"symbol": prices.symbol, "calendar_id": prices.calendar_id,
            "rule_id": prices.rule_id, "days": len(prices.days)}
    rows = []
    for day in prices.days:
        rows.append(f"@{day.date.isoformat()}")
        rows.extend(f"{int(m)},{_f(p)}" for m, p in zip(day.minutes, day.prices))
    return _write(path, "prices", meta, rows)


def read_prices(path):
    meta, body = _read(path, "prices")
    days, date, mins, vals = [], None, [], []

    def flush():
        if date is not None:
            days.append(DayPrices(date, np.array(mins, dtype=np.int64),
                                  np.array(vals, dtype=float)))
    try:
        for ln in body:
            if ln.startswith("@"):
                flush()
                date, mins, vals = dt.date.fromisoformat(ln[1:]), [], []
            else:
                m, p = ln.split(",")
                if date is None:
                    raise ValueError("row before the first day block")
                mins.append(int(m))
                vals.append(float(p))
        flush()
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from exc
    return PriceSeries(tuple(days), meta["symbol"], meta["calendar_id"], meta["rule_id"])


# grids and state series -----------------------------------------------------

def _grid_meta(grid):
    return {"mode": grid.mode, "params": grid.params,
            "thresholds": grid.thresholds.tolist(),
            "state_values": grid.state_values.tolist()}


def _grid_from_meta(d):
    return ReturnGrid(np.array(d["thresholds"], dtype=float),
                      np.array(d["state_values"], dtype=float),
                      d["mode"], dict(d["params"]))


def write_grid(path, grid):
    rows = ["k,threshold"] + [f"{k},{_f(t)}" for k, t in enumerate(grid.thresholds)]
    return _write(path, "grid", _grid_meta(grid), rows)


def read_grid(path):
    meta, _ = _read(path, "grid")
    return _grid_from_meta(meta)


def write_states(path, series, extra=None):
    meta = {"state_values": series.state_values.tolist(),
            "day_starts": series.day_starts.tolist(),
            "grid": None if series.grid is None else _grid_meta(series.grid)}
    if extra:
        meta["extra"] = extra
    rows = ["minute,state"] + [f"{t},{s}" for t, s in enumerate(series.states)]
    return _write(path, "states", meta, rows)


def read_states(path):
    meta, body = _read(path, "states")
    minutes, states = _table(body, path, ("minute", "state"), (np.int64, np.int64))
    if not np.array_equal(minutes, np.arange(len(minutes))):
        raise InputError(f"{path}: minutes must run 0..N-1")
    grid = None if meta["grid"] is None else _grid_from_meta(meta["grid"])
    return StateSeries(states, np.array(meta["state_values"], dtype=float),
                       np.array(meta["day_starts"], dtype=np.int64), grid)


# kernels --------------------------------------------------------------------

def write_kernel(path, kernel):
    counts = kernel.counts
    meta = {"states": kernel.num_states, "t_max": kernel.t_max,
            "state_values": kernel.state_values.tolist(),
            "allow_self_transitions": kernel.allow_self_transitions,
            "fallback": kernel.fallback,
            "observed": kernel.observed.astype(int).tolist(),
            "body": "count" if counts is not None else "cum"}
    return _write(path, "kernel", meta, _sparse_rows("i,j,t", kernel._Q, counts))


def read_kernel(path):
    meta, body = _read(path, "kernel")
    S, t_max = int(meta["states"]), int(meta["t_max"])
    kwargs = {"state_values": np.array(meta["state_values"], dtype=float),
              "allow_self_transitions": bool(meta["allow_self_transitions"]),
              "fallback": bool(meta["fallback"])}
    shape = (S, S, t_max + 1)
    if meta["body"] == "count":
        i, j, t, c = _table(body, path, ("i", "j", "t", "count"), (np.int64,) * 4)
        counts = np.zeros(shape, dtype=np.int64)
        counts[i, j, t] = c
        return SemiMarkovKernel.from_counts(counts, **kwargs)
    i, j, t, q = _table(body, path, ("i", "j", "t", "cum"), (np.int64,) * 3 + (float,))
    Q = _dense_from_cum(shape, (i, j, t), q)
    return SemiMarkovKernel(Q, np.array(meta["observed"], dtype=bool), **kwargs)


def write_indexed_kernel(path, kernel):
    counts = kernel.counts
    meta = {"states": kernel.num_states, "levels": kernel.num_levels,
            "t_max": kernel.t_max,
            "thresholds": kernel.grid.thresholds.tolist(),
            "index": kernel.index_config.to_dict(),
            "state_values": kernel.state_values.tolist(),
            "backoff_threshold": kernel.backoff_threshold,
            "backed_off": [[int(i), int(v)] for i, v in zip(*np.nonzero(kernel.backed_off))],
            "allow_self_transitions": kernel._allow_self,
            "fallback": bool(kernel.fallback.fallback) if kernel.fallback else False,
            "body": "count" if counts is not None else "cum"}
    return _write(path, "indexed-kernel", meta,
                  _sparse_rows("i,v,j,t", kernel.raw_Q, counts))


def read_indexed_kernel(path):
    meta, body = _read(path, "indexed-kernel")
    S, L, t_max = int(meta["states"]), int(meta["levels"]), int(meta["t_max"])
    grid = IndexGrid(np.array(meta["thresholds"], dtype=float))
    cfg = IndexConfig(**meta["index"])
    values = np.array(meta["state_values"], dtype=float)
    shape = (S, L, S, t_max + 1)
    if meta["body"] == "count":
        cols = _table(body, path, ("i", "v", "j", "t", "count"), (np.int64,) * 5)
        counts = np.zeros(shape, dtype=np.int64)
        counts[tuple(cols[:4])] = cols[4]
        kernel = IndexedKernel.from_counts(
            counts, grid, cfg, int(meta["backoff_threshold"]), values,
            bool(meta["allow_self_transitions"]), bool(meta["fallback"]))
        stored = sorted(map(tuple, meta["backed_off"]))
        if stored != [(int(i), int(v)) for i, v in zip(*np.nonzero(kernel.backed_off))]:
            raise InputError(f"{path}: back-off markers do not match the counts")
        return kernel
    cols = _table(body, path, ("i", "v", "j", "t", "cum"), (np.int64,) * 4 + (float,))
    Q = _dense_from_cum(shape, tuple(cols[:4]), cols[4])
    return IndexedKernel(Q, grid, cfg, state_values=values)


# index ----------------------------------------------------------------------

def write_index(path, index, sample):
    """Jump-epoch table ``n,T,J,value`` followed by the minute values."""
    if len(index.values) != len(sample.J):
        raise InputError("index and sample lengths differ")
    meta = {"index": index.config.to_dict(), "end_time": int(sample.end_time),
            "state_values": sample.state_values.tolist(),
            "segment_starts": sample.segment_starts.tolist(),
            "allow_self_transitions": sample.allow_self_transitions,
            "minutes": index.minutes is not None}
    rows = ["n,T,J,value"]
    rows += [f"{n},{t},{j},{_f(u)}"
             for n, (t, j, u) in enumerate(zip(sample.T, sample.J, index.values))]
    if index.minutes is not None:
        t0 = int(sample.T[0])
        rows.append("@minutes")
        rows.append("minute,value")
        rows += [f"{t0 + k},{_f(u)}" for k, u in enumerate(index.minutes)]
    return _write(path, "index", meta, rows)


def read_index(path):
    """Return ``(IndexSeries, MarkovRenewalSample)``."""
    meta, body = _read(path, "index")
    split = body.index("@minutes") if "@minutes" in body else len(body)
    n, T, J, u = _table(body[:split], path, ("n", "T", "J", "value"),
                        (np.int64, np.int64, np.int64, float))
    minutes = None
    if split < len(body):
        _, minutes = _table(body[split + 1:], path, ("minute", "value"),
                            (np.int64, float))
    sample = MarkovRenewalSample(J, T, int(meta["end_time"]),
                                 np.array(meta["state_values"], dtype=float),
                                 np.array(meta["segment_starts"], dtype=np.int64),
                                 bool(meta["allow_self_transitions"]))
    return IndexSeries(u, IndexConfig(**meta["index"]), minutes), sample


# diagnostics ----------------------------------------------------------------

def write_acf(path, curve, extra=None):
    meta = {"kind": curve.kind, "source": curve.source, "n": int(curve.n),
            "replications": int(curve.replications)}
    if extra:
        meta["extra"] = extra
    rows = ["lag,value"] + [f"{int(k)},{_f(v)}" for k, v in zip(curve.lags, curve.values)]
    return _write(path, "acf", meta, rows)


def read_acf(path):
    meta, body = _read(path, "acf")
    lags, values = _table(body, path, ("lag", "value"), (np.int64, float))
    return AcfCurve(lags, values, int(meta["n"]), meta["kind"], meta["source"],
                    int(meta["replications"]))


def write_sweep(path, result):
    meta = {"param": result.param, "replications": int(result.replications),
            "seeds": [int(s) for s in result.seeds], "errors": list(result.errors),
            "meta": result.meta}
    rows = [f"{result.param},mse"]
    rows += [f"{_f(g)},{_f(m)}" for g, m in zip(result.grid, result.mse)]
    return _write(path, "sweep", meta, rows)


def read_sweep(path):
    meta, body = _read(path, "sweep")
    grid, mse = _table(body, path, (meta["param"], "mse"), (float, float))
    return SweepResult(meta["param"], grid, mse, np.array(meta["seeds"], dtype=np.int64),
                       int(meta["replications"]),
                       tuple(e for e in meta["errors"]), meta=meta["meta"])


# simulation output ----------------------------------------------------------

def write_simulation(out_dir, trajectories, series, extra=None):
    """One ``rep_XXXX.csv`` state file per replication plus ``manifest.json``.

    ``series`` holds the minute expansion of each trajectory.
    """
    os.makedirs(out_dir, exist_ok=True)
    files = []
    for traj, s in zip(trajectories, series):
        name = f"rep_{traj.replication:04d}.csv"
        path = os.path.join(out_dir, name)
        write_states(path, s, {"seed": traj.seed, "replication": traj.replication,
                               "kernel_fingerprint": traj.kernel_fingerprint,
                               "generator": traj.generator})
        files.append({"file": name, "replication": traj.replication,
                      "sha256": sha256_file(path)})
    first = trajectories[0]
    manifest = {"format": f"semimarkov simulation v{FORMAT_VERSION}",
                "seed": first.seed, "horizon": first.horizon,
                "generator": first.generator,
                "kernel_fingerprint": first.kernel_fingerprint,
                "burn_in": first.meta.get("burn_in"),
                "replications": files}
    if extra:
        manifest.update(extra)
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w", newline="\n") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return path
