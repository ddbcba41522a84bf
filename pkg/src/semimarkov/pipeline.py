"""Pipeline stages and the configured end-to-end run.

Every stage reads and writes artifact files (see :mod:`semimarkov.io`), so
the command-line subcommands and :func:`run_pipeline` share one code path.
All randomness comes from configured seeds.
"""

import hashlib
import json
import logging
import os
from dataclasses import asdict, dataclass, field

import numpy as np
import yaml

from . import io
from .diagnostics import SweepConfig, acf_returns, acf_squared, mean_acf, sweep_lambda, sweep_m
from .discretization import discretize_returns, fit_return_grid, fit_index_grid
from .exceptions import ConfigError, DataError, EstimationError, SemiMarkovError
from .index import IndexConfig, compute_index
from .indexed_kernel import DEFAULT_BACKOFF, estimate_indexed_kernel
from .ingestion import TickFormat, compute_returns, parse_ticks, read_calendar, resample_minutes
from .simulate import SimulationConfig, expand_to_minutes, simulate_indexed, simulate_smc
from .smc import estimate_kernel, extract_mrp
from .synthetic import SyntheticGeneratorSpec, generate_synthetic

log = logging.getLogger(__name__)

MODELS = ("smc", "ismc", "wismc")
STAGE_ORDER = ("ingest", "discretize", "generate", "estimate", "index",
               "estimate-indexed", "simulate", "acf", "sweep")


def _artifact_kind(path):
    if os.path.isdir(path):
        return "simulation"
    try:
        with open(path) as fh:
            first = fh.readline().split()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    return first[2] if len(first) == 4 and first[1] == "semimarkov" else None


def _require_file(path, what):
    if path is None or not os.path.exists(path):
        raise ConfigError(f"{what} {path!r} does not exist")
    return path


# stages ---------------------------------------------------------------------

def stage_ingest(input, out, calendar="borsa-italiana-post-2009", symbol="",
                 timestamp_col="timestamp", price_col="price", delimiter=",",
                 timestamp_format=None, late_open="skip", n_jobs=None):
    _require_file(input, "tick file")
    cal = read_calendar(calendar)
    fmt = TickFormat(timestamp_col, price_col, delimiter, timestamp_format)
    with open(input, "rb") as fh:
        ticks = parse_ticks(fh, fmt, symbol)
    return [io.write_prices(out, resample_minutes(ticks, cal, late_open, n_jobs))]


def stage_discretize(prices, out, states=5, mode="quantile", tail_mass=None, delta=None):
    returns = compute_returns(io.read_prices(_require_file(prices, "price file")))
    grid = fit_return_grid(returns, states, mode, tail_mass, delta)
    return [io.write_states(out, discretize_returns(returns, grid))]


def stage_generate(out, kind="clustered-wismc", horizon=500000, seed=0, kernel=None,
                   lam=0.97, threshold=0.8, delta=1.0, burn_in=1000):
    k = io.read_kernel(_require_file(kernel, "kernel file")) if kernel else None
    spec = SyntheticGeneratorSpec(kind, horizon, seed, k, lam, threshold, delta, burn_in)
    return [io.write_states(out, generate_synthetic(spec),
                            {"generator": kind, "seed": seed})]


def _sample(states, allow_self_transitions, truncate_days):
    series = io.read_states(_require_file(states, "state file"))
    return extract_mrp(series, allow_self_transitions, truncate_days)


def stage_estimate(states, out, t_max=None, allow_self_transitions=False,
                   truncate_days=True, fallback=False):
    sample = _sample(states, allow_self_transitions, truncate_days)
    return [io.write_kernel(out, estimate_kernel(sample, t_max, fallback))]


def stage_index(states, out, kind="ewma", m=None, lam=None, f="squared",
                initial_value=None, minutes=True, allow_self_transitions=False,
                truncate_days=True):
    sample = _sample(states, allow_self_transitions, truncate_days)
    cfg = IndexConfig(kind, m, lam, f, initial_value)
    return [io.write_index(out, compute_index(sample, cfg, minutes), sample)]


def stage_estimate_indexed(states, index, out, levels=5, backoff_threshold=DEFAULT_BACKOFF,
                           t_max=None, fallback=False):
    idx, sample = io.read_index(_require_file(index, "index file"))
    series = io.read_states(_require_file(states, "state file"))
    # more than one segment means the sample was cut at day boundaries
    check = extract_mrp(series, sample.allow_self_transitions,
                        len(sample.segment_starts) > 1)
    if not (np.array_equal(check.J, sample.J) and np.array_equal(check.T, sample.T)):
        raise DataError(f"index file {index} was not computed from {states}")
    grid = fit_index_grid(idx.values, levels)
    kernel = estimate_indexed_kernel(sample, idx, grid, t_max, backoff_threshold, fallback)
    return [io.write_indexed_kernel(out, kernel)]


def stage_simulate(out, horizon, seed=0, reps=1, kernel=None, index_kernel=None,
                   index_cfg=None, burn_in=None, n_jobs=None):
    if index_kernel:
        k = io.read_indexed_kernel(_require_file(index_kernel, "indexed kernel file"))
        icfg = None
        if index_cfg:
            overrides = _load_yaml(_require_file(index_cfg, "index config"))
            icfg = IndexConfig(**{**k.index_config.to_dict(), **overrides})
        run = lambda c, r: simulate_indexed(k, c, r, icfg)
    elif kernel:
        k = io.read_kernel(_require_file(kernel, "kernel file"))
        run = lambda c, r: simulate_smc(k, c, r)
    else:
        raise ConfigError("simulate needs --kernel or --index-kernel")
    cfg = SimulationConfig(horizon, seed, burn_in=burn_in, replications=reps)
    if n_jobs and n_jobs != 1:
        from joblib import Parallel, delayed
        trajs = Parallel(n_jobs=n_jobs, prefer="threads")(
            delayed(run)(cfg, r) for r in range(reps))
    else:
        trajs = [run(cfg, r) for r in range(reps)]
    series = [expand_to_minutes(t) for t in trajs]
    return [io.write_simulation(out, trajs, series)]


def _load_series(path):
    kind = _artifact_kind(path)
    if kind == "states":
        return [io.read_states(path)]
    if kind == "prices":
        return [compute_returns(io.read_prices(path))]
    if kind == "simulation":
        with open(os.path.join(path, "manifest.json")) as fh:
            manifest = json.load(fh)
        return [io.read_states(os.path.join(path, r["file"]))
                for r in manifest["replications"]]
    raise DataError(f"{path}: expected a state, price or simulation artifact")


def stage_acf(series, out, max_lag=100, kind="squared", exclude_day_boundaries=False):
    fn = {"squared": acf_squared, "returns": acf_returns}.get(kind)
    if fn is None:
        raise ConfigError(f"unknown acf kind {kind!r}")
    data = _load_series(_require_file(series, "series"))
    curve = mean_acf(fn(s, max_lag, exclude_day_boundaries) for s in data)
    return [io.write_acf(out, curve, {"exclude_day_boundaries": exclude_day_boundaries})]


def parse_grid(text):
    """``start:stop:step`` (stop included) or a comma list."""
    if isinstance(text, (list, tuple)):
        return [float(x) for x in text]
    try:
        if ":" in str(text):
            a, b, s = (float(x) for x in str(text).split(":"))
            n = int(np.floor((b - a) / s + 1e-9)) + 1
            return [round(a + k * s, 10) for k in range(n)]
        return [float(x) for x in str(text).split(",")]
    except ValueError as exc:
        raise ConfigError(f"bad grid {text!r}: {exc}") from exc


def stage_sweep(data, out, param="lambda", grid="0.90:0.999:0.005", reps=10, seed=7,
                levels=5, max_lag=100, kind="moving_average", lam=None,
                backoff_threshold=DEFAULT_BACKOFF, burn_in=1000, n_jobs=None):
    series = io.read_states(_require_file(data, "state file"))
    cfg = SweepConfig(replications=reps, seed=seed, max_lag=max_lag, n_levels=levels,
                      backoff_threshold=backoff_threshold, burn_in=burn_in, lam=lam,
                      n_jobs=n_jobs)
    points = parse_grid(grid)
    if param == "lambda":
        result = sweep_lambda(series, points, cfg)
    elif param == "m":
        result = sweep_m(series, [int(p) for p in points], cfg, kind)
    else:
        raise ConfigError(f"unknown sweep parameter {param!r}")
    return [io.write_sweep(out, result)]


# configured run -------------------------------------------------------------

def _load_yaml(path):
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot load config {path}: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a mapping")
    return data


_SECTIONS = ("input", "generate", "discretization", "estimation", "index",
             "simulation", "diagnostics")


@dataclass(frozen=True)
class RunConfig:
    """Settings of a full pipeline run.

    Sections map onto stage arguments: ``input`` (ingest), ``generate``,
    ``discretization``, ``estimation`` (estimate and estimate-indexed),
    ``index``, ``simulation``, ``diagnostics`` (acf, and sweep when it has
    a ``sweep`` entry).  ``seed`` is the default for every seeded stage.
    """

    out_dir: str
    model: str = "wismc"
    seed: int = 0
    stages: tuple | None = None
    input: dict = field(default_factory=dict)
    generate: dict | None = None
    discretization: dict = field(default_factory=dict)
    estimation: dict = field(default_factory=dict)
    index: dict = field(default_factory=dict)
    simulation: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.model not in MODELS:
            raise ConfigError(f"model must be one of {MODELS}, got {self.model!r}")
        if self.generate is None and not self.input.get("ticks"):
            raise ConfigError("config needs either a generate section or input.ticks")
        kind = self.index.get("kind")
        if self.model == "smc" and self.index:
            raise ConfigError("model smc takes no index settings")
        if self.model == "ismc":
            if kind not in (None, "moving_average") or self.index.get("m") is None:
                raise ConfigError("model ismc needs a moving_average index with m")
        if self.model == "wismc":
            if kind not in (None, "ewma", "ewma_windowed") or self.index.get("lam") is None:
                raise ConfigError("model wismc needs an ewma index with lam")
        planned = self.planned_stages()
        if self.stages is not None:
            unknown = set(self.stages) - set(STAGE_ORDER)
            if unknown:
                raise ConfigError(f"unknown stages {sorted(unknown)}")
            if list(self.stages) != [s for s in planned if s in self.stages]:
                raise ConfigError(f"stages {list(self.stages)} do not fit the "
                                  f"{self.model} pipeline {planned}")

    @classmethod
    def from_dict(cls, d, base_dir="."):
        d = dict(d)
        unknown = set(d) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        if "out_dir" not in d:
            raise ConfigError("config needs out_dir")
        for name in _SECTIONS:
            if d.get(name) is not None and not isinstance(d[name], dict):
                raise ConfigError(f"config section {name} must be a mapping")
        d["out_dir"] = os.path.join(base_dir, d["out_dir"])
        if d.get("input", {}).get("ticks"):
            d["input"] = {**d["input"], "ticks": os.path.join(base_dir, d["input"]["ticks"])}
        if d.get("stages") is not None:
            d["stages"] = tuple(d["stages"])
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path):
        return cls.from_dict(_load_yaml(path), os.path.dirname(os.path.abspath(path)))

    def planned_stages(self):
        src = ["generate"] if self.generate is not None else ["ingest", "discretize"]
        model = ["estimate"] if self.model == "smc" else ["estimate", "index", "estimate-indexed"]
        tail = ["simulate", "acf"]
        if self.diagnostics.get("sweep"):
            tail.append("sweep")
        return src + model + tail

    def config_hash(self):
        d = asdict(self)
        d.pop("out_dir")
        return hashlib.sha256(json.dumps(d, sort_keys=True, default=str).encode()).hexdigest()


def _exit_code(exc):
    if isinstance(exc, ConfigError) or isinstance(exc, ValueError):
        return 2
    if isinstance(exc, DataError):
        return 3
    if isinstance(exc, EstimationError):
        return 4
    return 1


def _check_keys(section, name, allowed):
    unknown = set(section) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys in {name}: {sorted(unknown)}")
    return section


def run_pipeline(cfg):
    """Run the configured stages in order; return ``(exit_code, manifest)``.

    Every artifact is listed in ``<out_dir>/manifest.json`` with its stage,
    sha256, the config hash and the seed.  On failure the manifest names the
    failing stage and artifacts written so far are kept.
    """
    out = cfg.out_dir
    os.makedirs(out, exist_ok=True)
    stages = list(cfg.stages) if cfg.stages is not None else cfg.planned_stages()
    p = {name: os.path.join(out, name) for name in (
        "prices.txt", "states.txt", "kernel.txt", "index.txt",
        "indexed_kernel.txt", "simulation", "acf.csv", "sweep.csv")}
    chash = cfg.config_hash()
    manifest = {"format": "semimarkov run v1", "model": cfg.model, "seed": cfg.seed,
                "config_hash": chash, "stages": stages, "artifacts": [],
                "status": "ok"}
    est = cfg.estimation
    truncate = est.get("truncate_days", True)
    allow_self = est.get("allow_self_transitions", False)
    sim = dict(cfg.simulation)
    diag = dict(cfg.diagnostics)

    def seed_of(section):
        return section.get("seed", cfg.seed)

    def horizon():
        return sim.get("horizon") or len(io.read_states(p["states.txt"]))

    actions = {
        "ingest": lambda: stage_ingest(
            cfg.input["ticks"], p["prices.txt"],
            **{k: v for k, v in cfg.input.items() if k != "ticks"}),
        "discretize": lambda: stage_discretize(
            p["prices.txt"], p["states.txt"],
            **_check_keys(cfg.discretization, "discretization",
                          ("states", "mode", "tail_mass", "delta"))),
        "generate": lambda: stage_generate(
            p["states.txt"], **{"seed": cfg.seed, **cfg.generate}),
        "estimate": lambda: stage_estimate(
            p["states.txt"], p["kernel.txt"], est.get("t_max"), allow_self, truncate,
            est.get("fallback", False)),
        "index": lambda: stage_index(
            p["states.txt"], p["index.txt"],
            **{"kind": "moving_average" if cfg.model == "ismc" else "ewma", **cfg.index},
            allow_self_transitions=allow_self, truncate_days=truncate),
        "estimate-indexed": lambda: stage_estimate_indexed(
            p["states.txt"], p["index.txt"], p["indexed_kernel.txt"],
            est.get("levels", 5), est.get("backoff_threshold", DEFAULT_BACKOFF),
            est.get("t_max"), est.get("fallback", False)),
        "simulate": lambda: stage_simulate(
            p["simulation"], horizon(), seed_of(sim), sim.get("reps", 1),
            kernel=p["kernel.txt"] if cfg.model == "smc" else None,
            index_kernel=None if cfg.model == "smc" else p["indexed_kernel.txt"],
            burn_in=sim.get("burn_in"), n_jobs=sim.get("n_jobs")),
        "acf": lambda: stage_acf(
            p["simulation"], p["acf.csv"], diag.get("max_lag", 100),
            diag.get("kind", "squared"), diag.get("exclude_day_boundaries", False)),
        "sweep": lambda: stage_sweep(
            p["states.txt"], p["sweep.csv"],
            **{"seed": cfg.seed, "max_lag": diag.get("max_lag", 100), **diag["sweep"]}),
    }
    for stage in stages:
        log.info("stage %s", stage)
        try:
            written = actions[stage]()
        except (SemiMarkovError, ValueError, TypeError, KeyError) as exc:
            manifest["status"] = "failed"
            manifest["failed_stage"] = stage
            manifest["error"] = f"{type(exc).__name__}: {exc}"
            _write_manifest(out, manifest)
            code = _exit_code(exc) if not isinstance(exc, (TypeError, KeyError)) else 2
            return code, manifest
        for path in written:
            target = os.path.join(path, "manifest.json") if os.path.isdir(path) else path
            manifest["artifacts"].append({
                "path": os.path.relpath(target, out), "stage": stage,
                "sha256": io.sha256_file(target), "config_hash": chash,
                "seed": cfg.seed})
    _write_manifest(out, manifest)
    return 0, manifest


def _write_manifest(out, manifest):
    with open(os.path.join(out, "manifest.json"), "w", newline="\n") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")
