"""Command-line interface.

Every subcommand accepts ``--config FILE`` (YAML).  Keys are flag names
with dashes or underscores, either at the top level or inside a section
named after the subcommand; flags given on the command line win.  Exit
codes: 0 success, 2 configuration error, 3 data error, 4 estimation error.
"""

import argparse
import logging
import sys
import warnings

from . import __version__, pipeline
from .exceptions import ConfigError, DataError, EstimationError, SemiMarkovError
from .ingestion import CALENDARS

log = logging.getLogger("semimarkov")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_ESTIMATION = 0, 2, 3, 4


def _bool(text):
    if isinstance(text, bool):
        return text
    if text.lower() in ("1", "true", "yes", "on"):
        return True
    if text.lower() in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _common(p):
    p.add_argument("--config", help="YAML file with defaults for this command")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress")


def _estimation_flags(p):
    p.add_argument("--t-max", type=int, default=None,
                   help="kernel horizon (default: longest observed sojourn)")
    p.add_argument("--fallback", type=_bool, default=False,
                   help="uniform one-step rows for unobserved states")


def _sample_flags(p):
    p.add_argument("--allow-self-transitions", type=_bool, default=False,
                   help="treat every minute as a jump epoch")
    p.add_argument("--truncate-days", type=_bool, default=True,
                   help="censor sojourns at day boundaries")


def build_parser():
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog="semimarkov", formatter_class=fmt,
                                     description="Indexed semi-Markov models of "
                                                 "intraday returns.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", formatter_class=fmt, help="tick CSV -> minute prices")
    _common(p)
    p.add_argument("--input", help="tick CSV file")
    p.add_argument("--calendar", default="borsa-italiana-post-2009",
                   help=f"calendar YAML file or preset ({', '.join(sorted(CALENDARS))})")
    p.add_argument("--out", help="price-series file")
    p.add_argument("--symbol", default="", help="instrument label stored with the prices")
    p.add_argument("--timestamp-col", default="timestamp", help="timestamp column name")
    p.add_argument("--price-col", default="price", help="price column name")
    p.add_argument("--delimiter", default=",", help="field separator")
    p.add_argument("--timestamp-format", default=None,
                   help="strptime format (default: ISO-like, inferred)")
    p.add_argument("--late-open", choices=("skip", "trim"), default="skip",
                   help="days whose first trade comes after the open")
    p.add_argument("--n-jobs", type=int, default=None, help="parallel workers over days")

    p = sub.add_parser("discretize", formatter_class=fmt, help="prices -> state series")
    _common(p)
    p.add_argument("--prices", help="price-series file")
    p.add_argument("--states", type=int, default=5, help="odd number of states")
    p.add_argument("--mode", choices=("quantile", "fixed-delta"), default="quantile",
                   help="cut points from return quantiles or a fixed spacing")
    p.add_argument("--tail-mass", type=float, default=None,
                   help="mass per outer tail (default 1/states)")
    p.add_argument("--delta", type=float, default=None, help="fixed-delta spacing")
    p.add_argument("--out", help="state-series file")

    p = sub.add_parser("estimate", formatter_class=fmt, help="state series -> kernel")
    _common(p)
    p.add_argument("--states", help="state-series file")
    p.add_argument("--out", help="kernel file")
    _estimation_flags(p)
    _sample_flags(p)

    p = sub.add_parser("index", formatter_class=fmt, help="state series -> index")
    _common(p)
    p.add_argument("--kernel-sample", dest="states", help="state-series file")
    p.add_argument("--kind", choices=("ewma", "moving_average", "ewma_windowed"),
                   default="ewma", help="index process")
    p.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="EWMA weight in (0, 1] (ewma kinds)")
    p.add_argument("--m", type=int, default=None, help="memory in sojourns (window kinds)")
    p.add_argument("--f", default="squared", help="reward function of the state value")
    p.add_argument("--initial-value", type=float, default=None,
                   help="pre-sample index value (default: sample mean of f)")
    p.add_argument("--minutes", type=_bool, default=True, help="write minute values")
    p.add_argument("--out", help="index file")
    _sample_flags(p)

    p = sub.add_parser("estimate-indexed", formatter_class=fmt,
                       help="state series + index -> indexed kernel")
    _common(p)
    p.add_argument("--states", help="state-series file")
    p.add_argument("--index", help="index file")
    p.add_argument("--levels", type=int, default=5, help="number of index levels")
    p.add_argument("--backoff-threshold", type=int, default=50,
                   help="minimum observations per (state, level) cell")
    p.add_argument("--out", help="indexed-kernel file")
    _estimation_flags(p)

    p = sub.add_parser("simulate", formatter_class=fmt, help="kernel -> simulated series")
    _common(p)
    p.add_argument("--kernel", help="plain kernel file")
    p.add_argument("--index-kernel", help="indexed-kernel file")
    p.add_argument("--index-cfg", help="YAML overrides of the stored index config")
    p.add_argument("--horizon", type=int, default=508000, help="simulated minutes")
    p.add_argument("--seed", type=int, default=42, help="master seed")
    p.add_argument("--reps", type=int, default=10, help="replications")
    p.add_argument("--burn-in", type=int, default=None,
                   help="discarded minutes (None: 0 plain, 1000 indexed)")
    p.add_argument("--n-jobs", type=int, default=None, help="parallel replications")
    p.add_argument("--out", help="output directory")

    p = sub.add_parser("acf", formatter_class=fmt, help="autocorrelation curve")
    _common(p)
    p.add_argument("--series", help="state file, price file or simulation directory")
    p.add_argument("--max-lag", type=int, default=100, help="largest lag in minutes")
    p.add_argument("--kind", choices=("squared", "returns"), default="squared",
                   help="autocorrelation of squared or plain values")
    p.add_argument("--exclude-day-boundaries", type=_bool, default=False,
                   help="drop lag pairs spanning two days")
    p.add_argument("--out", help="lag,value CSV")

    p = sub.add_parser("sweep", formatter_class=fmt, help="calibration sweep")
    _common(p)
    p.add_argument("--param", choices=("lambda", "m"), default="lambda",
                   help="swept parameter")
    p.add_argument("--grid", default="0.90:0.999:0.005",
                   help="start:stop:step or comma list")
    p.add_argument("--data", help="state-series file")
    p.add_argument("--reps", type=int, default=10, help="replications per grid point")
    p.add_argument("--seed", type=int, default=7, help="master seed")
    p.add_argument("--levels", type=int, default=5, help="number of index levels")
    p.add_argument("--max-lag", type=int, default=100, help="largest lag in minutes")
    p.add_argument("--kind", choices=("moving_average", "ewma_windowed"),
                   default="moving_average", help="index swept by --param m")
    p.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="fixed lambda for an ewma_windowed m sweep")
    p.add_argument("--backoff-threshold", type=int, default=50,
                   help="minimum observations per (state, level) cell")
    p.add_argument("--burn-in", type=int, default=1000, help="discarded minutes")
    p.add_argument("--n-jobs", type=int, default=None, help="parallel grid points")
    p.add_argument("--out", help="param,mse CSV")

    p = sub.add_parser("generate", formatter_class=fmt, help="synthetic state series")
    _common(p)
    p.add_argument("--kind", choices=("clustered-wismc", "known-kernel"),
                   default="clustered-wismc", help="generator")
    p.add_argument("--horizon", type=int, default=500000, help="minutes to generate")
    p.add_argument("--seed", type=int, default=0, help="seed")
    p.add_argument("--kernel", help="kernel file for known-kernel")
    p.add_argument("--lambda", dest="lam", type=float, default=0.97,
                   help="EWMA weight of the clustered generator")
    p.add_argument("--threshold", type=float, default=0.8,
                   help="index level split of the clustered generator")
    p.add_argument("--delta", type=float, default=1.0, help="state spacing")
    p.add_argument("--burn-in", type=int, default=1000, help="discarded minutes")
    p.add_argument("--out", help="state-series file")

    p = sub.add_parser("run", formatter_class=fmt, help="configured pipeline")
    p.add_argument("--config", required=True, help="YAML run configuration")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress")
    return parser


_STAGES = {
    "ingest": (pipeline.stage_ingest, ("input", "out"),
               ("calendar", "symbol", "timestamp_col", "price_col", "delimiter",
                "timestamp_format", "late_open", "n_jobs")),
    "discretize": (pipeline.stage_discretize, ("prices", "out"),
                   ("states", "mode", "tail_mass", "delta")),
    "estimate": (pipeline.stage_estimate, ("states", "out"),
                 ("t_max", "allow_self_transitions", "truncate_days", "fallback")),
    "index": (pipeline.stage_index, ("states", "out"),
              ("kind", "m", "lam", "f", "initial_value", "minutes",
               "allow_self_transitions", "truncate_days")),
    "estimate-indexed": (pipeline.stage_estimate_indexed, ("states", "index", "out"),
                         ("levels", "backoff_threshold", "t_max", "fallback")),
    "simulate": (pipeline.stage_simulate, ("out", "horizon"),
                 ("seed", "reps", "kernel", "index_kernel", "index_cfg", "burn_in",
                  "n_jobs")),
    "acf": (pipeline.stage_acf, ("series", "out"),
            ("max_lag", "kind", "exclude_day_boundaries")),
    "sweep": (pipeline.stage_sweep, ("data", "out"),
              ("param", "grid", "reps", "seed", "levels", "max_lag", "kind", "lam",
               "backoff_threshold", "burn_in", "n_jobs")),
    "generate": (pipeline.stage_generate, ("out",),
                 ("kind", "horizon", "seed", "kernel", "lam", "threshold", "delta",
                  "burn_in")),
}

# config keys that differ from the argparse destination
_ALIASES = {"lambda": "lam", "kernel_sample": "states"}


def _config_defaults(path, command, parser):
    data = pipeline._load_yaml(path)
    section = data.get(command, {})
    flat = {k: v for k, v in data.items() if not isinstance(v, dict)}
    merged = {**flat, **(section if isinstance(section, dict) else {})}
    dests = {a.dest for a in parser._actions}
    out = {}
    for key, value in merged.items():
        key = key.replace("-", "_")
        key = _ALIASES.get(key, key)
        if key not in dests or key == "config":
            raise ConfigError(f"config key {key!r} is not an option of {command}")
        out[key] = value
    return out


def _subparser(parser, command):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[command]
    raise KeyError(command)


def _exit_code(exc):
    if isinstance(exc, DataError):
        return EXIT_DATA
    if isinstance(exc, EstimationError):
        return EXIT_ESTIMATION
    return EXIT_CONFIG


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    logging.captureWarnings(True)
    warnings.simplefilter("default")
    try:
        if args.command == "run":
            code, manifest = pipeline.run_pipeline(pipeline.RunConfig.load(args.config))
            if code:
                print(f"stage {manifest['failed_stage']} failed: {manifest['error']}",
                      file=sys.stderr)
            return code
        if args.config:
            sub = _subparser(parser, args.command)
            sub.set_defaults(**_config_defaults(args.config, args.command, sub))
            args = parser.parse_args(argv)
        fn, required, optional = _STAGES[args.command]
        missing = [r for r in required if getattr(args, r) is None]
        if missing:
            raise ConfigError(f"{args.command}: missing "
                              + ", ".join("--" + m.replace("_", "-") for m in missing))
        kwargs = {k: getattr(args, k) for k in required + optional}
        for path in fn(**kwargs):
            log.info("wrote %s", path)
    except (SemiMarkovError, ValueError) as exc:
        print(f"{args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return _exit_code(exc)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
