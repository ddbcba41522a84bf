"""Tick parsing and per-minute resampling of trade prices.

A trading day with session ``[open, close)`` has ``n = close - open``
minutes.  Minute ``k`` is priced by the last trade strictly before the
boundary ``open + (k + 1)`` minutes; a minute without trades carries the
previous minute's price forward.  Trades outside the session are dropped.
"""

import datetime as dt
import io
import os
import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .exceptions import ConfigError, EmptyInputError, InputError

RESAMPLE_RULE_ID = "last-trade-before-minute-boundary/ffill-v1"


class DataWarning(UserWarning):
    """Recoverable data problem (rejected rows, skipped days)."""


@dataclass(frozen=True)
class TickFormat:
    """Layout of a delimited tick file."""

    timestamp_col: str = "timestamp"
    price_col: str = "price"
    delimiter: str = ","
    timestamp_format: str | None = None


@dataclass(frozen=True, eq=False)
class TickSeries:
    timestamps: np.ndarray  # datetime64[ns], sorted
    prices: np.ndarray
    n_rejected: int = 0
    symbol: str = ""

    def __len__(self):
        return len(self.prices)


def _parse_time(value):
    if isinstance(value, dt.time):
        return value
    return dt.time.fromisoformat(str(value))


@dataclass(frozen=True)
class TradingCalendar:
    """Session hours, with optional per-day overrides.

    ``changes`` holds ``(first_date, open, close)`` entries that replace the
    base session from ``first_date`` onwards; ``overrides`` holds
    ``(date, open, close)`` entries for single shortened sessions.
    """

    session_open: dt.time
    session_close: dt.time
    overrides: tuple = ()
    changes: tuple = ()
    calendar_id: str = "custom"

    def __post_init__(self):
        for _, o, c in ((None, self.session_open, self.session_close),
                        *self.changes, *self.overrides):
            if not o < c:
                raise ConfigError(f"session open {o} must precede close {c}")

    def session(self, date):
        """Return ``(open, close)`` for ``date``."""
        for d, o, c in self.overrides:
            if d == date:
                return o, c
        o, c = self.session_open, self.session_close
        for d, co, cc in sorted(self.changes):
            if date >= d:
                o, c = co, cc
        return o, c

    def minutes(self, date):
        o, c = self.session(date)
        return _minutes_between(o, c)

    @classmethod
    def from_dict(cls, d):
        try:
            overrides = tuple(
                (dt.date.fromisoformat(str(o["date"])), _parse_time(o["open"]),
                 _parse_time(o["close"])) for o in d.get("overrides", ()))
            changes = tuple(
                (dt.date.fromisoformat(str(o["from"])), _parse_time(o["open"]),
                 _parse_time(o["close"])) for o in d.get("changes", ()))
            return cls(_parse_time(d["open"]), _parse_time(d["close"]),
                       overrides, changes, str(d.get("id", "custom")))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid calendar: {exc}") from exc


def _minutes_between(o, c):
    return (c.hour * 60 + c.minute) - (o.hour * 60 + o.minute)


# Borsa Italiana continuous-trading calendars.  The 507-minute day counts the
# opening and closing prices as the first and last session minutes.
ITALY_POST_2009 = TradingCalendar(dt.time(9, 0), dt.time(17, 27),
                                  calendar_id="borsa-italiana-post-2009")
ITALY_PRE_2009 = TradingCalendar(dt.time(9, 5), dt.time(17, 27),
                                 calendar_id="borsa-italiana-pre-2009")
BORSA_ITALIANA = TradingCalendar(
    dt.time(9, 5), dt.time(17, 27),
    changes=((dt.date(2009, 9, 28), dt.time(9, 0), dt.time(17, 27)),),
    calendar_id="borsa-italiana-2007-2010")

CALENDARS = {c.calendar_id: c for c in
             (ITALY_POST_2009, ITALY_PRE_2009, BORSA_ITALIANA)}


@dataclass(frozen=True, eq=False)
class DayPrices:
    date: dt.date
    minutes: np.ndarray  # minute offsets from session open
    prices: np.ndarray

    def __len__(self):
        return len(self.prices)


@dataclass(frozen=True, eq=False)
class PriceSeries:
    days: tuple
    symbol: str = ""
    calendar_id: str = ""
    rule_id: str = RESAMPLE_RULE_ID

    @property
    def n_minutes(self):
        return sum(len(d) for d in self.days)

    def to_ticks(self, cal):
        """One synthetic trade at the start of every priced minute."""
        stamps, prices = [], []
        for day in self.days:
            o, _ = cal.session(day.date)
            base = np.datetime64(dt.datetime.combine(day.date, o), "ns")
            stamps.append(base + day.minutes.astype("timedelta64[m]"))
            prices.append(day.prices)
        if not stamps:
            return TickSeries(np.array([], "datetime64[ns]"), np.array([]),
                              symbol=self.symbol)
        return TickSeries(np.concatenate(stamps).astype("datetime64[ns]"),
                          np.concatenate(prices), symbol=self.symbol)


@dataclass(frozen=True, eq=False)
class RawReturnSeries:
    """Intraday minute returns, concatenated over days.

    ``day_starts[k]`` is the offset of day ``k``'s first return in
    ``values``.  Close-to-open returns are kept apart in ``overnight``.
    """

    values: np.ndarray
    day_starts: np.ndarray
    dates: tuple = ()
    overnight: np.ndarray = field(default_factory=lambda: np.array([]))

    def __len__(self):
        return len(self.values)


def parse_ticks(raw, fmt=None, symbol=""):
    """Parse delimited tick records into a sorted :class:`TickSeries`.

    ``raw`` may be a path, a text or binary stream, or ``bytes``.  Rows
    whose timestamp or price cannot be parsed, or whose price is not
    strictly positive, are rejected and counted.
    """
    fmt = fmt or TickFormat()
    if isinstance(raw, (bytes, bytearray)):
        raw = io.BytesIO(raw)
    try:
        df = pd.read_csv(raw, sep=fmt.delimiter, dtype=str,
                         skipinitialspace=True, keep_default_na=False)
    except pd.errors.EmptyDataError as exc:
        raise EmptyInputError("tick input is empty") from exc
    except (OSError, UnicodeDecodeError, pd.errors.ParserError) as exc:
        raise InputError(f"cannot read tick input: {exc}") from exc
    missing = {fmt.timestamp_col, fmt.price_col} - set(df.columns)
    if missing:
        raise InputError(f"tick input lacks column(s) {sorted(missing)}")
    ts = pd.to_datetime(df[fmt.timestamp_col], format=fmt.timestamp_format,
                        errors="coerce")
    price = pd.to_numeric(df[fmt.price_col], errors="coerce")
    ok = ts.notna() & price.notna() & np.isfinite(price) & (price > 0)
    n_rejected = int((~ok).sum())
    if n_rejected:
        warnings.warn(f"rejected {n_rejected} malformed or non-positive tick "
                      "rows", DataWarning, stacklevel=2)
    if not ok.any():
        raise EmptyInputError("no valid tick records")
    ts = ts[ok].to_numpy(dtype="datetime64[ns]")
    price = price[ok].to_numpy(dtype=float)
    order = np.argsort(ts, kind="stable")
    return TickSeries(ts[order], price[order], n_rejected, symbol)


def _resample_day(date, stamps, prices, cal, late_open):
    o, c = cal.session(date)
    n = _minutes_between(o, c)
    open_ns = np.datetime64(dt.datetime.combine(date, o), "ns")
    close_ns = open_ns + np.timedelta64(n, "m")
    lo, hi = np.searchsorted(stamps, [open_ns, close_ns], side="left")
    stamps, prices = stamps[lo:hi], prices[lo:hi]
    if not len(stamps):
        return None, f"{date}: no trades in session, day skipped"
    bounds = open_ns + np.arange(1, n + 1).astype("timedelta64[m]")
    last = np.searchsorted(stamps, bounds, side="left") - 1
    first = int(np.argmax(last >= 0))
    if first > 0 and late_open == "skip":
        return None, f"{date}: no trade in first session minute, day skipped"
    minutes = np.arange(first, n, dtype=np.int64)
    return DayPrices(date, minutes, prices[last[first:]]), None


def resample_minutes(ticks, cal, late_open="skip", n_jobs=None):
    """Resample sorted ticks to one price per session minute per day.

    With ``late_open="skip"`` a day whose first session minute has no trade
    is dropped; with ``"trim"`` it keeps only its effective trading minutes
    starting from the first traded minute.  Shortened sessions are declared
    through the calendar's per-day overrides.
    """
    if late_open not in ("skip", "trim"):
        raise ConfigError(f"late_open must be 'skip' or 'trim', got {late_open!r}")
    stamps = np.asarray(ticks.timestamps, dtype="datetime64[ns]")
    prices = np.asarray(ticks.prices, dtype=float)
    day_of = stamps.astype("datetime64[D]")
    dates, starts = np.unique(day_of, return_index=True)
    ends = np.append(starts[1:], len(stamps))
    jobs = [(d.astype(dt.date), stamps[s:e], prices[s:e])
            for d, s, e in zip(dates, starts, ends)]
    if n_jobs and n_jobs != 1:
        from joblib import Parallel, delayed
        results = Parallel(n_jobs=n_jobs, prefer="threads")(
            delayed(_resample_day)(d, s, p, cal, late_open) for d, s, p in jobs)
    else:
        results = [_resample_day(d, s, p, cal, late_open) for d, s, p in jobs]
    days = []
    for day, msg in results:
        if msg:
            warnings.warn(msg, DataWarning, stacklevel=2)
        else:
            days.append(day)
    return PriceSeries(tuple(days), ticks.symbol, cal.calendar_id)


def compute_returns(prices):
    """Minute returns ``(S(t+1) - S(t)) / S(t)`` within each day."""
    values, day_starts, dates, overnight = [], [], [], []
    offset = 0
    prev_close = None
    for day in prices.days:
        p = np.asarray(day.prices, dtype=float)
        if np.any(p <= 0):
            raise InputError(f"{day.date}: non-positive price")
        if prev_close is not None and len(p):
            overnight.append(p[0] / prev_close - 1.0)
        if len(p):
            prev_close = p[-1]
        if len(p) < 2:
            warnings.warn(f"{day.date}: fewer than 2 minutes, no returns",
                          DataWarning, stacklevel=2)
            continue
        r = np.diff(p) / p[:-1]
        values.append(r)
        day_starts.append(offset)
        dates.append(day.date)
        offset += len(r)
    vals = np.concatenate(values) if values else np.array([])
    return RawReturnSeries(vals, np.asarray(day_starts, dtype=np.int64),
                           tuple(dates), np.asarray(overnight, dtype=float))


def read_calendar(path):
    """Load a calendar from a YAML/JSON file or a preset id."""
    if path in CALENDARS:
        return CALENDARS[path]
    if not os.path.exists(path):
        raise ConfigError(f"calendar {path!r} is neither a file nor a preset "
                          f"({', '.join(sorted(CALENDARS))})")
    import yaml
    with open(path) as fh:
        return TradingCalendar.from_dict(yaml.safe_load(fh) or {})
