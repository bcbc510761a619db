"""CSV ingestion, record assembly, filtering and the chronological split.

Three CSV inputs are understood:

* underlying bars  ``date,open,high,low,close``
* option quotes    ``date,expiry,strike,close,prev_close,volume``
  (``prev_close`` may be empty)
* yields           ``date,rate``  (annualised decimal)

Dates are ISO ``YYYY-MM-DD``.
"""
from __future__ import annotations

import bisect
import csv
import datetime as dt
import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

WINDOW = 20
MONEYNESS_TOL = 0.04
MIN_TTM = 3
MAX_TTM = 45


class ParseError(ValueError):
    def __init__(self, path, line, msg):
        super().__init__(f"{path}:{line}: {msg}")
        self.path = path
        self.line = line


class DuplicateDateError(ParseError):
    pass


class SplitError(ValueError):
    pass


@dataclass(frozen=True)
class UnderlyingBar:
    date: dt.date
    open: float
    high: float
    low: float
    close: float

    def __post_init__(self):
        if not self.low > 0:
            raise ValueError(f"low must be positive, got {self.low}")
        if self.low > min(self.open, self.close) or self.high < max(self.open, self.close):
            raise ValueError("bar violates low <= open, close <= high")


@dataclass(frozen=True)
class OptionQuote:
    date: dt.date
    expiry: dt.date
    strike: float
    close: float
    prev_close: float | None
    volume: float

    def __post_init__(self):
        if not self.strike > 0:
            raise ValueError(f"strike must be positive, got {self.strike}")
        if self.close < 0:
            raise ValueError(f"close must be non-negative, got {self.close}")
        if self.prev_close is not None and self.prev_close < 0:
            raise ValueError(f"prev_close must be non-negative, got {self.prev_close}")
        if self.volume < 0:
            raise ValueError(f"volume must be non-negative, got {self.volume}")
        if self.expiry < self.date:
            raise ValueError(f"expiry {self.expiry} precedes quote date {self.date}")


@dataclass(frozen=True)
class YieldPoint:
    date: dt.date
    rate: float

    def __post_init__(self):
        if not self.rate > -0.05:
            raise ValueError(f"implausible yield {self.rate}")


@dataclass(frozen=True, eq=False)
class ContractRecord:
    """One option observation with its 20-bar underlying window.

    ``window`` is a ``(20, 4)`` array of open/high/low/close, oldest first.
    """

    quote: OptionQuote
    spot: float
    window: np.ndarray
    window_dates: tuple[dt.date, ...]
    ttm: int
    rate: float

    def __post_init__(self):
        w = np.asarray(self.window, dtype=float)
        if w.shape != (WINDOW, 4):
            raise ValueError(f"window must have shape ({WINDOW}, 4), got {w.shape}")
        if len(self.window_dates) != WINDOW or any(
            a >= b for a, b in zip(self.window_dates, self.window_dates[1:])
        ):
            raise ValueError("window dates must be 20 strictly increasing dates")
        if self.spot != w[-1, 3]:
            raise ValueError("spot must equal the last window close")
        if self.ttm < 1:
            raise ValueError(f"ttm must be >= 1 day, got {self.ttm}")
        w.setflags(write=False)
        object.__setattr__(self, "window", w)

    @property
    def date(self) -> dt.date:
        return self.quote.date

    @property
    def strike(self) -> float:
        return self.quote.strike

    @property
    def close(self) -> float:
        return self.quote.close

    @property
    def prev_close(self) -> float | None:
        return self.quote.prev_close

    @property
    def closes(self) -> np.ndarray:
        return self.window[:, 3]


@dataclass
class SplitDataset:
    train: list[ContractRecord] = field(default_factory=list)
    test: list[ContractRecord] = field(default_factory=list)


def _parse_date(s):
    return dt.date.fromisoformat(s.strip())


def _rows(path, header):
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            got = [h.strip().lower() for h in next(reader)]
        except StopIteration:
            raise ParseError(path, 1, "missing header") from None
        if got != header:
            raise ParseError(path, 1, f"expected header {','.join(header)}, got {','.join(got)}")
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(path, reader.line_num, f"expected {len(header)} fields, got {len(row)}")
            yield reader.line_num, row


def parse_underlying_csv(path) -> list[UnderlyingBar]:
    """Read OHLC bars, sorted by date.  Duplicate dates are rejected."""
    bars, seen = [], {}
    for line, row in _rows(path, ["date", "open", "high", "low", "close"]):
        try:
            bar = UnderlyingBar(_parse_date(row[0]), *(float(v) for v in row[1:]))
        except ValueError as exc:
            raise ParseError(path, line, str(exc)) from None
        if bar.date in seen:
            raise DuplicateDateError(path, line, f"date {bar.date} already seen on line {seen[bar.date]}")
        seen[bar.date] = line
        bars.append(bar)
    bars.sort(key=lambda b: b.date)
    return bars


def parse_option_csv(path) -> list[OptionQuote]:
    """Read option quotes in file order; an empty ``prev_close`` becomes ``None``."""
    quotes = []
    for line, row in _rows(path, ["date", "expiry", "strike", "close", "prev_close", "volume"]):
        try:
            prev = row[4].strip()
            quotes.append(
                OptionQuote(
                    date=_parse_date(row[0]),
                    expiry=_parse_date(row[1]),
                    strike=float(row[2]),
                    close=float(row[3]),
                    prev_close=float(prev) if prev else None,
                    volume=float(row[5]),
                )
            )
        except ValueError as exc:
            raise ParseError(path, line, str(exc)) from None
    return quotes


def parse_yield_csv(path) -> list[YieldPoint]:
    points = []
    for line, row in _rows(path, ["date", "rate"]):
        try:
            points.append(YieldPoint(_parse_date(row[0]), float(row[1])))
        except ValueError as exc:
            raise ParseError(path, line, str(exc)) from None
    points.sort(key=lambda p: p.date)
    return points


def build_records(bars, quotes, yields, drops: Counter | None = None) -> list[ContractRecord]:
    """Join quotes with their trailing 20-bar window and the prevailing yield.

    Quotes without a bar on their own date, with fewer than 20 bars up to and
    including that date, or with no yield on or before it are dropped and
    tallied in ``drops`` under ``no_spot``, ``insufficient_window`` and
    ``no_yield``.  Output is sorted by (date, expiry, strike), so the result
    does not depend on quote order.
    """
    drops = Counter() if drops is None else drops
    bars = sorted(bars, key=lambda b: b.date)
    dates = [b.date for b in bars]
    ohlc = np.array([[b.open, b.high, b.low, b.close] for b in bars], dtype=float).reshape(-1, 4)
    index = {d: i for i, d in enumerate(dates)}
    yields = sorted(yields, key=lambda y: y.date)
    ydates = [y.date for y in yields]

    records = []
    for q in sorted(quotes, key=lambda q: (q.date, q.expiry, q.strike, q.close)):
        i = index.get(q.date)
        if i is None:
            drops["no_spot"] += 1
            continue
        if i + 1 < WINDOW:
            drops["insufficient_window"] += 1
            continue
        j = bisect.bisect_right(ydates, q.date) - 1
        if j < 0:
            drops["no_yield"] += 1
            continue
        ttm = (q.expiry - q.date).days
        if ttm < 1:
            drops["expired"] += 1
            continue
        lo = i + 1 - WINDOW
        records.append(
            ContractRecord(
                quote=q,
                spot=float(ohlc[i, 3]),
                window=ohlc[lo : i + 1].copy(),
                window_dates=tuple(dates[lo : i + 1]),
                ttm=ttm,
                rate=yields[j].rate,
            )
        )
    return records


def is_near_atm(spot, strike, tol=MONEYNESS_TOL) -> bool:
    """``|1 - S/K| <= tol``, inclusive up to floating-point noise."""
    return abs(1.0 - spot / strike) <= tol + 1e-12


FILTER_RULES = {
    "moneyness": lambda r: is_near_atm(r.spot, r.strike),
    "ttm": lambda r: MIN_TTM <= r.ttm <= MAX_TTM,
    "prev_close": lambda r: r.prev_close is not None and r.prev_close > 0,
    "untraded": lambda r: r.quote.volume > 0,
}


def filter_records(records, drops: Counter | None = None) -> list[ContractRecord]:
    """Keep near-ATM, 3..45 day, traded contracts with a positive previous close.

    Every failed rule is tallied in ``drops`` (a record failing two rules
    counts under both).
    """
    drops = Counter() if drops is None else drops
    kept = []
    for rec in records:
        failed = [name for name, ok in FILTER_RULES.items() if not ok(rec)]
        drops.update(failed)
        if not failed:
            kept.append(rec)
    return kept


def chronological_split(records, train_fraction: float = 0.7) -> SplitDataset:
    """Split at the date boundary whose train share is closest to ``train_fraction``.

    Records sharing a date never straddle the boundary; ties between two
    equally close boundaries go to the earlier one.
    """
    if not records:
        raise SplitError("cannot split an empty record list")
    if not 0 < train_fraction < 1:
        raise SplitError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    ordered = sorted(records, key=lambda r: (r.date, r.quote.expiry, r.strike))
    dates = np.array([r.date.toordinal() for r in ordered])
    # candidate cut positions: first index of every date after the first
    cuts = np.flatnonzero(np.diff(dates)) + 1
    if cuts.size == 0:
        raise SplitError("all records share one date; no chronological split exists")
    cut = int(cuts[np.argmin(np.abs(cuts / len(ordered) - train_fraction))])
    return SplitDataset(train=ordered[:cut], test=ordered[cut:])


DATASET_FORMAT = "optbin.dataset"
DATASET_VERSION = 1


def _record_to_dict(r: ContractRecord) -> dict:
    q = r.quote
    return {
        "date": q.date.isoformat(),
        "expiry": q.expiry.isoformat(),
        "strike": q.strike,
        "close": q.close,
        "prev_close": q.prev_close,
        "volume": q.volume,
        "spot": r.spot,
        "ttm": r.ttm,
        "rate": r.rate,
        "window_dates": [d.isoformat() for d in r.window_dates],
        "window": r.window.tolist(),
    }


def _record_from_dict(d: dict) -> ContractRecord:
    q = OptionQuote(
        _parse_date(d["date"]), _parse_date(d["expiry"]), d["strike"], d["close"], d["prev_close"], d["volume"]
    )
    return ContractRecord(
        q, d["spot"], np.asarray(d["window"], dtype=float), tuple(_parse_date(s) for s in d["window_dates"]),
        d["ttm"], d["rate"],
    )


def save_dataset(path, dataset: SplitDataset, **meta):
    """Write a split dataset as one JSON document; ``meta`` is stored alongside."""
    doc = {
        "format": DATASET_FORMAT,
        "version": DATASET_VERSION,
        **meta,
        "train": [_record_to_dict(r) for r in dataset.train],
        "test": [_record_to_dict(r) for r in dataset.test],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_dataset(path) -> SplitDataset:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != DATASET_FORMAT or doc.get("version") != DATASET_VERSION:
        raise ValueError(f"{path}: not a {DATASET_FORMAT} v{DATASET_VERSION} document")
    return SplitDataset(
        [_record_from_dict(d) for d in doc["train"]], [_record_from_dict(d) for d in doc["test"]]
    )
