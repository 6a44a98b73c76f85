"""Input acquisition: strict CSV parsers for the three source tables,
universe selection, and a snapshot fetcher for per-coin history endpoints.

Parsers are deliberately unforgiving. A malformed row names its line number,
headers must match exactly (extra columns rejected, not ignored), dates must
be ISO, and duplicates are errors: silent repair upstream turns into
unexplainable numbers downstream.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .errors import (
    DuplicateDate,
    EmptyUniverse,
    HttpError,
    MalformedRow,
    NegativeLevel,
    NonPositivePrice,
    RateLimited,
)

MARKET_HEADER = ("date", "close", "volume", "market_cap")
EPU_HEADER = ("date", "epu")
RISKFREE_HEADER = ("date", "rate")


@dataclass(frozen=True)
class DailyBar:
    """One coin-day: close in USD, 24h traded value in USD, cap in USD."""

    date: dt.date
    close: float
    volume: float
    market_cap: float


@dataclass(frozen=True)
class CoinSeries:
    coin_id: str
    bars: tuple[DailyBar, ...]  # ascending by date, unique dates

    def first_date(self) -> dt.date:
        return self.bars[0].date

    def last_date(self) -> dt.date:
        return self.bars[-1].date

    def cap_at_or_before(self, date: dt.date) -> float | None:
        cap = None
        for bar in self.bars:
            if bar.date > date:
                break
            cap = bar.market_cap
        return cap

    def truncated(self, last: dt.date) -> "CoinSeries":
        """Copy containing only bars dated at or before `last`."""
        return CoinSeries(self.coin_id, tuple(b for b in self.bars if b.date <= last))


@dataclass(frozen=True)
class UniverseConfig:
    """Universe filter: coins ranked by cap at rank_date, kept if their
    history starts at least min_history_days earlier."""

    rank_date: dt.date
    top_n: int = 200
    min_history_days: int = 365


def _read_rows(source: str | Path | io.TextIOBase) -> Iterable[list[str]]:
    if isinstance(source, (str, Path)):
        with open(source, newline="") as handle:
            yield from csv.reader(handle)
    else:
        yield from csv.reader(source)


def _check_header(row: Sequence[str] | None, expected: tuple[str, ...]) -> None:
    if row is None:
        raise MalformedRow(1, "empty input, expected a header row")
    if tuple(row) != expected:
        raise MalformedRow(1, f"header {row!r}, expected {list(expected)!r}")


def _parse_date(text: str, line: int) -> dt.date:
    try:
        return dt.date.fromisoformat(text)
    except ValueError:
        raise MalformedRow(line, f"bad date {text!r}") from None


def _parse_float(text: str, line: int, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise MalformedRow(line, f"bad {column} {text!r}") from None
    if value != value or value in (float("inf"), float("-inf")):
        raise MalformedRow(line, f"non-finite {column} {text!r}")
    return value


def parse_market_csv(source: str | Path | io.TextIOBase, coin_id: str) -> CoinSeries:
    """Parse one coin's date,close,volume,market_cap table.

    Rows may arrive in any order; bars come out sorted ascending. Raises
    MalformedRow (with the 1-based line number) for structural problems,
    NonPositivePrice for close <= 0, and DuplicateDate when a date repeats.
    """
    rows = iter(_read_rows(source))
    _check_header(next(rows, None), MARKET_HEADER)
    bars = []
    for line, row in enumerate(rows, start=2):
        if not row:
            continue
        if len(row) != 4:
            raise MalformedRow(line, f"{len(row)} fields, expected 4")
        date = _parse_date(row[0], line)
        close = _parse_float(row[1], line, "close")
        volume = _parse_float(row[2], line, "volume")
        cap = _parse_float(row[3], line, "market_cap")
        if close <= 0.0:
            raise NonPositivePrice(date)
        if volume < 0.0:
            raise MalformedRow(line, f"negative volume {row[2]!r}")
        if cap < 0.0:
            raise MalformedRow(line, f"negative market_cap {row[3]!r}")
        bars.append(DailyBar(date, close, volume, cap))
    bars.sort(key=lambda b: b.date)
    for prev, cur in zip(bars, bars[1:]):
        if prev.date == cur.date:
            raise DuplicateDate(cur.date, context=coin_id)
    return CoinSeries(coin_id=coin_id, bars=tuple(bars))


def _parse_level_csv(
    source: str | Path | io.TextIOBase,
    header: tuple[str, ...],
    column: str,
    allow_negative: bool,
) -> dict[dt.date, float]:
    rows = iter(_read_rows(source))
    _check_header(next(rows, None), header)
    values: dict[dt.date, float] = {}
    for line, row in enumerate(rows, start=2):
        if not row:
            continue
        if len(row) != 2:
            raise MalformedRow(line, f"{len(row)} fields, expected 2")
        date = _parse_date(row[0], line)
        value = _parse_float(row[1], line, column)
        if not allow_negative and value < 0.0:
            raise NegativeLevel(date)
        if date in values:
            raise DuplicateDate(date, context=column)
        values[date] = value
    return dict(sorted(values.items()))


def parse_epu_csv(source: str | Path | io.TextIOBase) -> dict[dt.date, float]:
    """Parse the date,epu uncertainty series. Negative levels are rejected.

    Returns a dict whose iteration order is ascending by date.
    """
    return _parse_level_csv(source, EPU_HEADER, "epu", allow_negative=False)


def parse_riskfree_csv(source: str | Path | io.TextIOBase) -> dict[dt.date, float]:
    """Parse the date,rate annualized risk-free series. Rates may be negative."""
    return _parse_level_csv(source, RISKFREE_HEADER, "rate", allow_negative=True)


def write_market_csv(series: CoinSeries, path: str | Path) -> None:
    """Inverse of parse_market_csv, with repr round-trip float formatting."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(MARKET_HEADER)
        for bar in series.bars:
            writer.writerow(
                [
                    bar.date.isoformat(),
                    repr(bar.close),
                    repr(bar.volume),
                    repr(bar.market_cap),
                ]
            )


def filter_universe(
    coins: Sequence[CoinSeries], cfg: UniverseConfig
) -> tuple[str, ...]:
    """Select the estimation universe as of cfg.rank_date.

    A coin qualifies when its first bar is at least min_history_days before
    rank_date and it has a market-cap observation at or before rank_date
    (the latest such bar ranks it). Qualifying coins are ordered by that cap,
    descending, ties broken by ascending coin_id, and the top_n ids returned.
    Raises EmptyUniverse when nothing survives.
    """
    ranked = []
    for coin in coins:
        if not coin.bars:
            continue
        age = (cfg.rank_date - coin.first_date()).days
        if age < cfg.min_history_days:
            continue
        cap = coin.cap_at_or_before(cfg.rank_date)
        if cap is None:
            continue
        ranked.append((-cap, coin.coin_id))
    if not ranked:
        raise EmptyUniverse(
            f"no coins with {cfg.min_history_days}+ days of history "
            f"at {cfg.rank_date}"
        )
    ranked.sort()
    return tuple(coin_id for _, coin_id in ranked[: cfg.top_n])


@dataclass(frozen=True)
class FetchConfig:
    """Endpoint description for fetch_snapshot.

    base_url must contain {coin_id}, {start}, {end} placeholders. If
    api_key_env is set and the variable is present, its value is sent as an
    X-Api-Key header.
    """

    base_url: str
    api_key_env: str | None = None
    timeout_s: float = 30.0
    max_attempts: int = 5
    concurrency: int = 4
    backoff_s: float = 1.0


def _fetch_one(
    cfg: FetchConfig,
    session,
    coin_id: str,
    start: dt.date,
    end: dt.date,
    sleep: Callable[[float], None],
) -> str:
    url = cfg.base_url.format(coin_id=coin_id, start=start, end=end)
    headers = {}
    if cfg.api_key_env:
        key = os.environ.get(cfg.api_key_env)
        if key:
            headers["X-Api-Key"] = key
    for attempt in range(1, cfg.max_attempts + 1):
        response = session.get(url, headers=headers, timeout=cfg.timeout_s)
        if response.status_code == 200:
            return response.text
        if response.status_code != 429:
            raise HttpError(response.status_code, url)
        if attempt < cfg.max_attempts:
            sleep(cfg.backoff_s * 2 ** (attempt - 1))
    raise RateLimited(url, cfg.max_attempts)


def fetch_snapshot(
    cfg: FetchConfig,
    coin_ids: Sequence[str],
    start: dt.date,
    end: dt.date,
    out_dir: str | Path,
    session=None,
    sleep: Callable[[float], None] = time.sleep,
) -> dict[str, Path]:
    """Download per-coin market history into out_dir as <coin_id>.csv.

    Each payload is validated with parse_market_csv before anything is
    written, so a half-broken response never lands on disk; re-fetching
    overwrites. Fetches run on a small thread pool; 429 responses back off
    exponentially and give up after max_attempts. A requests-compatible
    session object can be injected for testing.
    """
    if session is None:
        import requests

        session = requests.Session()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    def work(coin_id: str) -> tuple[str, Path]:
        text = _fetch_one(cfg, session, coin_id, start, end, sleep)
        parse_market_csv(io.StringIO(text), coin_id)
        path = out / f"{coin_id}.csv"
        path.write_text(text)
        return coin_id, path

    results: dict[str, Path] = {}
    with ThreadPoolExecutor(max_workers=cfg.concurrency) as pool:
        for coin_id, path in pool.map(work, coin_ids):
            results[coin_id] = path
    return dict(sorted(results.items()))


def load_coin_dir(directory: str | Path) -> tuple[CoinSeries, ...]:
    """Read every *.csv in directory as one coin. The stem is the coin id."""
    return tuple(
        parse_market_csv(path, path.stem)
        for path in sorted(Path(directory).glob("*.csv"))
    )
