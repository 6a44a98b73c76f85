"""Aligned coin-day panel: daily returns, excess returns, lagged coin
characteristics, and lagged conditioning variables (uncertainty level,
Bitcoin return).

Look-ahead safety is the organizing rule: everything attached to an
observation at date t other than the return itself must be computable from
data dated t-1 or earlier. Characteristic windows therefore end at t-1, and
the conditioning values carry an explicit one-day lag.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
import math
from bisect import bisect_right
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    CoverageGap,
    DuplicateDate,
    InsufficientHistory,
    InvalidConfig,
    MalformedRow,
    MissingBitcoin,
    TooShort,
)
from .ingest import CoinSeries

ONE_DAY = dt.timedelta(days=1)

CHARACTERISTIC_NAMES = ("size", "momentum", "liquidity", "value")

# short column codes used by every CSV surface
SHORT_CODES = {"size": "size", "momentum": "mom", "liquidity": "liq", "value": "val"}

PANEL_HEADER = (
    "coin_id",
    "date",
    "ret",
    "excess",
    "size_z",
    "mom_z",
    "liq_z",
    "val_z",
    "size_raw",
    "mom_raw",
    "liq_raw",
    "val_raw",
    "u_lag",
    "rbtc_lag",
)


def compute_returns(series: CoinSeries) -> tuple[tuple[dt.date, float], ...]:
    """Simple daily returns close_t / close_{t-1} - 1.

    A return exists only when the immediately preceding calendar day has a
    bar; after a gap the first day gets no return. Raises TooShort below
    2 bars.
    """
    if len(series.bars) < 2:
        raise TooShort(f"{series.coin_id}: {len(series.bars)} bars, need 2")
    out = []
    for prev, cur in zip(series.bars, series.bars[1:]):
        if cur.date - prev.date == ONE_DAY:
            out.append((cur.date, cur.close / prev.close - 1.0))
    return tuple(out)


def daily_riskfree(annual_rate: float) -> float:
    """Geometric de-annualization over 365 days: (1 + a)^(1/365) - 1."""
    if annual_rate <= -1.0:
        raise ValueError(f"annual rate {annual_rate} must exceed -1")
    return (1.0 + annual_rate) ** (1.0 / 365.0) - 1.0


@dataclass(frozen=True)
class CharacteristicWindows:
    """Lookback windows in calendar days. The momentum window covers
    [d-momentum_days, d-1]; liquidity covers the liquidity_days ending at d;
    the long-horizon value proxy covers [d-value_far_days, d-value_near_days].
    A window with under min_valid_share of its days valid yields no value.
    """

    momentum_days: int = 28
    liquidity_days: int = 30
    value_near_days: int = 31
    value_far_days: int = 365
    min_valid_share: float = 0.5


@dataclass(frozen=True)
class RawCharacteristics:
    """Raw characteristic levels at one coin-date; None marks a
    characteristic whose window had too little data."""

    size: float | None
    momentum: float | None
    liquidity: float | None
    value: float | None

    def get(self, name: str) -> float | None:
        if name not in CHARACTERISTIC_NAMES:
            raise KeyError(name)
        return getattr(self, name)

    def missing(self) -> tuple[str, ...]:
        return tuple(n for n in CHARACTERISTIC_NAMES if getattr(self, n) is None)


class _CoinView:
    """Per-coin lookup tables shared by characteristic computation."""

    def __init__(self, series: CoinSeries, windows: CharacteristicWindows):
        self.windows = windows
        self.bars = {bar.date: bar for bar in series.bars}
        if len(series.bars) >= 2:
            self.returns = dict(compute_returns(series))
        else:
            self.returns = {}

    def _cumulative_return(
        self, date: dt.date, first_back: int, last_back: int
    ) -> float | None:
        # window [date - last_back, date - first_back], both inclusive
        window_len = last_back - first_back + 1
        growth = 1.0
        valid = 0
        for back in range(first_back, last_back + 1):
            ret = self.returns.get(date - dt.timedelta(days=back))
            if ret is not None:
                growth *= 1.0 + ret
                valid += 1
        if valid < self.windows.min_valid_share * window_len:
            return None
        return growth - 1.0

    def raw_at(self, date: dt.date) -> RawCharacteristics:
        w = self.windows
        bar = self.bars.get(date)
        size = None
        if bar is not None and bar.market_cap > 0.0:
            size = math.log(bar.market_cap)

        momentum = self._cumulative_return(date, 1, w.momentum_days)

        amihud_sum = 0.0
        amihud_days = 0
        for back in range(w.liquidity_days):
            day = date - dt.timedelta(days=back)
            ret = self.returns.get(day)
            day_bar = self.bars.get(day)
            if ret is None or day_bar is None or day_bar.volume <= 0.0:
                continue
            amihud_sum += abs(ret) / day_bar.volume
            amihud_days += 1
        liquidity = None
        if amihud_days >= w.min_valid_share * w.liquidity_days:
            mean = amihud_sum / amihud_days
            if mean > 0.0:
                liquidity = -math.log(mean)

        long_term = self._cumulative_return(date, w.value_near_days, w.value_far_days)
        value = None if long_term is None else -long_term

        return RawCharacteristics(size, momentum, liquidity, value)


def compute_characteristics(
    series: CoinSeries,
    date: dt.date,
    windows: CharacteristicWindows = CharacteristicWindows(),
    require_all: bool = False,
) -> RawCharacteristics:
    """Raw characteristics for one coin at one date.

    size: ln(market cap at date); momentum: cumulative return over the
    momentum window ending the day before; liquidity: -ln(mean |ret|/volume
    over the liquidity window, zero-volume days excluded); value: sign-flipped
    cumulative return over the long-horizon window. A window with under
    min_valid_share valid days yields None, or InsufficientHistory when
    require_all is set.
    """
    raw = _CoinView(series, windows).raw_at(date)
    if require_all:
        missing = raw.missing()
        if missing:
            raise InsufficientHistory(missing[0], f"{series.coin_id} at {date}")
    return raw


@dataclass(frozen=True)
class CharacteristicVector:
    """Cross-sectionally standardized characteristics with raw levels kept
    alongside. z fields are winsorized z-scores within the observation date's
    cross-section."""

    size: float
    momentum: float
    liquidity: float
    value: float
    size_raw: float
    momentum_raw: float
    liquidity_raw: float
    value_raw: float

    def z(self, name: str) -> float:
        if name not in CHARACTERISTIC_NAMES:
            raise KeyError(name)
        return getattr(self, name)

    def raw(self, name: str) -> float:
        if name not in CHARACTERISTIC_NAMES:
            raise KeyError(name)
        return getattr(self, f"{name}_raw")


@dataclass(frozen=True)
class ConditioningInfo:
    """Lagged state at t-1: standardized uncertainty level and Bitcoin
    daily return in raw decimal units."""

    u: float
    r_btc: float


@dataclass(frozen=True)
class PanelObservation:
    coin_id: str
    date: dt.date
    ret: float
    excess: float
    chars: CharacteristicVector
    cond: ConditioningInfo


@dataclass(frozen=True)
class Drop:
    """One excluded coin-day (date None when the whole coin fell out)."""

    coin_id: str
    date: dt.date | None
    reason: str


@dataclass(frozen=True)
class Panel:
    """Immutable observation set with date and coin indexes.

    observations are sorted by (date, coin_id); each (coin, date) appears at
    most once. riskfree_mode records whether excess returns were taken
    against the treasury rate ("tbill") or the Bitcoin return ("btc").
    """

    observations: tuple[PanelObservation, ...]
    riskfree_mode: str
    dropped: tuple[Drop, ...] = ()
    _by_date: dict = field(init=False, repr=False, compare=False, default=None)
    _by_coin: dict = field(init=False, repr=False, compare=False, default=None)

    def __post_init__(self):
        by_date: dict[dt.date, list[PanelObservation]] = {}
        by_coin: dict[str, list[PanelObservation]] = {}
        for obs in self.observations:
            by_date.setdefault(obs.date, []).append(obs)
            by_coin.setdefault(obs.coin_id, []).append(obs)
        object.__setattr__(
            self, "_by_date", {d: tuple(v) for d, v in sorted(by_date.items())}
        )
        object.__setattr__(
            self, "_by_coin", {c: tuple(v) for c, v in sorted(by_coin.items())}
        )

    @classmethod
    def from_observations(
        cls,
        observations: Iterable[PanelObservation],
        riskfree_mode: str,
        dropped: Iterable[Drop] = (),
    ) -> "Panel":
        obs = sorted(observations, key=lambda o: (o.date, o.coin_id))
        seen = set()
        for o in obs:
            key = (o.coin_id, o.date)
            if key in seen:
                raise DuplicateDate(o.date, context=o.coin_id)
            seen.add(key)
        return cls(tuple(obs), riskfree_mode, tuple(dropped))

    def dates(self) -> tuple[dt.date, ...]:
        return tuple(self._by_date)

    def coins(self) -> tuple[str, ...]:
        return tuple(self._by_coin)

    def by_date(self, date: dt.date) -> tuple[PanelObservation, ...]:
        return self._by_date.get(date, ())

    def by_coin(self, coin_id: str) -> tuple[PanelObservation, ...]:
        return self._by_coin.get(coin_id, ())


def winsorized_zscores(
    values: Sequence[float] | np.ndarray, lower: float = 1.0, upper: float = 99.0
) -> np.ndarray:
    """Winsorize at the given cross-sectional percentiles, then z-score with
    the population standard deviation. Under 2 values, or zero variance after
    clipping, every score is 0."""
    x = np.asarray(values, dtype=float)
    if x.size < 2:
        return np.zeros_like(x)
    lo, hi = np.percentile(x, [lower, upper])
    w = np.clip(x, lo, hi)
    sd = float(w.std())
    if sd == 0.0:
        return np.zeros_like(x)
    return (w - w.mean()) / sd


def standardize_cross_section(
    panel: Panel, lower: float = 1.0, upper: float = 99.0
) -> Panel:
    """Recompute every z-unit characteristic from the stored raw levels,
    per date across coins. Idempotent; raw values pass through unchanged."""
    out = []
    for date in panel.dates():
        obs = panel.by_date(date)
        zs = {
            name: winsorized_zscores([o.chars.raw(name) for o in obs], lower, upper)
            for name in CHARACTERISTIC_NAMES
        }
        for i, o in enumerate(obs):
            chars = CharacteristicVector(
                size=float(zs["size"][i]),
                momentum=float(zs["momentum"][i]),
                liquidity=float(zs["liquidity"][i]),
                value=float(zs["value"][i]),
                size_raw=o.chars.size_raw,
                momentum_raw=o.chars.momentum_raw,
                liquidity_raw=o.chars.liquidity_raw,
                value_raw=o.chars.value_raw,
            )
            out.append(
                PanelObservation(o.coin_id, o.date, o.ret, o.excess, chars, o.cond)
            )
    return Panel.from_observations(out, panel.riskfree_mode, panel.dropped)


@dataclass(frozen=True)
class PanelOptions:
    riskfree_mode: str = "tbill"
    btc_id: str = "BTC"
    ffill_limit_days: int = 3
    windows: CharacteristicWindows = CharacteristicWindows()
    winsor: tuple[float, float] = (1.0, 99.0)


class _ForwardFilled:
    """Stepwise lookup with a staleness bound. A date before the first
    observation resolves to None (the sample has not started); a date more
    than limit_days past the latest observation at or before it is a
    CoverageGap."""

    def __init__(self, values: Mapping[dt.date, float], limit_days: int, name: str):
        self.name = name
        self.limit = limit_days
        self.dates = sorted(values)
        self.values = dict(values)

    def at(self, date: dt.date) -> float | None:
        idx = bisect_right(self.dates, date) - 1
        if idx < 0:
            return None
        anchor = self.dates[idx]
        if (date - anchor).days > self.limit:
            raise CoverageGap(self.name, date)
        return self.values[anchor]


def build_panel(
    coins: Sequence[CoinSeries],
    epu: Mapping[dt.date, float],
    riskfree: Mapping[dt.date, float],
    options: PanelOptions = PanelOptions(),
) -> Panel:
    """Assemble the estimation panel.

    An observation (coin, t) exists when all of these resolve: the return at
    t (consecutive-day rule), the Bitcoin return at t-1, the uncertainty
    level at t-1 (forward-filled up to ffill_limit_days), the risk-free rate
    at t (same fill rule; in btc mode the Bitcoin return at t instead), and
    all four raw characteristics at t-1. Anything else becomes a Drop record.
    Uncertainty is z-scored over the distinct conditioning dates of the final
    sample; characteristics are winsorized and z-scored per date.
    """
    if options.riskfree_mode not in ("tbill", "btc"):
        raise InvalidConfig(f"unknown riskfree_mode {options.riskfree_mode!r}")
    btc = next((c for c in coins if c.coin_id == options.btc_id), None)
    if btc is None:
        raise MissingBitcoin(
            f"conditioning requires {options.btc_id!r} among the input series"
        )
    btc_returns = dict(compute_returns(btc))
    epu_fill = _ForwardFilled(epu, options.ffill_limit_days, "epu")
    rf_fill = _ForwardFilled(riskfree, options.ffill_limit_days, "riskfree")

    drops: list[Drop] = []
    candidates = []
    for coin in sorted(coins, key=lambda c: c.coin_id):
        if options.riskfree_mode == "btc" and coin.coin_id == options.btc_id:
            drops.append(Drop(coin.coin_id, None, "btc_is_riskfree"))
            continue
        if len(coin.bars) < 2:
            drops.append(Drop(coin.coin_id, None, "too_short"))
            continue
        view = _CoinView(coin, options.windows)
        for date in sorted(view.returns):
            ret = view.returns[date]
            lag = date - ONE_DAY
            r_btc = btc_returns.get(lag)
            if r_btc is None:
                drops.append(Drop(coin.coin_id, date, "no_btc_return_lag"))
                continue
            u_raw = epu_fill.at(lag)
            if u_raw is None:
                drops.append(Drop(coin.coin_id, date, "no_epu"))
                continue
            if options.riskfree_mode == "tbill":
                annual = rf_fill.at(date)
                if annual is None:
                    drops.append(Drop(coin.coin_id, date, "no_riskfree"))
                    continue
                excess = ret - daily_riskfree(annual)
            else:
                btc_today = btc_returns.get(date)
                if btc_today is None:
                    drops.append(Drop(coin.coin_id, date, "no_btc_return"))
                    continue
                excess = ret - btc_today
            raw = view.raw_at(lag)
            missing = raw.missing()
            if missing:
                drops.append(Drop(coin.coin_id, date, f"missing_{missing[0]}"))
                continue
            candidates.append((coin.coin_id, date, ret, excess, raw, lag, u_raw))

    u_by_date = {lag: u_raw for _, _, _, _, _, lag, u_raw in candidates}
    u_values = np.array([u_by_date[d] for d in sorted(u_by_date)], dtype=float)
    if u_values.size >= 2 and float(u_values.std()) > 0.0:
        u_mean = float(u_values.mean())
        u_sd = float(u_values.std())
    else:
        u_mean, u_sd = 0.0, 0.0

    observations = []
    for coin_id, date, ret, excess, raw, lag, u_raw in candidates:
        u_z = (u_raw - u_mean) / u_sd if u_sd > 0.0 else 0.0
        chars = CharacteristicVector(
            size=0.0,
            momentum=0.0,
            liquidity=0.0,
            value=0.0,
            size_raw=raw.size,
            momentum_raw=raw.momentum,
            liquidity_raw=raw.liquidity,
            value_raw=raw.value,
        )
        cond = ConditioningInfo(u=u_z, r_btc=btc_returns[lag])
        observations.append(PanelObservation(coin_id, date, ret, excess, chars, cond))

    panel = Panel.from_observations(observations, options.riskfree_mode, drops)
    return standardize_cross_section(panel, *options.winsor)


def write_panel_csv(panel: Panel, path: str | Path) -> None:
    """Serialize observations in (coin_id, date) order with repr round-trip
    float formatting."""
    rows = sorted(panel.observations, key=lambda o: (o.coin_id, o.date))
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(PANEL_HEADER)
        for o in rows:
            writer.writerow(
                [
                    o.coin_id,
                    o.date.isoformat(),
                    repr(o.ret),
                    repr(o.excess),
                    repr(o.chars.size),
                    repr(o.chars.momentum),
                    repr(o.chars.liquidity),
                    repr(o.chars.value),
                    repr(o.chars.size_raw),
                    repr(o.chars.momentum_raw),
                    repr(o.chars.liquidity_raw),
                    repr(o.chars.value_raw),
                    repr(o.cond.u),
                    repr(o.cond.r_btc),
                ]
            )


def read_panel_csv(
    source: str | Path | io.TextIOBase, riskfree_mode: str = "tbill"
) -> Panel:
    """Parse a panel CSV back into a Panel.

    The file format carries no risk-free mode, so the caller supplies it
    (it travels in run configs and manifests).
    """
    if isinstance(source, (str, Path)):
        with open(source, newline="") as handle:
            return _read_panel_rows(csv.reader(handle), riskfree_mode)
    return _read_panel_rows(csv.reader(source), riskfree_mode)


def _read_panel_rows(rows, riskfree_mode: str) -> Panel:
    header = next(rows, None)
    if header is None or tuple(header) != PANEL_HEADER:
        raise MalformedRow(1, f"header {header!r}, expected {list(PANEL_HEADER)!r}")
    observations = []
    for line, row in enumerate(rows, start=2):
        if not row:
            continue
        if len(row) != len(PANEL_HEADER):
            raise MalformedRow(line, f"{len(row)} fields, expected {len(PANEL_HEADER)}")
        try:
            date = dt.date.fromisoformat(row[1])
            numbers = [float(x) for x in row[2:]]
        except ValueError as exc:
            raise MalformedRow(line, str(exc)) from None
        if not all(math.isfinite(x) for x in numbers):
            raise MalformedRow(line, "non-finite value")
        ret, excess, size_z, mom_z, liq_z, val_z = numbers[:6]
        size_raw, mom_raw, liq_raw, val_raw, u_lag, rbtc_lag = numbers[6:]
        observations.append(
            PanelObservation(
                coin_id=row[0],
                date=date,
                ret=ret,
                excess=excess,
                chars=CharacteristicVector(
                    size=size_z,
                    momentum=mom_z,
                    liquidity=liq_z,
                    value=val_z,
                    size_raw=size_raw,
                    momentum_raw=mom_raw,
                    liquidity_raw=liq_raw,
                    value_raw=val_raw,
                ),
                cond=ConditioningInfo(u=u_lag, r_btc=rbtc_lag),
            )
        )
    return Panel.from_observations(observations, riskfree_mode)


def write_drop_report(drops: Sequence[Drop], path: str | Path) -> None:
    """Audit CSV of excluded coin-days: coin_id,date,reason."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(("coin_id", "date", "reason"))
        for d in drops:
            writer.writerow(
                (d.coin_id, "" if d.date is None else d.date.isoformat(), d.reason)
            )
