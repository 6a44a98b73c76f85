import datetime as dt

import pytest

from coinfactors.ingest import CoinSeries, DailyBar
from coinfactors.panel import (
    CharacteristicVector,
    ConditioningInfo,
    Panel,
    PanelObservation,
)
from coinfactors.synth import generate_synthetic, scenario

D0 = dt.date(2021, 1, 1)


def day(i: int) -> dt.date:
    return D0 + dt.timedelta(days=i)


def make_series(coin_id, closes, start=D0, volume=1_000_000.0, caps=None):
    """CoinSeries over consecutive days; caps default to 100x close."""
    bars = []
    for i, close in enumerate(closes):
        cap = caps[i] if caps is not None else close * 100.0
        bars.append(
            DailyBar(
                date=start + dt.timedelta(days=i),
                close=float(close),
                volume=float(volume),
                market_cap=float(cap),
            )
        )
    return CoinSeries(coin_id, tuple(bars))


def make_obs(
    coin_id,
    date,
    ret=0.0,
    excess=None,
    u=0.0,
    r_btc=0.0,
    size=0.0,
    momentum=0.0,
    liquidity=0.0,
    value=0.0,
    size_raw=18.0,
    momentum_raw=0.0,
    liquidity_raw=17.0,
    value_raw=0.0,
):
    chars = CharacteristicVector(
        size=size,
        momentum=momentum,
        liquidity=liquidity,
        value=value,
        size_raw=size_raw,
        momentum_raw=momentum_raw,
        liquidity_raw=liquidity_raw,
        value_raw=value_raw,
    )
    return PanelObservation(
        coin_id=coin_id,
        date=date,
        ret=ret,
        excess=ret if excess is None else excess,
        chars=chars,
        cond=ConditioningInfo(u=u, r_btc=r_btc),
    )


def make_panel(observations, riskfree_mode="tbill"):
    return Panel.from_observations(observations, riskfree_mode)


@pytest.fixture(scope="session")
def synth_b():
    """One moderately sized conditional-world draw shared across tests."""
    return generate_synthetic(scenario("B", 30, 420, seed=5))


@pytest.fixture(scope="session")
def synth_a():
    return generate_synthetic(scenario("A", 20, 420, seed=9))
