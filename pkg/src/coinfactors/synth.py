"""Synthetic panel generator with known ground truth.

Returns are built through the very same design-expansion code the estimator
uses (condbeta.build_design_matrix), so a recovery failure indicts the
estimator rather than a formula transcription mismatch. All randomness flows
from one seed through spawned per-coin substreams: the factor, uncertainty,
and Bitcoin-return streams come first, then one stream per coin, so
generation order never changes results.
"""

from __future__ import annotations

import datetime as dt
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .condbeta import BetaParams, BetaSpec, build_design_matrix
from .errors import InvalidConfig, MissingCharacteristic, SpecMismatch
from .factors import FACTOR_NAMES, FactorSet
from .ingest import CoinSeries, DailyBar
from .panel import (
    CHARACTERISTIC_NAMES,
    CharacteristicVector,
    ConditioningInfo,
    Panel,
    PanelObservation,
    winsorized_zscores,
)
from .pipeline import ModelResult

SIZE_RAW_MEAN = 18.0
LIQ_RAW_MEAN = 17.0
COIN_SIZE_SPREAD = 1.5


@dataclass(frozen=True)
class FactorDynamics:
    """Gaussian i.i.d. daily factor draws."""

    mean: float
    vol: float


@dataclass(frozen=True)
class ThetaLaw:
    """Uniform sampling ranges for each loading-parameter group, applied
    per coin. A (0, 0) range pins the group at zero."""

    base: tuple[float, float] = (0.8, 1.2)
    u: tuple[float, float] = (0.0, 0.0)
    r: tuple[float, float] = (0.0, 0.0)
    char_base: tuple[float, float] = (0.0, 0.0)
    char_u: tuple[float, float] = (0.0, 0.0)
    char_r: tuple[float, float] = (0.0, 0.0)


@dataclass(frozen=True)
class SynthConfig:
    n_coins: int
    n_days: int
    seed: int
    factor_names: tuple[str, ...] = ("mkt",)
    factor_dynamics: Mapping[str, FactorDynamics] = None
    beta_spec: BetaSpec = BetaSpec("conditional")
    theta_law: ThetaLaw = ThetaLaw()
    true_theta: BetaParams | None = None
    alpha_vol: float = 0.0
    noise_vol: float = 0.01
    anomaly_effects: Mapping[str, float] = None
    epu_phi: float = 0.95
    char_phi: float = 0.9
    rbtc_mean: float = 0.001
    rbtc_vol: float = 0.03
    start: dt.date = dt.date(2020, 1, 1)

    def __post_init__(self):
        if self.n_days < 200:
            raise InvalidConfig(f"n_days {self.n_days} below the 200-day minimum")
        if self.n_coins < 1:
            raise InvalidConfig("n_coins must be positive")
        if self.noise_vol < 0:
            raise InvalidConfig("noise_vol must be non-negative")
        if not (0.0 <= self.epu_phi < 1.0 and 0.0 <= self.char_phi < 1.0):
            raise InvalidConfig("AR(1) persistence must lie in [0, 1)")
        object.__setattr__(self, "factor_names", tuple(self.factor_names))
        for name in self.factor_names:
            if name not in FACTOR_NAMES:
                raise InvalidConfig(f"unknown factor {name!r}")
        dyn = dict(self.factor_dynamics or {})
        for name in self.factor_names:
            dyn.setdefault(name, FactorDynamics(mean=0.0005, vol=0.02))
        object.__setattr__(self, "factor_dynamics", dyn)
        effects = dict(self.anomaly_effects or {})
        for name in effects:
            if name not in CHARACTERISTIC_NAMES:
                raise InvalidConfig(f"unknown anomaly effect {name!r}")
        object.__setattr__(self, "anomaly_effects", effects)


@dataclass(frozen=True)
class GroundTruth:
    """Everything the generator knew: true loadings per coin, true factor
    values, the conditioning series, and the injected anomaly premiums."""

    config: SynthConfig
    factor_set: FactorSet
    beta_spec: BetaSpec
    theta: Mapping[str, BetaParams]
    alpha: Mapping[str, float]
    anomaly_effects: Mapping[str, float]
    u: Mapping[dt.date, float]
    r_btc: Mapping[dt.date, float]


def _ar1_path(rng: np.random.Generator, phi: float, length: int) -> np.ndarray:
    """Stationary unit-variance AR(1) path."""
    innovations = rng.standard_normal(length)
    path = np.empty(length)
    path[0] = innovations[0]
    scale = math.sqrt(1.0 - phi * phi)
    for t in range(1, length):
        path[t] = phi * path[t - 1] + scale * innovations[t]
    return path


def _uniform(rng: np.random.Generator, bounds: tuple[float, float]) -> float:
    lo, hi = bounds
    if lo == hi:
        return float(lo)
    return float(rng.uniform(lo, hi))


def _draw_theta(
    rng: np.random.Generator, cfg: SynthConfig
) -> BetaParams:
    from .condbeta import CharacteristicBeta, FactorBeta

    law = cfg.theta_law
    spec = cfg.beta_spec
    factors = []
    for name in cfg.factor_names:
        if spec.mode == "unconditional":
            factors.append(
                FactorBeta(name, base=_uniform(rng, law.base), u=0.0, r=0.0,
                           characteristics=())
            )
            continue
        triples = tuple(
            CharacteristicBeta(
                char,
                base=_uniform(rng, law.char_base),
                u=_uniform(rng, law.char_u),
                r=_uniform(rng, law.char_r),
            )
            for char in spec.characteristics
        )
        factors.append(
            FactorBeta(
                name,
                base=_uniform(rng, law.base),
                u=_uniform(rng, law.u),
                r=_uniform(rng, law.r),
                characteristics=triples,
            )
        )
    return BetaParams(mode=spec.mode, factors=tuple(factors))


def coin_label(index: int, n_coins: int) -> str:
    width = max(3, len(str(n_coins - 1)))
    return f"C{index:0{width}d}"


def generate_synthetic(cfg: SynthConfig) -> tuple[Panel, GroundTruth]:
    """Simulate the panel.

    Observation dates run from day 1 to day n_days-1; day 0 exists only as
    the first lag. excess_jt = alpha_j + beta_jt-1(theta)' F_t +
    effects' Z_jt-1 + noise, with the risk-free rate identically zero so
    ret = excess and the panel carries riskfree_mode "tbill".
    """
    dates = [cfg.start + dt.timedelta(days=i) for i in range(cfg.n_days)]
    n_lags = cfg.n_days - 1  # lag indices 0..n_days-2
    t_obs = cfg.n_days - 1  # observation indices 1..n_days-1
    K = len(cfg.factor_names)

    root = np.random.SeedSequence(cfg.seed)
    streams = root.spawn(3 + cfg.n_coins)
    factor_rng = np.random.default_rng(streams[0])
    epu_rng = np.random.default_rng(streams[1])
    btc_rng = np.random.default_rng(streams[2])

    F = np.empty((t_obs, K))
    for k, name in enumerate(cfg.factor_names):
        dyn = cfg.factor_dynamics[name]
        F[:, k] = dyn.mean + dyn.vol * factor_rng.standard_normal(t_obs)

    u_raw = _ar1_path(epu_rng, cfg.epu_phi, n_lags)
    u_sd = float(u_raw.std())
    u_z = (u_raw - u_raw.mean()) / u_sd if u_sd > 0 else np.zeros(n_lags)

    r_btc = cfg.rbtc_mean + cfg.rbtc_vol * btc_rng.standard_normal(n_lags)

    # phase one: per-coin draws in a fixed order so streams never shift
    raw_chars = np.empty((cfg.n_coins, n_lags, len(CHARACTERISTIC_NAMES)))
    thetas = []
    alphas = np.empty(cfg.n_coins)
    noises = np.empty((cfg.n_coins, t_obs))
    raw_offsets = {"size": SIZE_RAW_MEAN, "liquidity": LIQ_RAW_MEAN}
    for i in range(cfg.n_coins):
        rng = np.random.default_rng(streams[3 + i])
        size_offset = COIN_SIZE_SPREAD * rng.standard_normal()
        for m, name in enumerate(CHARACTERISTIC_NAMES):
            path = _ar1_path(rng, cfg.char_phi, n_lags)
            path += raw_offsets.get(name, 0.0)
            if name == "size":
                path += size_offset
            raw_chars[i, :, m] = path
        thetas.append(
            cfg.true_theta if cfg.true_theta is not None else _draw_theta(rng, cfg)
        )
        alphas[i] = cfg.alpha_vol * rng.standard_normal()
        noises[i] = cfg.noise_vol * rng.standard_normal(t_obs)

    # phase two: cross-sectional standardization, shared kernel
    z_chars = np.empty_like(raw_chars)
    for lag in range(n_lags):
        for m in range(len(CHARACTERISTIC_NAMES)):
            z_chars[:, lag, m] = winsorized_zscores(raw_chars[:, lag, m])

    # phase three: returns through the shared design expansion
    spec_char_idx = []
    for c in cfg.beta_spec.characteristics:
        if c not in CHARACTERISTIC_NAMES:
            raise MissingCharacteristic(c)
        spec_char_idx.append(CHARACTERISTIC_NAMES.index(c))
    observations = []
    theta_map = {}
    alpha_map = {}
    for i in range(cfg.n_coins):
        coin_id = coin_label(i, cfg.n_coins)
        design = build_design_matrix(
            F,
            u_z,
            r_btc,
            z_chars[i][:, spec_char_idx].reshape(t_obs, len(spec_char_idx)),
            cfg.beta_spec,
        )
        excess = alphas[i] + design @ thetas[i].to_vector() + noises[i]
        for name, effect in sorted(cfg.anomaly_effects.items()):
            m = CHARACTERISTIC_NAMES.index(name)
            excess = excess + effect * z_chars[i, :, m]
        theta_map[coin_id] = thetas[i]
        alpha_map[coin_id] = float(alphas[i])
        for row in range(t_obs):
            lag = row
            chars = CharacteristicVector(
                size=float(z_chars[i, lag, 0]),
                momentum=float(z_chars[i, lag, 1]),
                liquidity=float(z_chars[i, lag, 2]),
                value=float(z_chars[i, lag, 3]),
                size_raw=float(raw_chars[i, lag, 0]),
                momentum_raw=float(raw_chars[i, lag, 1]),
                liquidity_raw=float(raw_chars[i, lag, 2]),
                value_raw=float(raw_chars[i, lag, 3]),
            )
            cond = ConditioningInfo(u=float(u_z[lag]), r_btc=float(r_btc[lag]))
            observations.append(
                PanelObservation(
                    coin_id=coin_id,
                    date=dates[row + 1],
                    ret=float(excess[row]),
                    excess=float(excess[row]),
                    chars=chars,
                    cond=cond,
                )
            )

    panel = Panel.from_observations(observations, "tbill")
    factor_set = FactorSet(
        names=cfg.factor_names,
        values={dates[i + 1]: tuple(float(x) for x in F[i]) for i in range(t_obs)},
    )
    truth = GroundTruth(
        config=cfg,
        factor_set=factor_set,
        beta_spec=cfg.beta_spec,
        theta=theta_map,
        alpha=alpha_map,
        anomaly_effects=dict(cfg.anomaly_effects),
        u={dates[i]: float(u_z[i]) for i in range(n_lags)},
        r_btc={dates[i]: float(r_btc[i]) for i in range(n_lags)},
    )
    return panel, truth


def scenario(name: str, n_coins: int, n_days: int, seed: int) -> SynthConfig:
    """Preset generating processes.

    A: constant betas, no anomaly premiums. B: betas driven by uncertainty,
    lagged return, and characteristics, no anomaly premiums. C: constant
    betas with a size premium injected into returns.
    """
    if name == "A":
        return SynthConfig(
            n_coins=n_coins,
            n_days=n_days,
            seed=seed,
            beta_spec=BetaSpec("unconditional"),
            theta_law=ThetaLaw(base=(0.8, 1.2)),
        )
    if name == "B":
        # The factor carries a sizable mean so that characteristic-driven
        # loading differences translate into characteristic-correlated
        # average returns when betas are (mis)estimated unconditionally.
        return SynthConfig(
            n_coins=n_coins,
            n_days=n_days,
            seed=seed,
            factor_dynamics={"mkt": FactorDynamics(mean=0.002, vol=0.02)},
            beta_spec=BetaSpec("conditional"),
            theta_law=ThetaLaw(
                base=(0.8, 1.2),
                u=(0.2, 0.5),
                r=(0.5, 1.5),
                char_base=(0.3, 0.7),
                char_u=(0.3, 0.7),
                char_r=(0.5, 1.5),
            ),
        )
    if name == "C":
        return SynthConfig(
            n_coins=n_coins,
            n_days=n_days,
            seed=seed,
            beta_spec=BetaSpec("unconditional"),
            theta_law=ThetaLaw(base=(0.8, 1.2)),
            anomaly_effects={"size": 0.001},
        )
    raise InvalidConfig(f"unknown scenario {name!r}, expected A, B, or C")


@dataclass(frozen=True)
class RecoveryReport:
    max_abs_error: float
    ci_coverage: float
    n_parameters: int
    per_coin_max_error: Mapping[str, float]
    tolerance: float | None
    passed: bool


def verify_recovery(
    result: ModelResult,
    truth: GroundTruth,
    z: float = 1.96,
    tolerance: float | None = None,
) -> RecoveryReport:
    """Compare estimated loadings against the generator's.

    Reports the worst absolute parameter error, the share of true parameters
    inside the nominal z-interval around the estimates, and a pass verdict
    against `tolerance` when one is given. Raises SpecMismatch when the
    estimation spec cannot line up with the generating structure.
    """
    if tuple(result.factor_set.names) != tuple(truth.factor_set.names):
        raise SpecMismatch(
            f"estimated factors {tuple(result.factor_set.names)} != "
            f"generated {tuple(truth.factor_set.names)}"
        )
    if result.spec.beta != truth.beta_spec:
        raise SpecMismatch(
            f"estimation beta spec {result.spec.beta} != generating "
            f"spec {truth.beta_spec}"
        )
    max_err = 0.0
    covered = 0
    total = 0
    per_coin = {}
    for fit in result.fits:
        true_vec = truth.theta[fit.coin_id].to_vector()
        est_vec = fit.params.to_vector()
        if true_vec.shape != est_vec.shape:
            raise SpecMismatch(
                f"{fit.coin_id}: {est_vec.size} estimated parameters, "
                f"{true_vec.size} generated"
            )
        errors = np.abs(est_vec - true_vec)
        per_coin[fit.coin_id] = float(errors.max())
        max_err = max(max_err, float(errors.max()))
        half = z * fit.stderr[1:]
        covered += int(np.count_nonzero(errors <= half))
        total += errors.size
    coverage = covered / total if total else float("nan")
    passed = True if tolerance is None else max_err < tolerance
    return RecoveryReport(
        max_abs_error=max_err,
        ci_coverage=coverage,
        n_parameters=total,
        per_coin_max_error=per_coin,
        tolerance=tolerance,
        passed=passed,
    )


def _jsonable(value):
    if isinstance(value, dict):
        return {_json_key(k): _jsonable(v) for k, v in sorted(value.items(), key=lambda kv: _json_key(kv[0]))}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (dt.date, dt.datetime)):
        return value.isoformat()
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if hasattr(value, "__dataclass_fields__"):
        return {
            name: _jsonable(getattr(value, name))
            for name in value.__dataclass_fields__
        }
    return value


def _json_key(key) -> str:
    if isinstance(key, (dt.date, dt.datetime)):
        return key.isoformat()
    return str(key)


def truth_to_json(truth: GroundTruth) -> dict:
    """Ground truth as a plain JSON-serializable document."""
    return {
        "config": _jsonable(truth.config),
        "beta_spec": _jsonable(truth.beta_spec),
        "factor_names": list(truth.factor_set.names),
        "factors": _jsonable(dict(truth.factor_set.values)),
        "theta": {
            coin: _jsonable(params.to_vector())
            for coin, params in sorted(truth.theta.items())
        },
        "alpha": _jsonable(dict(truth.alpha)),
        "anomaly_effects": _jsonable(dict(truth.anomaly_effects)),
        "u": _jsonable(dict(truth.u)),
        "r_btc": _jsonable(dict(truth.r_btc)),
    }


def write_truth_json(truth: GroundTruth, path: str | Path) -> None:
    with open(path, "w") as handle:
        json.dump(truth_to_json(truth), handle, sort_keys=True, indent=2)
        handle.write("\n")


def emit_raw_files(panel: Panel, truth: GroundTruth, out_dir: str | Path) -> None:
    """Write ingest-schema raw files consistent with the synthetic panel:
    per-coin market CSVs under market/, a Bitcoin series from the
    conditioning returns, and uncertainty / risk-free tables alongside.

    The files re-ingest cleanly; the resulting panel is not expected to be
    numerically identical to the synthetic one, because ingestion recomputes
    characteristics from rolling windows over these raw series.
    """
    from .ingest import write_market_csv

    out = Path(out_dir)
    market = out / "market"
    market.mkdir(parents=True, exist_ok=True)
    cfg = truth.config
    dates = [cfg.start + dt.timedelta(days=i) for i in range(cfg.n_days)]

    for coin_id in panel.coins():
        obs = panel.by_coin(coin_id)
        ret_by_date = {o.date: o.ret for o in obs}
        cap_by_lag = {
            o.date - dt.timedelta(days=1): math.exp(o.chars.size_raw) for o in obs
        }
        close = 100.0
        bars = []
        last_cap = next(iter(cap_by_lag.values()))
        for date in dates:
            ret = ret_by_date.get(date)
            if ret is not None:
                close *= 1.0 + ret
            cap = cap_by_lag.get(date)
            if cap is not None:
                last_cap = cap
            bars.append(
                DailyBar(
                    date=date,
                    close=close,
                    volume=last_cap / 20.0,
                    market_cap=last_cap,
                )
            )
        write_market_csv(CoinSeries(coin_id, tuple(bars)), market / f"{coin_id}.csv")

    close = 20000.0
    btc_bars = []
    for i, date in enumerate(dates):
        if i > 0:
            close *= 1.0 + truth.r_btc.get(date, 0.0)
        cap = close * 1.9e7
        btc_bars.append(DailyBar(date=date, close=close, volume=cap / 20.0,
                                 market_cap=cap))
    write_market_csv(CoinSeries("BTC", tuple(btc_bars)), market / "BTC.csv")

    import csv as _csv

    with open(out / "epu.csv", "w", newline="") as handle:
        writer = _csv.writer(handle)
        writer.writerow(("date", "epu"))
        for date in dates:
            u = truth.u.get(date, 0.0)
            writer.writerow((date.isoformat(), repr(100.0 * math.exp(0.2 * u))))
    with open(out / "riskfree.csv", "w", newline="") as handle:
        writer = _csv.writer(handle)
        writer.writerow(("date", "rate"))
        for date in dates:
            writer.writerow((date.isoformat(), repr(0.0)))
