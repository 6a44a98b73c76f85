"""Run configuration: one JSON document wiring paths, universe rules,
window lengths, estimation settings, and the model spec list.

Loading is strict: unknown keys are rejected at every level, referenced
input paths must exist, and every omitted setting resolves to its documented
default. resolved_dict materializes the fully defaulted configuration for
embedding in run manifests, so every gap-filling default is auditable.
"""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import dataclass
from pathlib import Path

from .condbeta import BetaSpec
from .errors import InvalidConfig
from .factors import FactorOptions
from .panel import CharacteristicWindows, PanelOptions
from .pipeline import ModelSpec, PipelineOptions

TOP_KEYS = {
    "data",
    "panel_file",
    "universe",
    "windows",
    "panel",
    "factors",
    "econometrics",
    "pipeline",
    "specs",
    "synth",
    "seed",
    "output_dir",
}


@dataclass(frozen=True)
class DataPaths:
    market_dir: str
    epu_file: str
    riskfree_file: str


@dataclass(frozen=True)
class UniverseSection:
    top_n: int = 200
    min_history_days: int = 365
    rank_date: dt.date | None = None  # None: last date seen in the data


@dataclass(frozen=True)
class SynthSection:
    scenario: str
    n_coins: int
    n_days: int
    emit_raw: bool = True


@dataclass(frozen=True)
class RunConfig:
    data: DataPaths | None
    panel_file: str | None
    universe: UniverseSection
    panel: PanelOptions
    pipeline: PipelineOptions
    specs: tuple[ModelSpec, ...]
    synth: SynthSection | None
    seed: int | None
    output_dir: str | None


def _require_keys(section: dict, allowed: set[str], where: str) -> None:
    for key in section:
        if key not in allowed:
            raise InvalidConfig(
                f"unknown key {key!r} in {where}, allowed: {sorted(allowed)}"
            )


def _coerce(section: dict, key: str, kind, where: str, default=None):
    # an explicit JSON null means "unset", same as omitting the key
    value = section.get(key)
    if value is None:
        value = default
    if value is None:
        return None
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if kind is dt.date:
        try:
            return dt.date.fromisoformat(value)
        except (TypeError, ValueError):
            raise InvalidConfig(f"{where}.{key}: bad date {value!r}") from None
    if not isinstance(value, kind) or isinstance(value, bool) and kind is not bool:
        raise InvalidConfig(
            f"{where}.{key}: expected {kind.__name__}, got {type(value).__name__}"
        )
    return value


def _parse_beta(raw: dict, where: str) -> BetaSpec:
    _require_keys(raw, {"mode", "characteristics", "lagged_return"}, where)
    mode = _coerce(raw, "mode", str, where)
    if mode is None:
        raise InvalidConfig(f"{where}: beta mode is required")
    kwargs = {"mode": mode}
    if "characteristics" in raw:
        chars = raw["characteristics"]
        if not isinstance(chars, list) or not all(isinstance(c, str) for c in chars):
            raise InvalidConfig(f"{where}.characteristics: expected a string list")
        kwargs["characteristics"] = tuple(chars)
    if "lagged_return" in raw:
        kwargs["lagged_return"] = _coerce(raw, "lagged_return", str, where)
    return BetaSpec(**kwargs)


def _parse_spec(raw: dict, index: int) -> ModelSpec:
    where = f"specs[{index}]"
    if not isinstance(raw, dict):
        raise InvalidConfig(f"{where}: expected an object")
    _require_keys(raw, {"label", "factors", "beta", "anomalies", "riskfree_mode"}, where)
    label = _coerce(raw, "label", str, where)
    factors = _coerce(raw, "factors", str, where)
    beta_raw = raw.get("beta")
    if label is None or factors is None or not isinstance(beta_raw, dict):
        raise InvalidConfig(f"{where}: label, factors, and beta are required")
    kwargs = {
        "label": label,
        "factors": factors,
        "beta": _parse_beta(beta_raw, f"{where}.beta"),
    }
    if "anomalies" in raw:
        anomalies = raw["anomalies"]
        if not isinstance(anomalies, list) or not all(
            isinstance(a, str) for a in anomalies
        ):
            raise InvalidConfig(f"{where}.anomalies: expected a string list")
        kwargs["anomalies"] = tuple(anomalies)
    if "riskfree_mode" in raw:
        kwargs["riskfree_mode"] = _coerce(raw, "riskfree_mode", str, where)
    return ModelSpec(**kwargs)


def load_config(path: str | Path) -> RunConfig:
    """Parse and validate a config file into a fully defaulted RunConfig."""
    path = Path(path)
    if not path.exists():
        raise InvalidConfig(f"config file {path} does not exist")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InvalidConfig(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(raw, dict):
        raise InvalidConfig(f"{path}: top level must be an object")
    _require_keys(raw, TOP_KEYS, "config")
    raw = {k: v for k, v in raw.items() if v is not None}

    data = None
    if "data" in raw:
        section = raw["data"]
        _require_keys(section, {"market_dir", "epu_file", "riskfree_file"}, "data")
        values = {}
        for key in ("market_dir", "epu_file", "riskfree_file"):
            value = _coerce(section, key, str, "data")
            if value is None:
                raise InvalidConfig(f"data.{key} is required")
            if not Path(value).exists():
                raise InvalidConfig(f"data.{key}: path {value!r} does not exist")
            values[key] = value
        data = DataPaths(**values)

    panel_file = _coerce(raw, "panel_file", str, "config")
    if panel_file is not None and not Path(panel_file).exists():
        raise InvalidConfig(f"panel_file: path {panel_file!r} does not exist")

    u = raw.get("universe", {})
    _require_keys(u, {"top_n", "min_history_days", "rank_date"}, "universe")
    universe = UniverseSection(
        top_n=_coerce(u, "top_n", int, "universe", 200),
        min_history_days=_coerce(u, "min_history_days", int, "universe", 365),
        rank_date=_coerce(u, "rank_date", dt.date, "universe"),
    )

    w = raw.get("windows", {})
    _require_keys(
        w,
        {
            "momentum_days",
            "liquidity_days",
            "value_near_days",
            "value_far_days",
            "min_valid_share",
        },
        "windows",
    )
    windows = CharacteristicWindows(
        momentum_days=_coerce(w, "momentum_days", int, "windows", 28),
        liquidity_days=_coerce(w, "liquidity_days", int, "windows", 30),
        value_near_days=_coerce(w, "value_near_days", int, "windows", 31),
        value_far_days=_coerce(w, "value_far_days", int, "windows", 365),
        min_valid_share=_coerce(w, "min_valid_share", float, "windows", 0.5),
    )

    p = raw.get("panel", {})
    _require_keys(
        p, {"riskfree_mode", "btc_id", "ffill_limit_days", "winsor"}, "panel"
    )
    winsor = p.get("winsor", [1.0, 99.0])
    if (
        not isinstance(winsor, list)
        or len(winsor) != 2
        or not all(isinstance(x, (int, float)) for x in winsor)
    ):
        raise InvalidConfig("panel.winsor: expected [lower, upper] percentiles")
    panel_options = PanelOptions(
        riskfree_mode=_coerce(p, "riskfree_mode", str, "panel", "tbill"),
        btc_id=_coerce(p, "btc_id", str, "panel", "BTC"),
        ffill_limit_days=_coerce(p, "ffill_limit_days", int, "panel", 3),
        windows=windows,
        winsor=(float(winsor[0]), float(winsor[1])),
    )
    if panel_options.riskfree_mode not in ("tbill", "btc"):
        raise InvalidConfig(
            f"panel.riskfree_mode: unknown mode {panel_options.riskfree_mode!r}"
        )

    f = raw.get("factors", {})
    _require_keys(
        f, {"min_sort_coins", "exclude_btc_from_market", "btc_id"}, "factors"
    )
    factor_options = FactorOptions(
        min_sort_coins=_coerce(f, "min_sort_coins", int, "factors", 5),
        exclude_btc_from_market=_coerce(
            f, "exclude_btc_from_market", bool, "factors", False
        ),
        btc_id=_coerce(f, "btc_id", str, "factors", panel_options.btc_id),
    )

    e = raw.get("econometrics", {})
    _require_keys(e, {"nw_lags", "rank_tolerance", "significance_z"}, "econometrics")
    pl = raw.get("pipeline", {})
    _require_keys(pl, {"min_obs_margin", "floor_base"}, "pipeline")
    pipeline_options = PipelineOptions(
        min_obs_margin=_coerce(pl, "min_obs_margin", int, "pipeline", 30),
        floor_base=_coerce(pl, "floor_base", int, "pipeline", 20),
        nw_lags=_coerce(e, "nw_lags", int, "econometrics"),
        significance_z=_coerce(e, "significance_z", float, "econometrics", 1.96),
        rank_tolerance=_coerce(e, "rank_tolerance", float, "econometrics", 1e-10),
        factor_options=factor_options,
    )

    specs_raw = raw.get("specs", [])
    if not isinstance(specs_raw, list):
        raise InvalidConfig("specs: expected a list")
    specs = tuple(_parse_spec(s, i) for i, s in enumerate(specs_raw))
    labels = [s.label for s in specs]
    if len(set(labels)) != len(labels):
        raise InvalidConfig(f"duplicate spec labels: {labels}")

    synth = None
    if "synth" in raw:
        s = raw["synth"]
        _require_keys(s, {"scenario", "n_coins", "n_days", "emit_raw"}, "synth")
        scenario = _coerce(s, "scenario", str, "synth")
        n_coins = _coerce(s, "n_coins", int, "synth")
        n_days = _coerce(s, "n_days", int, "synth")
        if scenario is None or n_coins is None or n_days is None:
            raise InvalidConfig("synth: scenario, n_coins, and n_days are required")
        synth = SynthSection(
            scenario=scenario,
            n_coins=n_coins,
            n_days=n_days,
            emit_raw=_coerce(s, "emit_raw", bool, "synth", True),
        )

    return RunConfig(
        data=data,
        panel_file=panel_file,
        universe=universe,
        panel=panel_options,
        pipeline=pipeline_options,
        specs=specs,
        synth=synth,
        seed=_coerce(raw, "seed", int, "config"),
        output_dir=_coerce(raw, "output_dir", str, "config"),
    )


def resolved_dict(cfg: RunConfig) -> dict:
    """Every setting, defaults included, as a JSON-shaped document."""
    out = {
        "data": None
        if cfg.data is None
        else {
            "market_dir": cfg.data.market_dir,
            "epu_file": cfg.data.epu_file,
            "riskfree_file": cfg.data.riskfree_file,
        },
        "panel_file": cfg.panel_file,
        "universe": {
            "top_n": cfg.universe.top_n,
            "min_history_days": cfg.universe.min_history_days,
            "rank_date": None
            if cfg.universe.rank_date is None
            else cfg.universe.rank_date.isoformat(),
        },
        "windows": {
            "momentum_days": cfg.panel.windows.momentum_days,
            "liquidity_days": cfg.panel.windows.liquidity_days,
            "value_near_days": cfg.panel.windows.value_near_days,
            "value_far_days": cfg.panel.windows.value_far_days,
            "min_valid_share": cfg.panel.windows.min_valid_share,
        },
        "panel": {
            "riskfree_mode": cfg.panel.riskfree_mode,
            "btc_id": cfg.panel.btc_id,
            "ffill_limit_days": cfg.panel.ffill_limit_days,
            "winsor": list(cfg.panel.winsor),
        },
        "factors": {
            "min_sort_coins": cfg.pipeline.factor_options.min_sort_coins,
            "exclude_btc_from_market": (
                cfg.pipeline.factor_options.exclude_btc_from_market
            ),
            "btc_id": cfg.pipeline.factor_options.btc_id,
        },
        "econometrics": {
            "nw_lags": cfg.pipeline.nw_lags,
            "significance_z": cfg.pipeline.significance_z,
            "rank_tolerance": cfg.pipeline.rank_tolerance,
        },
        "pipeline": {
            "min_obs_margin": cfg.pipeline.min_obs_margin,
            "floor_base": cfg.pipeline.floor_base,
        },
        "specs": [
            {
                "label": s.label,
                "factors": s.factors,
                "beta": {
                    "mode": s.beta.mode,
                    "characteristics": list(s.beta.characteristics),
                    "lagged_return": s.beta.lagged_return,
                },
                "anomalies": list(s.anomalies),
                "riskfree_mode": s.riskfree_mode,
            }
            for s in cfg.specs
        ],
        "synth": None
        if cfg.synth is None
        else {
            "scenario": cfg.synth.scenario,
            "n_coins": cfg.synth.n_coins,
            "n_days": cfg.synth.n_days,
            "emit_raw": cfg.synth.emit_raw,
        },
        "seed": cfg.seed,
        "output_dir": cfg.output_dir,
    }
    return out
