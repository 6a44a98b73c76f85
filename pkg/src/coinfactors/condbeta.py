"""Conditional-beta first pass: expand each factor into interaction
regressors with the lagged uncertainty level, lagged Bitcoin return, and
lagged coin characteristics, fit the per-coin time-series regression, and
produce risk-adjusted returns (intercept plus residual).

The design expansion lives in exactly one function, build_design_matrix,
which both the estimator and the synthetic generator call. A recovery
failure therefore indicts the estimator, never a formula transcription
mismatch between the two.
"""

from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .econometrics import DEFAULT_RANK_TOLERANCE, ols
from .errors import (
    InsufficientObservations,
    InvalidConfig,
    MissingCharacteristic,
    RankDeficient,
)
from .factors import FactorSet
from .panel import PanelObservation

MIN_OBS_MARGIN = 30


@dataclass(frozen=True)
class BetaSpec:
    """How factor loadings are parameterized.

    unconditional: one constant loading per factor. conditional: the loading
    moves with the lagged uncertainty level u, a lagged return r, and each
    listed characteristic (size plays the same structural role as the rest).
    lagged_return picks what r is: the Bitcoin return ("btc", the default)
    or the coin's own previous-day return ("own", a sensitivity variant).
    """

    mode: str
    characteristics: tuple[str, ...] = ("size", "momentum", "liquidity")
    lagged_return: str = "btc"

    def __post_init__(self):
        if self.mode not in ("unconditional", "conditional"):
            raise InvalidConfig(f"unknown beta mode {self.mode!r}")
        if self.lagged_return not in ("btc", "own"):
            raise InvalidConfig(f"unknown lagged_return {self.lagged_return!r}")
        if self.mode == "conditional" and not self.characteristics:
            raise InvalidConfig("conditional mode needs at least one characteristic")
        object.__setattr__(self, "characteristics", tuple(self.characteristics))

    def params_per_factor(self) -> int:
        if self.mode == "unconditional":
            return 1
        return 3 * (1 + len(self.characteristics))


def param_names(factor_names: Sequence[str], spec: BetaSpec) -> tuple[str, ...]:
    """Coefficient labels in design-column order, intercept first."""
    names = ["alpha"]
    for f in factor_names:
        if spec.mode == "unconditional":
            names.append(f"{f}.base")
            continue
        names.extend([f"{f}.base", f"{f}.u", f"{f}.r"])
        for c in spec.characteristics:
            names.extend([f"{f}.{c}.base", f"{f}.{c}.u", f"{f}.{c}.r"])
    return tuple(names)


def build_design_matrix(
    factors: np.ndarray,
    u: np.ndarray,
    r: np.ndarray,
    chars: np.ndarray,
    spec: BetaSpec,
) -> np.ndarray:
    """Expand T factor rows into the interaction design, without intercept.

    factors is T x K, u and r are length T, chars is T x M in spec order.
    Per factor value f the conditional row block is
    f * [1, u, r, (c, u*c, r*c) for each characteristic c], giving
    3*(1+M) columns per factor; unconditional mode emits f alone.
    """
    F = np.asarray(factors, dtype=float)
    if F.ndim == 1:
        F = F.reshape(-1, 1)
    if spec.mode == "unconditional":
        return F.copy()
    T, K = F.shape
    u = np.asarray(u, dtype=float).reshape(T)
    r = np.asarray(r, dtype=float).reshape(T)
    C = np.asarray(chars, dtype=float).reshape(T, len(spec.characteristics))
    base_cols = [np.ones(T), u, r]
    for m in range(C.shape[1]):
        c = C[:, m]
        base_cols.extend([c, u * c, r * c])
    base = np.column_stack(base_cols)
    blocks = [F[:, [k]] * base for k in range(K)]
    return np.hstack(blocks)


def expand_design(
    factor_values: Sequence[float],
    cond,
    chars,
    spec: BetaSpec,
) -> np.ndarray:
    """One design row from one date's factor vector, conditioning info, and
    characteristic vector. Same code path as the matrix builder."""
    try:
        char_row = [chars.z(name) for name in spec.characteristics]
    except KeyError as exc:
        raise MissingCharacteristic(str(exc.args[0])) from None
    F = np.asarray(factor_values, dtype=float).reshape(1, -1)
    r = cond.r_btc
    return build_design_matrix(
        F, np.array([cond.u]), np.array([r]), np.array([char_row]), spec
    )[0]


@dataclass(frozen=True)
class CharacteristicBeta:
    name: str
    base: float
    u: float
    r: float


@dataclass(frozen=True)
class FactorBeta:
    factor: str
    base: float
    u: float
    r: float
    characteristics: tuple[CharacteristicBeta, ...]


@dataclass(frozen=True)
class BetaParams:
    """Loading parameters grouped per factor, round-trippable to and from
    the flat design-column order (intercept excluded)."""

    mode: str
    factors: tuple[FactorBeta, ...]

    def factor(self, name: str) -> FactorBeta:
        for f in self.factors:
            if f.factor == name:
                return f
        raise KeyError(name)

    def to_vector(self) -> np.ndarray:
        out = []
        for f in self.factors:
            if self.mode == "unconditional":
                out.append(f.base)
                continue
            out.extend([f.base, f.u, f.r])
            for c in f.characteristics:
                out.extend([c.base, c.u, c.r])
        return np.array(out, dtype=float)

    @classmethod
    def from_vector(
        cls, vector: Sequence[float], factor_names: Sequence[str], spec: BetaSpec
    ) -> "BetaParams":
        v = np.asarray(vector, dtype=float)
        per = spec.params_per_factor()
        if v.size != per * len(factor_names):
            raise ValueError(
                f"{v.size} parameters for {len(factor_names)} factors, "
                f"expected {per * len(factor_names)}"
            )
        factors = []
        for k, name in enumerate(factor_names):
            block = v[k * per : (k + 1) * per]
            if spec.mode == "unconditional":
                factors.append(
                    FactorBeta(name, base=float(block[0]), u=0.0, r=0.0,
                               characteristics=())
                )
                continue
            triples = []
            for m, char in enumerate(spec.characteristics):
                start = 3 + 3 * m
                triples.append(
                    CharacteristicBeta(
                        char,
                        base=float(block[start]),
                        u=float(block[start + 1]),
                        r=float(block[start + 2]),
                    )
                )
            factors.append(
                FactorBeta(
                    name,
                    base=float(block[0]),
                    u=float(block[1]),
                    r=float(block[2]),
                    characteristics=tuple(triples),
                )
            )
        return cls(mode=spec.mode, factors=tuple(factors))


@dataclass(frozen=True)
class FirstPassFit:
    """Per-coin time-series fit and its risk-adjusted return series."""

    coin_id: str
    alpha: float
    params: BetaParams
    param_names: tuple[str, ...]
    residuals: Mapping[dt.date, float]
    stderr: np.ndarray
    r2: float
    adj_r2: float
    n_obs: int
    n_params: int
    risk_adjusted: Mapping[dt.date, float]


def _own_lagged_returns(
    observations: Sequence[PanelObservation],
) -> dict[dt.date, float]:
    ret_by_date = {o.date: o.ret for o in observations}
    return {
        o.date: ret_by_date[o.date - dt.timedelta(days=1)]
        for o in observations
        if o.date - dt.timedelta(days=1) in ret_by_date
    }


def first_pass(
    observations: Sequence[PanelObservation],
    factor_set: FactorSet,
    spec: BetaSpec,
    min_obs_margin: int = MIN_OBS_MARGIN,
    rank_tolerance: float = DEFAULT_RANK_TOLERANCE,
) -> FirstPassFit:
    """Time-series regression of one coin's excess returns on the expanded
    factor design, over the dates present in both the coin and the factor
    set. Requires n >= n_params + min_obs_margin observations.
    """
    if not observations:
        raise InsufficientObservations("<empty>", min_obs_margin + 1, 0)
    coin_id = observations[0].coin_id
    obs = sorted(observations, key=lambda o: o.date)
    if spec.lagged_return == "own":
        own = _own_lagged_returns(obs)
        rows = [o for o in obs if o.date in factor_set.values and o.date in own]
        r_values = [own[o.date] for o in rows]
    else:
        rows = [o for o in obs if o.date in factor_set.values]
        r_values = [o.cond.r_btc for o in rows]
    names = param_names(factor_set.names, spec)
    p = len(names)
    n = len(rows)
    if n < p + min_obs_margin:
        raise InsufficientObservations(coin_id, p + min_obs_margin, n)

    F = np.array([factor_set.vector(o.date) for o in rows], dtype=float)
    u = np.array([o.cond.u for o in rows], dtype=float)
    r = np.array(r_values, dtype=float)
    try:
        C = np.array(
            [[o.chars.z(c) for c in spec.characteristics] for o in rows], dtype=float
        ).reshape(n, len(spec.characteristics))
    except KeyError as exc:
        raise MissingCharacteristic(str(exc.args[0])) from None

    design = build_design_matrix(F, u, r, C, spec)
    X = np.hstack([np.ones((n, 1)), design])
    y = np.array([o.excess for o in rows], dtype=float)
    try:
        fit = ols(X, y, rank_tolerance=rank_tolerance)
    except RankDeficient as exc:
        raise RankDeficient(
            [names[i] for i in exc.columns], message=f"coin {coin_id}"
        ) from None

    alpha = float(fit.coefficients[0])
    params = BetaParams.from_vector(fit.coefficients[1:], factor_set.names, spec)
    residuals = {o.date: float(e) for o, e in zip(rows, fit.residuals)}
    risk_adjusted = {d: alpha + e for d, e in residuals.items()}
    return FirstPassFit(
        coin_id=coin_id,
        alpha=alpha,
        params=params,
        param_names=names,
        residuals=residuals,
        stderr=fit.stderr,
        r2=fit.r2,
        adj_r2=fit.adj_r2,
        n_obs=fit.n_obs,
        n_params=fit.n_params,
        risk_adjusted=risk_adjusted,
    )


def risk_adjusted_returns(fit: FirstPassFit) -> dict[dt.date, float]:
    """The dated series alpha + residual, the return component the factor
    model leaves unexplained."""
    return {d: fit.alpha + e for d, e in sorted(fit.residuals.items())}


def write_first_pass_params_csv(
    fits: Sequence[FirstPassFit], path: str | Path
) -> None:
    """coin_id,param_name,estimate,stderr in coin then design-column order."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(("coin_id", "param_name", "estimate", "stderr"))
        for fit in sorted(fits, key=lambda f: f.coin_id):
            estimates = np.concatenate([[fit.alpha], fit.params.to_vector()])
            for name, est, se in zip(fit.param_names, estimates, fit.stderr):
                writer.writerow((fit.coin_id, name, repr(float(est)), repr(float(se))))


def write_risk_adjusted_csv(fits: Sequence[FirstPassFit], path: str | Path) -> None:
    """coin_id,date,risk_adjusted for every fitted coin-day."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(("coin_id", "date", "risk_adjusted"))
        for fit in sorted(fits, key=lambda f: f.coin_id):
            for date in sorted(fit.risk_adjusted):
                writer.writerow(
                    (fit.coin_id, date.isoformat(), repr(fit.risk_adjusted[date]))
                )
