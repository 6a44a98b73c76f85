"""Exception hierarchy for the package.

Three tiers map to CLI exit codes: ValidationError (bad input data or
config, exit 2), FetchError (transport problems in the optional snapshot
client, exit 3), EstimationError (numerical or coverage failures, exit 4).
"""

from __future__ import annotations

import datetime as dt
from typing import Sequence


class CoinFactorsError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(CoinFactorsError):
    """Malformed inputs, schema violations, or inconsistent configuration."""


class EstimationError(CoinFactorsError):
    """A regression, sort, or aggregation that cannot proceed."""


class FetchError(CoinFactorsError):
    """Transport-level failure in the snapshot fetch client."""


# ingest ---------------------------------------------------------------

class MalformedRow(ValidationError):
    def __init__(self, line: int, message: str) -> None:
        self.line = line
        super().__init__(f"line {line}: {message}")


class DuplicateDate(ValidationError):
    def __init__(self, date: dt.date, context: str = "") -> None:
        self.date = date
        where = f" ({context})" if context else ""
        super().__init__(f"duplicate date {date.isoformat()}{where}")


class NonPositivePrice(ValidationError):
    def __init__(self, date: dt.date) -> None:
        self.date = date
        super().__init__(f"non-positive close on {date.isoformat()}")


class NegativeLevel(ValidationError):
    def __init__(self, date: dt.date) -> None:
        self.date = date
        super().__init__(f"negative uncertainty level on {date.isoformat()}")


class EmptyUniverse(ValidationError):
    """No coin satisfies the universe filter."""


class HttpError(FetchError):
    def __init__(self, status: int, url: str) -> None:
        self.status = status
        self.url = url
        super().__init__(f"HTTP {status} for {url}")


class RateLimited(FetchError):
    def __init__(self, url: str, attempts: int) -> None:
        self.url = url
        self.attempts = attempts
        super().__init__(f"rate limited after {attempts} attempts for {url}")


# panel ----------------------------------------------------------------

class TooShort(EstimationError):
    """Fewer than two bars; no return can be computed."""


class InsufficientHistory(EstimationError):
    def __init__(self, characteristic: str, detail: str = "") -> None:
        self.characteristic = characteristic
        suffix = f": {detail}" if detail else ""
        super().__init__(f"insufficient history for {characteristic}{suffix}")


class CoverageGap(ValidationError):
    """A required series went stale beyond the forward-fill limit."""

    def __init__(self, series: str, date: dt.date) -> None:
        self.series = series
        self.date = date
        super().__init__(f"{series} has no usable value for {date.isoformat()}")


class MissingBitcoin(ValidationError):
    """The Bitcoin series, required for the lagged conditioner, is absent."""


# factors --------------------------------------------------------------

class EmptyDate(EstimationError):
    def __init__(self, date: dt.date) -> None:
        self.date = date
        super().__init__(f"no valid observations on {date.isoformat()}")


class TooFewCoins(EstimationError):
    def __init__(self, date: dt.date, needed: int, available: int) -> None:
        self.date = date
        self.needed = needed
        self.available = available
        super().__init__(
            f"{available} coins sortable on {date.isoformat()}, need {needed}"
        )


class EmptyLeg(EstimationError):
    def __init__(self, date: dt.date, leg: str) -> None:
        self.date = date
        self.leg = leg
        super().__init__(f"leg {leg} empty on {date.isoformat()}")


# econometrics ----------------------------------------------------------

class RankDeficient(EstimationError):
    """Design matrix has a (near-)exact linear dependency."""

    def __init__(self, columns: Sequence, message: str = "") -> None:
        self.columns = tuple(columns)
        detail = message or f"dependent columns {list(self.columns)}"
        super().__init__(f"rank-deficient design: {detail}")


class TooFewObservations(EstimationError):
    def __init__(self, n_obs: int, n_params: int) -> None:
        self.n_obs = n_obs
        self.n_params = n_params
        super().__init__(f"{n_obs} observations cannot identify {n_params} parameters")


class SeriesTooShort(EstimationError):
    def __init__(self, length: int, lags: int) -> None:
        self.length = length
        self.lags = lags
        super().__init__(f"series of length {length} too short for {lags} lags")


class TooFewDates(EstimationError):
    """Fewer than two cross-sectional dates; no time-series aggregation."""


# condbeta ---------------------------------------------------------------

class MissingCharacteristic(EstimationError):
    def __init__(self, name: str) -> None:
        self.name = name
        super().__init__(f"unknown characteristic {name!r}")


class InsufficientObservations(EstimationError):
    def __init__(self, coin_id: str, needed: int, available: int) -> None:
        self.coin_id = coin_id
        self.needed = needed
        self.available = available
        super().__init__(
            f"{coin_id}: {available} usable observations, need {needed}"
        )


# pipeline / synth --------------------------------------------------------

class NoEligibleDates(EstimationError):
    """No date passed the cross-sectional coin floor."""


class StageError(EstimationError):
    """An error from a pipeline stage, annotated with the model label."""

    def __init__(self, label: str, stage: str, cause: Exception) -> None:
        self.label = label
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{label}] {stage}: {cause}")


class InvalidConfig(ValidationError):
    """Configuration value out of range or inconsistent."""


class SpecMismatch(ValidationError):
    """Estimation spec does not match the generating structure."""
