"""Core domain types and energy arithmetic.

Everything here is an immutable value object or a pure function, shared by
the data pipeline, the conformal layer, the benchmark harness, and the
forecast service.

Units follow road-cycling practice: speed in km/h, power in watts, race
time in minutes, energy in kilocalories. Energy uses the convention that
one kilojoule of mechanical work costs roughly one dietary kilocalorie
(gross efficiency near 25% cancels the 4.184 kJ/kcal factor), so
kcal = W * s / 1000.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .errors import InvalidArgumentError

RACE_TYPES = ("one_day", "stage_race", "grand_tour")
RIDER_ROLES = ("helper", "climber", "leader")

# Blending weight for the weather-feature model as a function of forecast
# horizon. Piecewise linear through these anchors, clamped to the last
# weight beyond the final anchor: race-day weather is essentially known
# (weight 1.0) and two-week forecasts carry little information (floor 0.1).
HORIZON_ANCHORS = ((0.0, 1.0), (5.0, 0.9), (10.0, 0.5), (14.0, 0.1))


@dataclass(frozen=True)
class PredictionInterval:
    """A two-sided prediction interval at significance level alpha.

    ``lower`` and ``upper`` are in the units of the forecast target.
    ``method`` names the conformal procedure that produced the interval.
    """

    lower: float
    upper: float
    alpha: float
    method: str

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise InvalidArgumentError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.lower > self.upper:
            raise InvalidArgumentError(
                f"interval bounds out of order: [{self.lower}, {self.upper}]"
            )

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def contains(self, value: float) -> bool:
        """Closed-interval membership; endpoints count as covered."""
        return self.lower <= value <= self.upper


@dataclass(frozen=True)
class HorizonWeight:
    """Weight pair blending the weather model with the weather-free model."""

    days_ahead: float
    weather_weight: float

    def __post_init__(self):
        if self.days_ahead < 0:
            raise InvalidArgumentError("days_ahead must be >= 0")
        if not 0.0 <= self.weather_weight <= 1.0:
            raise InvalidArgumentError("weather_weight must be in [0, 1]")

    @property
    def plain_weight(self) -> float:
        return 1.0 - self.weather_weight


@dataclass(frozen=True)
class StageFeatures:
    """Engineered feature vector for one rider-stage (or stage, for speed).

    Speed rows describe the whole stage and carry no rider attributes;
    power rows additionally carry ``bmi`` and ``rider_role``. The
    predictive fields are fixed per target: 8 for speed, 10 for power
    (``descent`` feeds ``ascent_relation`` but is not itself a predictor).
    """

    race_type: str
    distance: float
    ascent: float
    descent: float
    ascent_relation: float
    temperature: float
    humidity: float
    neg_wind_effect: float
    rainfall: float
    bmi: float | None = None
    rider_role: str | None = None

    SPEED_FIELDS = (
        "race_type",
        "distance",
        "ascent",
        "ascent_relation",
        "temperature",
        "humidity",
        "neg_wind_effect",
        "rainfall",
    )
    POWER_FIELDS = SPEED_FIELDS + ("bmi", "rider_role")

    def __post_init__(self):
        if self.race_type not in RACE_TYPES:
            raise InvalidArgumentError(f"unknown race_type {self.race_type!r}")
        if not self.distance > 0:
            raise InvalidArgumentError("distance must be > 0 km")
        if self.ascent < 0 or self.descent < 0:
            raise InvalidArgumentError("ascent and descent must be >= 0 m")
        if not _is_finite(self.ascent_relation):
            raise InvalidArgumentError("ascent_relation must be finite")
        if not 0.0 <= self.humidity <= 1.0:
            raise InvalidArgumentError("humidity must be in [0, 1]")
        if self.neg_wind_effect < 0:
            raise InvalidArgumentError("neg_wind_effect must be >= 0 m/s")
        if self.rainfall < 0:
            raise InvalidArgumentError("rainfall must be >= 0 mm/h")
        if self.bmi is not None and not self.bmi > 0:
            raise InvalidArgumentError("bmi must be > 0 kg/m^2")
        if self.rider_role is not None and self.rider_role not in RIDER_ROLES:
            raise InvalidArgumentError(f"unknown rider_role {self.rider_role!r}")

    @property
    def has_rider_fields(self) -> bool:
        return self.bmi is not None and self.rider_role is not None

    def predictive_fields(self, target_kind: str) -> tuple[str, ...]:
        """Names of the fields a model for ``target_kind`` may consume."""
        if target_kind == "speed":
            return self.SPEED_FIELDS
        if target_kind == "power":
            if not self.has_rider_fields:
                raise InvalidArgumentError(
                    "power features require bmi and rider_role to be set"
                )
            return self.POWER_FIELDS
        raise InvalidArgumentError(f"unknown target kind {target_kind!r}")


@dataclass(frozen=True)
class EnergyForecast:
    """Speed/power intervals plus the coach's chosen values and the
    kilocalories they imply.

    ``race_time`` (minutes) and ``energy`` (kcal) are derived and stay
    ``None`` until both choices are made via :meth:`with_choices`.
    """

    distance: float
    speed_interval: PredictionInterval
    power_interval: PredictionInterval
    chosen_speed: float | None = None
    chosen_power: float | None = None
    race_time: float | None = None
    energy: float | None = None

    def with_choices(self, speed: float, power: float) -> "EnergyForecast":
        """Return a copy with choices applied and derived values computed."""
        t = race_time_from_speed(self.distance, speed)
        return replace(
            self,
            chosen_speed=speed,
            chosen_power=power,
            race_time=t,
            energy=compute_energy(power, t),
        )


def _is_finite(x: float) -> bool:
    return math.isfinite(x)


def compute_energy(power: float, race_time: float) -> float:
    """Kilocalories burned riding at ``power`` watts for ``race_time`` minutes.

    kcal = W * minutes * 60 / 1000, i.e. mechanical kilojoules taken 1:1
    as dietary kilocalories.

    Raises
    ------
    InvalidArgumentError
        If power is negative or race_time is not positive.
    """
    if power < 0:
        raise InvalidArgumentError("power must be >= 0 W")
    if not race_time > 0:
        raise InvalidArgumentError("race_time must be > 0 minutes")
    return power * race_time * 60.0 / 1000.0


def race_time_from_speed(distance: float, speed: float) -> float:
    """Race time in minutes to cover ``distance`` km at ``speed`` km/h."""
    if not distance > 0:
        raise InvalidArgumentError("distance must be > 0 km")
    if not speed > 0:
        raise InvalidArgumentError("speed must be > 0 km/h")
    return 60.0 * distance / speed


def weather_weight(days_ahead: float) -> float:
    """Weight of the weather-feature model for a forecast made
    ``days_ahead`` days before the race.

    Piecewise linear through the anchors in :data:`HORIZON_ANCHORS`
    (exact at the anchors) and clamped to the 0.1 floor past 14 days.
    """
    if days_ahead < 0:
        raise InvalidArgumentError("days_ahead must be >= 0")
    anchors = HORIZON_ANCHORS
    if days_ahead >= anchors[-1][0]:
        return anchors[-1][1]
    for (d0, w0), (d1, w1) in zip(anchors, anchors[1:]):
        if days_ahead == d0:
            return w0
        if d0 < days_ahead < d1:
            return w0 + (w1 - w0) * (days_ahead - d0) / (d1 - d0)
    return anchors[-1][1]


def horizon_weight(days_ahead: float) -> HorizonWeight:
    """The :class:`HorizonWeight` pair for a forecast horizon."""
    return HorizonWeight(days_ahead=days_ahead, weather_weight=weather_weight(days_ahead))


def blend_intervals(
    with_weather: PredictionInterval,
    without_weather: PredictionInterval,
    w: float,
) -> PredictionInterval:
    """Endpoint-wise convex combination of two intervals.

    ``w`` is the weight on ``with_weather``. Both intervals must share
    alpha and method; the blend preserves bound ordering because it is a
    convex combination of ordered pairs.
    """
    if not 0.0 <= w <= 1.0:
        raise InvalidArgumentError("blend weight must be in [0, 1]")
    if with_weather.alpha != without_weather.alpha:
        raise InvalidArgumentError(
            f"cannot blend intervals with different alphas "
            f"({with_weather.alpha} vs {without_weather.alpha})"
        )
    if with_weather.method != without_weather.method:
        raise InvalidArgumentError(
            f"cannot blend intervals from different methods "
            f"({with_weather.method} vs {without_weather.method})"
        )
    return PredictionInterval(
        lower=w * with_weather.lower + (1.0 - w) * without_weather.lower,
        upper=w * with_weather.upper + (1.0 - w) * without_weather.upper,
        alpha=with_weather.alpha,
        method=with_weather.method,
    )
