"""Conformal prediction intervals and race-energy forecasting.

The package predicts race speed and rider power with prediction intervals
from eight conformal methods, combines them into kilocalorie forecasts,
benchmarks interval validity and efficiency across significance levels,
and serves the results over a CLI and an HTTP API so a coach can pick
values from the intervals and commit adjusted energy plans.
"""

from .conformal import (
    ConformalModel,
    MethodConfig,
    calibrate,
    method_catalog,
    predict_interval,
    quantile_hi,
    quantile_lo,
)
from .data import (
    Dataset,
    FeatureSchema,
    RawRaceRecord,
    WindSample,
    ascent_relation,
    engineer_features,
    generate_synthetic,
    load_dataset,
    negative_wind_effect,
    rainfall,
    write_dataset,
)
from .domain import (
    EnergyForecast,
    HorizonWeight,
    PredictionInterval,
    StageFeatures,
    blend_intervals,
    compute_energy,
    race_time_from_speed,
    weather_weight,
)
from .regressors import FittedRegressor, RegressorSpec, fit

__version__ = "0.1.0"

__all__ = [
    "ConformalModel",
    "Dataset",
    "EnergyForecast",
    "FeatureSchema",
    "FittedRegressor",
    "HorizonWeight",
    "MethodConfig",
    "PredictionInterval",
    "RawRaceRecord",
    "RegressorSpec",
    "StageFeatures",
    "WindSample",
    "ascent_relation",
    "blend_intervals",
    "calibrate",
    "compute_energy",
    "engineer_features",
    "fit",
    "generate_synthetic",
    "load_dataset",
    "method_catalog",
    "negative_wind_effect",
    "predict_interval",
    "quantile_hi",
    "quantile_lo",
    "race_time_from_speed",
    "rainfall",
    "weather_weight",
    "write_dataset",
]
