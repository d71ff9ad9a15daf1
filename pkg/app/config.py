import logging
from functools import lru_cache
from pathlib import Path
from typing import Any, Mapping, Optional, Union

from dotenv import dotenv_values
from pydantic import BaseModel, Field, ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from app.active_learning import ActiveLearningConfig
from app.errors import ConfigError
from app.gbt import BoostingParams
from app.occupants import PopulationConfig
from app.profiles import TempGrid
from app.weather import WeatherConfig
from app.zone import ZoneParams

logger = logging.getLogger(__name__)

# Indoor temperature range the comfort model accepts.
ENV_TEMP_RANGE = (20.0, 35.0)


class FeatureSettings(BaseModel):
    folds: int = Field(default=5, description="Stratified folds for recursive elimination")
    top_n: int = Field(default=5, ge=1, description="Features kept by select-features")
    workers: int = Field(default=1, ge=1, description="Folds evaluated concurrently")


class DataSettings(BaseModel):
    path: Optional[Path] = Field(default=None, description="Comfort dataset to replay instead of the oracle")


class RunSettings(BaseModel):
    horizon_days: int = Field(default=56, ge=1, description="Simulated days (starting on a Monday)")
    step_minutes: int = Field(default=30, ge=1, description="Zone and control time step (minutes)")
    initial_setpoint: float = Field(default=24.0, description="Setpoint and zone temperature at start (°C)")
    air_speed: float = Field(default=0.5, ge=0.0, le=2.0, description="Air speed under OCC (m/s)")
    candidates_per_step: int = Field(default=6, ge=1, description="Distinct occupants sampled per control step")
    baseline_setpoint: float = Field(default=27.0, description="Fixed setpoint of the baseline (°C)")
    baseline_air_speed: float = Field(default=0.94, ge=0.0, le=2.0, description="Air speed of the baseline (m/s)")
    random_fraction: float = Field(
        default=0.69, ge=0.0, le=1.0, description="Label fraction of the random strategy outside compare"
    )
    eval_every: int = Field(default=20, ge=1, description="Control steps between holdout evaluations")
    holdout_size: int = Field(default=2000, ge=1, description="Oracle-labelled holdout instances")
    convergence_window_days: float = Field(default=3.0, gt=0.0, description="Agreement window for convergence")
    match_tolerance: float = Field(default=0.01, ge=0.0, description="Macro-F1 slack for effort_to_match")
    annualize: bool = Field(default=False, description="Add a simple annual extrapolation to the summary")
    profile_every: int = Field(default=20, ge=1, description="Control steps between dumped profiles")


class Settings(BaseSettings):
    """Simulator settings; environment variables use the OCC_ prefix and ``__`` nesting."""

    population: PopulationConfig = PopulationConfig()
    model: BoostingParams = BoostingParams()
    features: FeatureSettings = FeatureSettings()
    al: ActiveLearningConfig = ActiveLearningConfig()
    grid: TempGrid = TempGrid()
    zone: ZoneParams = ZoneParams()
    weather: WeatherConfig = WeatherConfig()
    data: DataSettings = DataSettings()
    run: RunSettings = RunSettings()
    log_level: str = Field(default="INFO", description="Root logger level")
    max_stored_runs: int = Field(default=32, ge=1, description="Runs the HTTP server keeps in memory")

    model_config = SettingsConfigDict(
        env_prefix="OCC_",
        env_nested_delimiter="__",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )


def _groups() -> dict[str, Optional[type[BaseModel]]]:
    groups = {}
    for name, field in Settings.model_fields.items():
        annotation = field.annotation
        groups[name] = annotation if isinstance(annotation, type) and issubclass(annotation, BaseModel) else None
    return groups


def flat_keys() -> list[str]:
    keys = []
    for name, group in _groups().items():
        keys.extend([f"{name}.{sub}" for sub in group.model_fields] if group else [name])
    return keys


def describe_settings() -> str:
    """One line per flat config key: default and description."""
    lines = []
    for name, group in _groups().items():
        fields = group.model_fields.items() if group else [(None, Settings.model_fields[name])]
        for sub, field in fields:
            key = f"{name}.{sub}" if sub else name
            lines.append(f"  {key} = {field.default}  ({field.description or ''})")
    return "\n".join(lines)


def _assign(values: dict, key: str, raw: Any) -> None:
    group, _, sub = key.strip().partition(".")
    groups = _groups()
    if group not in groups or (sub and (groups[group] is None or sub not in groups[group].model_fields)):
        raise ConfigError(f"unknown config key '{key}'")
    if bool(sub) != bool(groups[group]):
        raise ConfigError(f"config key '{key}' must name a field of group '{group}'")
    value = None if isinstance(raw, str) and raw.strip() == "" else raw
    if sub:
        values.setdefault(group, {})[sub] = value
    else:
        values[group] = value


def parse_overrides(pairs) -> dict[str, str]:
    """``["al.theta=0.3", ...]`` -> ``{"al.theta": "0.3"}``."""
    overrides = {}
    for pair in pairs or []:
        key, sep, value = pair.partition("=")
        if not sep:
            raise ConfigError(f"override '{pair}' is not of the form key=value")
        overrides[key.strip()] = value.strip()
    return overrides


def check_consistency(settings: Settings) -> None:
    """Cross-field checks that a single group cannot express."""
    lo, hi = ENV_TEMP_RANGE
    if settings.grid.lo < lo or settings.grid.hi > hi:
        raise ConfigError(f"grid [{settings.grid.lo}, {settings.grid.hi}] leaves the model range [{lo}, {hi}]")
    for key in ("initial_setpoint", "baseline_setpoint"):
        value = getattr(settings.run, key)
        if not lo <= value <= hi:
            raise ConfigError(f"run.{key}={value} is outside [{lo}, {hi}]")
    if settings.data.path is None and settings.run.candidates_per_step > settings.population.size:
        raise ConfigError(
            f"run.candidates_per_step={settings.run.candidates_per_step} exceeds "
            f"population.size={settings.population.size}"
        )
    if 1440 % settings.run.step_minutes:
        raise ConfigError(f"run.step_minutes={settings.run.step_minutes} does not divide a day")
    if settings.al.committee_size < 2:
        raise ConfigError(f"al.committee_size must be at least 2, got {settings.al.committee_size}")
    if settings.al.theta < 0:
        raise ConfigError(f"al.theta must be non-negative, got {settings.al.theta}")
    if settings.al.policy == "top_k" and not 0 <= settings.al.k <= settings.run.candidates_per_step:
        raise ConfigError(f"al.k must lie within [0, {settings.run.candidates_per_step}], got {settings.al.k}")
    if settings.features.folds < 2:
        raise ConfigError(f"features.folds must be at least 2, got {settings.features.folds}")
    if logging.getLevelName(settings.log_level.upper()) not in range(0, 60):
        raise ConfigError(f"unknown log level '{settings.log_level}'")


def load_settings(
    path: Optional[Union[str, Path]] = None,
    overrides: Optional[Mapping[str, Any]] = None,
) -> Settings:
    """Defaults < environment < config file < overrides, validated as a whole.

    The config file holds flat ``group.key=value`` lines (dotenv syntax).
    """
    values: dict = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file {path} does not exist")
        for key, raw in dotenv_values(path).items():
            _assign(values, key, raw)
    for key, raw in (overrides or {}).items():
        _assign(values, key, raw)
    try:
        settings = Settings(**values)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc
    check_consistency(settings)
    return settings


@lru_cache
def get_settings() -> Settings:
    """Get cached settings instance."""
    return load_settings()
