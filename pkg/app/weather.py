"""Outdoor weather: synthetic tropical series, CSV ingestion and interpolation."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from app.errors import InputError, OutputError, WeatherFormatError

logger = logging.getLogger(__name__)

WEATHER_COLUMNS = ["time_min", "outdoor_temp_c", "outdoor_rh_pct"]

# Hour of day at which the diurnal sine crosses the daily mean on its way up.
PHASE_HOUR = 9.0


class WeatherConfig(BaseModel):
    mean_c: float = Field(default=27.5, description="Daily mean outdoor temperature (°C)")
    amplitude_c: float = Field(default=3.5, ge=0.0, description="Diurnal amplitude (°C)")
    rh_mean: float = Field(default=75.0, ge=0.0, le=100.0, description="Mean outdoor RH (%)")
    rh_slope: float = Field(default=1.5, description="RH drop per °C above the mean (%/°C)")
    rh_min: float = Field(default=40.0, ge=0.0, le=100.0, description="Lower RH clip (%)")
    rh_max: float = Field(default=100.0, ge=0.0, le=100.0, description="Upper RH clip (%)")
    noise_sigma: float = Field(default=0.3, ge=0.0, description="AR(1) innovation std (°C)")
    ar_coefficient: float = Field(default=0.95, ge=0.0, lt=1.0, description="AR(1) persistence per step")
    path: Optional[Path] = Field(default=None, description="Weather CSV to use instead of the synthetic series")


class WeatherPoint(BaseModel):
    model_config = ConfigDict(frozen=True)

    time_min: float = Field(ge=0.0)
    outdoor_temp: float = Field(allow_inf_nan=False)
    outdoor_rh: float = Field(ge=0.0, le=100.0)


def synth_weather(days: int, step_minutes: float, seed: int, cfg: Optional[WeatherConfig] = None) -> list[WeatherPoint]:
    """Diurnal sine plus stationary AR(1) noise, humidity tracking temperature inversely.

    Args:
        days: Length of the series in days
        step_minutes: Sample spacing
        seed: Noise seed
        cfg: Climate parameters

    Returns:
        list of WeatherPoint starting at time 0
    """
    if days < 1:
        raise InputError(f"days must be at least 1, got {days}")
    if step_minutes <= 0:
        raise InputError(f"step_minutes must be positive, got {step_minutes}")
    cfg = cfg or WeatherConfig()
    rng = np.random.default_rng(seed)

    n = int(round(days * 1440 / step_minutes))
    t_min = np.arange(n) * float(step_minutes)
    t_hours = t_min / 60.0

    noise = np.zeros(n)
    if cfg.noise_sigma > 0:
        shocks = rng.normal(0.0, cfg.noise_sigma, n)
        noise[0] = shocks[0] / math.sqrt(1.0 - cfg.ar_coefficient**2)
        for i in range(1, n):
            noise[i] = cfg.ar_coefficient * noise[i - 1] + shocks[i]

    temp = cfg.mean_c + cfg.amplitude_c * np.sin(2.0 * np.pi * (t_hours - PHASE_HOUR) / 24.0) + noise
    rh = np.clip(cfg.rh_mean - cfg.rh_slope * (temp - cfg.mean_c), cfg.rh_min, cfg.rh_max)
    return [
        WeatherPoint(time_min=float(t), outdoor_temp=float(a), outdoor_rh=float(r)) for t, a, r in zip(t_min, temp, rh)
    ]


def stationary_noise_std(cfg: WeatherConfig) -> float:
    return cfg.noise_sigma / math.sqrt(1.0 - cfg.ar_coefficient**2)


def _finite(value, row: int, column: str) -> float:
    try:
        number = float(value)
    except (TypeError, ValueError):
        raise WeatherFormatError(f"invalid value '{value}'", row=row, column=column) from None
    if not math.isfinite(number):
        raise WeatherFormatError(f"non-finite value '{value}'", row=row, column=column)
    return number


def load_weather_csv(path: Union[str, Path]) -> list[WeatherPoint]:
    """Read ``time_min,outdoor_temp_c,outdoor_rh_pct`` with strictly increasing time."""
    path = Path(path)
    try:
        frame = pd.read_csv(path, float_precision="round_trip")
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise WeatherFormatError(f"cannot read weather file {path}: {exc}") from exc

    missing = [c for c in WEATHER_COLUMNS if c not in frame.columns]
    if missing:
        raise WeatherFormatError(f"missing columns {missing}", column=missing[0])

    points, previous = [], None
    for i, record in enumerate(frame[WEATHER_COLUMNS].itertuples(index=False), start=1):
        t, temp, rh = (_finite(value, i, column) for column, value in zip(WEATHER_COLUMNS, record))
        if previous is not None and t <= previous:
            raise WeatherFormatError(f"time {t} does not increase (previous {previous})", row=i, column="time_min")
        try:
            points.append(WeatherPoint(time_min=t, outdoor_temp=temp, outdoor_rh=rh))
        except ValidationError as exc:
            field = str(exc.errors()[0]["loc"][-1])
            column = {"time_min": "time_min", "outdoor_temp": "outdoor_temp_c"}.get(field, "outdoor_rh_pct")
            raise WeatherFormatError(exc.errors()[0]["msg"], row=i, column=column) from None
        previous = t
    if not points:
        raise WeatherFormatError("weather file has no rows")
    logger.info("Loaded %d weather points from %s", len(points), path)
    return points


def weather_frame(points: Sequence[WeatherPoint]) -> pd.DataFrame:
    return pd.DataFrame(
        {
            "time_min": [p.time_min for p in points],
            "outdoor_temp_c": [p.outdoor_temp for p in points],
            "outdoor_rh_pct": [p.outdoor_rh for p in points],
        },
        columns=WEATHER_COLUMNS,
    )


def write_weather_csv(points: Sequence[WeatherPoint], path: Union[str, Path]) -> Path:
    path = Path(path)
    try:
        weather_frame(points).to_csv(path, index=False)
    except OSError as exc:
        raise OutputError(str(exc), path) from exc
    return path


@dataclass(frozen=True, eq=False)
class WeatherSeries:
    """Linear interpolation over a weather sequence; held constant beyond either end."""

    time_min: np.ndarray
    outdoor_temp: np.ndarray
    outdoor_rh: np.ndarray

    @classmethod
    def from_points(cls, points: Sequence[WeatherPoint]) -> "WeatherSeries":
        if not points:
            raise InputError("weather series is empty")
        return cls(
            np.array([p.time_min for p in points]),
            np.array([p.outdoor_temp for p in points]),
            np.array([p.outdoor_rh for p in points]),
        )

    def at(self, time_min: float) -> tuple[float, float]:
        return (
            float(np.interp(time_min, self.time_min, self.outdoor_temp)),
            float(np.interp(time_min, self.time_min, self.outdoor_rh)),
        )

    def point(self, time_min: float) -> WeatherPoint:
        temp, rh = self.at(time_min)
        return WeatherPoint(time_min=time_min, outdoor_temp=temp, outdoor_rh=rh)

    @property
    def end_min(self) -> float:
        return float(self.time_min[-1])
