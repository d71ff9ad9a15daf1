"""Personal comfort profiles, setpoint aggregation and thermal acceptability."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.comfort_model import ComfortModel
from app.errors import InputError
from app.occupants import OccupantParams, PreferenceLabel, population_probabilities

logger = logging.getLogger(__name__)

_TOL = 1e-9

PROFILE_COLUMNS = ["occupant_id", "temp_c", "p_cooler", "p_nochange", "p_warmer", "comfortable"]


class TempGrid(BaseModel):
    """Candidate setpoint temperatures ``lo, lo + step, ..., hi``."""

    model_config = ConfigDict(frozen=True)

    lo: float = Field(default=24.5, description="Lowest candidate setpoint (°C)")
    hi: float = Field(default=28.0, description="Highest candidate setpoint (°C)")
    step: float = Field(default=0.1, gt=0.0, description="Setpoint grid spacing (°C)")

    @model_validator(mode="after")
    def _check_span(self) -> "TempGrid":
        if not self.lo < self.hi:
            raise ValueError(f"grid lo ({self.lo}) must be below hi ({self.hi})")
        steps = (self.hi - self.lo) / self.step
        if abs(steps - round(steps)) > _TOL * max(1.0, steps):
            raise ValueError(f"grid span {self.hi - self.lo} is not a multiple of step {self.step}")
        return self

    @property
    def n_points(self) -> int:
        return int(round((self.hi - self.lo) / self.step)) + 1

    def points(self) -> np.ndarray:
        return np.round(self.lo + self.step * np.arange(self.n_points), 10)

    def contains(self, temp: float) -> bool:
        return bool(np.any(np.abs(self.points() - temp) < _TOL))

    @property
    def midpoint(self) -> float:
        return float(self.points()[self.n_points // 2])


class ProfileContext(BaseModel):
    """Conditions held fixed while sweeping indoor temperature."""

    model_config = ConfigDict(frozen=True)

    air_speed: float
    outdoor_temp: float
    outdoor_rh: float


@dataclass(frozen=True, eq=False)
class ComfortProfile:
    occupant_id: int
    temps: np.ndarray
    proba: np.ndarray

    @property
    def comfortable(self) -> np.ndarray:
        return comfort_mask(self.proba)

    @property
    def comfort_set(self) -> tuple[float, ...]:
        return comfort_temperatures(self)


class SetpointDecision(BaseModel):
    model_config = ConfigDict(frozen=True)

    setpoint: float
    agreement_count: int = Field(ge=0)
    histogram: tuple[int, ...]
    fallback: bool = False


def comfort_mask(proba: np.ndarray) -> np.ndarray:
    """True where NoChange is strictly more likely than both alternatives."""
    proba = np.atleast_2d(proba)
    nochange = proba[:, PreferenceLabel.NO_CHANGE]
    return (nochange > proba[:, PreferenceLabel.COOLER]) & (nochange > proba[:, PreferenceLabel.WARMER])


def generate_profiles(
    model: ComfortModel,
    occupant_ids: Sequence[int],
    context: ProfileContext,
    grid: TempGrid,
) -> list[ComfortProfile]:
    """Profiles of several occupants from one batched prediction."""
    temps = grid.points()
    ids = np.repeat(np.asarray(occupant_ids, dtype=np.int64), len(temps))
    X = model.layout.encode(
        ids, np.tile(temps, len(occupant_ids)), context.air_speed, context.outdoor_temp, context.outdoor_rh
    )
    proba = model.predict_proba(X).reshape(len(occupant_ids), len(temps), 3)
    return [ComfortProfile(int(occ), temps, proba[i]) for i, occ in enumerate(occupant_ids)]


def generate_profile(model: ComfortModel, occupant_id: int, context: ProfileContext, grid: TempGrid) -> ComfortProfile:
    """Predicted preference distribution of one occupant across the grid."""
    return generate_profiles(model, [occupant_id], context, grid)[0]


def comfort_temperatures(profile: ComfortProfile) -> tuple[float, ...]:
    return tuple(float(t) for t in profile.temps[comfort_mask(profile.proba)])


def _histogram(profiles: Sequence[ComfortProfile], points: np.ndarray) -> np.ndarray:
    hist = np.zeros(len(points), dtype=np.int64)
    for profile in profiles:
        comfort = np.asarray(profile.comfort_set)
        if len(comfort):
            hist += np.any(np.abs(points[:, None] - comfort[None, :]) < _TOL, axis=1)
    return hist


def aggregate_setpoint(
    profiles: Sequence[ComfortProfile],
    grid: TempGrid,
    previous: Optional[float] = None,
) -> SetpointDecision:
    """Highest grid temperature among those with the greatest occupant agreement.

    When no occupant is comfortable anywhere on the grid the previous setpoint
    is held (grid midpoint if there is none).
    """
    if not profiles:
        raise InputError("at least one comfort profile is required")
    points = grid.points()
    hist = _histogram(profiles, points)
    top = int(hist.max())
    if top == 0:
        fallback = grid.midpoint if previous is None else float(previous)
        logger.warning("No occupant has a comfort temperature on the grid; holding %.2f °C", fallback)
        return SetpointDecision(setpoint=fallback, agreement_count=0, histogram=tuple(int(h) for h in hist), fallback=True)
    best = int(np.nonzero(hist == top)[0][-1])
    return SetpointDecision(setpoint=float(points[best]), agreement_count=top, histogram=tuple(int(h) for h in hist))


def acceptability(profiles: Sequence[ComfortProfile], setpoint: float) -> float:
    """Share of occupants whose comfort set contains ``setpoint``."""
    if not profiles:
        raise InputError("at least one comfort profile is required")
    if not np.any(np.abs(profiles[0].temps - setpoint) < _TOL):
        raise InputError(f"setpoint {setpoint} is not on the profile grid")
    accepted = sum(bool(np.any(np.abs(np.asarray(p.comfort_set) - setpoint) < _TOL)) for p in profiles)
    return accepted / len(profiles)


def model_acceptability(
    model: ComfortModel,
    occupant_ids: Sequence[int],
    context: ProfileContext,
    setpoint: float,
) -> float:
    """Acceptability from model predictions at an arbitrary (possibly off-grid) setpoint."""
    X = model.layout.encode(
        np.asarray(occupant_ids, dtype=np.int64), setpoint, context.air_speed, context.outdoor_temp, context.outdoor_rh
    )
    return float(comfort_mask(model.predict_proba(X)).mean())


def oracle_acceptability(population: Sequence[OccupantParams], setpoint: float, air_speed: float) -> float:
    """Acceptability against the occupants' ground-truth preference distributions."""
    return float(comfort_mask(population_probabilities(population, setpoint, air_speed)).mean())


def profile_frame(profiles: Sequence[ComfortProfile]) -> pd.DataFrame:
    rows = []
    for p in profiles:
        mask = p.comfortable
        for t, triple, ok in zip(p.temps, p.proba, mask):
            rows.append((p.occupant_id, float(t), float(triple[0]), float(triple[1]), float(triple[2]), bool(ok)))
    return pd.DataFrame(rows, columns=PROFILE_COLUMNS)
