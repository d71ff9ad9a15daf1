"""Synthetic occupant population, preference oracle and comfort dataset I/O."""

from __future__ import annotations

import logging
import math
from enum import IntEnum
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, ValidationError
from scipy.special import expit

from app.errors import DatasetParseError, EmptyPopulationError, LabelError, OutputError, PoolError

logger = logging.getLogger(__name__)

# Air speed at which the effective temperature equals the indoor temperature.
REFERENCE_AIR_SPEED = 0.1

# Ranges used to normalise distances between thermal conditions.
TEMP_RANGE = (24.0, 28.0)
SPEED_RANGE = (0.1, 0.8)

DATASET_COLUMNS = [
    "timestep",
    "occupant_id",
    "indoor_temp_c",
    "air_speed_ms",
    "outdoor_temp_c",
    "outdoor_rh_pct",
    "label",
]

# Dataset column for each validated field, used to name the culprit column in errors.
_FIELD_COLUMNS = {
    "indoor_temp": "indoor_temp_c",
    "air_speed": "air_speed_ms",
    "outdoor_temp": "outdoor_temp_c",
    "outdoor_rh": "outdoor_rh_pct",
    "occupant_id": "occupant_id",
    "timestep": "timestep",
}


class PreferenceLabel(IntEnum):
    """Thermal preference vote, ordered Cooler < NoChange < Warmer."""

    COOLER = 0
    NO_CHANGE = 1
    WARMER = 2

    @property
    def token(self) -> str:
        return self.name.lower()

    @classmethod
    def parse(cls, text: str) -> "PreferenceLabel":
        """Parse a dataset label, case-insensitively."""
        key = text.strip().lower().replace(" ", "_").replace("-", "_")
        if key == "nochange":
            key = "no_change"
        for label in cls:
            if label.token == key:
                return label
        raise LabelError(f"unknown preference label '{text}' (expected cooler, no_change or warmer)")


class EnvState(BaseModel):
    """The four thermal features an occupant is exposed to."""

    model_config = ConfigDict(frozen=True)

    indoor_temp: float = Field(ge=20.0, le=35.0, description="Indoor air temperature (°C)")
    air_speed: float = Field(ge=0.0, le=2.0, description="Air speed (m/s)")
    outdoor_temp: float = Field(allow_inf_nan=False, description="Outdoor air temperature (°C)")
    outdoor_rh: float = Field(ge=0.0, le=100.0, description="Outdoor relative humidity (%)")


class OccupantParams(BaseModel):
    """Ground-truth preference parameters of one synthetic occupant."""

    model_config = ConfigDict(frozen=True)

    id: int = Field(ge=0)
    neutral_temp: float
    slope: float = Field(gt=0.0)
    band_halfwidth: float = Field(ge=0.3)
    airspeed_gain: float = Field(ge=0.0)


class Candidate(BaseModel):
    """An occupant/condition pair offered for labelling; label set once answered."""

    model_config = ConfigDict(frozen=True)

    occupant_id: int = Field(ge=0)
    env: EnvState
    timestep: int = Field(ge=0)
    label: Optional[PreferenceLabel] = None

    def with_label(self, label: PreferenceLabel) -> "LabeledInstance":
        return LabeledInstance(
            occupant_id=self.occupant_id, env=self.env, timestep=self.timestep, label=label
        )


class LabeledInstance(Candidate):
    """One comfort observation."""

    label: PreferenceLabel


class PopulationConfig(BaseModel):
    """Normal distributions the synthetic population is drawn from."""

    size: int = Field(default=58, ge=1, description="Number of occupants")
    neutral_temp_mean: float = Field(default=26.5, description="Mean neutral temperature (°C)")
    neutral_temp_sd: float = Field(default=1.0, ge=0.0, description="Neutral temperature spread (°C)")
    neutral_temp_min: float = Field(default=24.5, description="Lower clip for neutral temperature (°C)")
    neutral_temp_max: float = Field(default=28.5, description="Upper clip for neutral temperature (°C)")
    slope_mean: float = Field(default=1.5, gt=0.0, description="Mean logit slope (1/°C)")
    slope_sd: float = Field(default=0.3, ge=0.0, description="Logit slope spread (1/°C)")
    slope_min: float = Field(default=0.5, gt=0.0, description="Lower clip for the logit slope (1/°C)")
    band_mean: float = Field(default=1.0, description="Mean comfort band half-width (°C)")
    band_sd: float = Field(default=0.25, ge=0.0, description="Comfort band half-width spread (°C)")
    band_min: float = Field(default=0.3, ge=0.3, description="Lower clip for the band half-width (°C)")
    airspeed_gain_mean: float = Field(default=2.0, description="Mean air-speed cooling effect (°C per m/s)")
    airspeed_gain_sd: float = Field(default=0.5, ge=0.0, description="Air-speed effect spread (°C per m/s)")
    airspeed_gain_min: float = Field(default=0.0, ge=0.0, description="Lower clip for the air-speed effect")


def generate_population(n: int, seed: int, cfg: Optional[PopulationConfig] = None) -> list[OccupantParams]:
    """Draw ``n`` occupants with ids ``0..n-1``.

    Args:
        n: Population size
        seed: Seed of the parameter generator
        cfg: Distribution parameters (defaults when omitted)

    Returns:
        list of OccupantParams, identical for identical (n, seed, cfg)
    """
    if n < 1:
        raise EmptyPopulationError("population size must be at least 1")
    cfg = cfg or PopulationConfig()
    rng = np.random.default_rng(seed)

    neutral = np.clip(
        rng.normal(cfg.neutral_temp_mean, cfg.neutral_temp_sd, n), cfg.neutral_temp_min, cfg.neutral_temp_max
    )
    slope = np.maximum(rng.normal(cfg.slope_mean, cfg.slope_sd, n), cfg.slope_min)
    band = np.maximum(rng.normal(cfg.band_mean, cfg.band_sd, n), cfg.band_min)
    gain = np.maximum(rng.normal(cfg.airspeed_gain_mean, cfg.airspeed_gain_sd, n), cfg.airspeed_gain_min)

    return [
        OccupantParams(
            id=i,
            neutral_temp=float(neutral[i]),
            slope=float(slope[i]),
            band_halfwidth=float(band[i]),
            airspeed_gain=float(gain[i]),
        )
        for i in range(n)
    ]


def _ordered_logit(delta: np.ndarray, slope: np.ndarray, band: np.ndarray) -> np.ndarray:
    """Cumulative ordered-logit triple for effective-temperature offsets ``delta``."""
    p_cooler = expit(slope * delta - slope * band)
    p_warmer = expit(-slope * delta - slope * band)
    p_nochange = np.maximum(1.0 - p_cooler - p_warmer, 0.0)
    return np.stack([p_cooler, p_nochange, p_warmer], axis=-1)


def population_probabilities(
    population: Sequence[OccupantParams],
    indoor_temp: float,
    air_speed: float,
) -> np.ndarray:
    """Ground-truth probability triples of every occupant at one condition, shape (n, 3)."""
    return condition_probabilities(population, np.arange(len(population)), indoor_temp, air_speed)


def condition_probabilities(
    population: Sequence[OccupantParams],
    occupant_index,
    indoor_temp,
    air_speed,
) -> np.ndarray:
    """Ground-truth triples for aligned arrays of population indices and conditions."""
    idx = np.asarray(occupant_index, dtype=np.int64)
    neutral = np.array([o.neutral_temp for o in population])[idx]
    slope = np.array([o.slope for o in population])[idx]
    band = np.array([o.band_halfwidth for o in population])[idx]
    gain = np.array([o.airspeed_gain for o in population])[idx]
    t_eff = np.asarray(indoor_temp, dtype=float) - gain * (np.asarray(air_speed, dtype=float) - REFERENCE_AIR_SPEED)
    return _ordered_logit(t_eff - neutral, slope, band)


def sample_labels(proba: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw one class index per row of ``proba`` with a single uniform each."""
    u = rng.random(len(proba))
    return (u >= proba[:, 0]).astype(np.int64) + (u >= proba[:, 0] + proba[:, 1])


def preference_probabilities(occ: OccupantParams, env: EnvState) -> tuple[float, float, float]:
    """Return (p_cooler, p_nochange, p_warmer) for one occupant at ``env``."""
    t_eff = env.indoor_temp - occ.airspeed_gain * (env.air_speed - REFERENCE_AIR_SPEED)
    triple = _ordered_logit(
        np.array(t_eff - occ.neutral_temp), np.array(occ.slope), np.array(occ.band_halfwidth)
    )
    return float(triple[0]), float(triple[1]), float(triple[2])


def sample_label(occ: OccupantParams, env: EnvState, rng: np.random.Generator) -> PreferenceLabel:
    """Answer the survey question by drawing from the occupant's preference distribution."""
    p_cooler, p_nochange, _ = preference_probabilities(occ, env)
    u = rng.random()
    if u < p_cooler:
        return PreferenceLabel.COOLER
    if u < p_cooler + p_nochange:
        return PreferenceLabel.NO_CHANGE
    return PreferenceLabel.WARMER


def _parse_number(raw: str, row: int, column: str, kind: type) -> Union[int, float]:
    try:
        value = kind(raw.strip())
    except (ValueError, AttributeError):
        raise DatasetParseError(f"cannot parse '{raw}' as {kind.__name__}", row=row, column=column) from None
    if kind is float and not math.isfinite(value):
        raise DatasetParseError(f"non-finite value '{raw}'", row=row, column=column)
    return value


def load_dataset_csv(path: Union[str, Path]) -> list[LabeledInstance]:
    """Read a comfort dataset; extra columns are ignored.

    Rows are numbered from 1 (the first line after the header) in error messages.
    """
    path = Path(path)
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except (OSError, pd.errors.ParserError) as exc:
        raise DatasetParseError(f"cannot read dataset {path}: {exc}") from exc

    missing = [c for c in DATASET_COLUMNS if c not in frame.columns]
    if missing:
        raise DatasetParseError(f"missing columns {missing}", column=missing[0])

    instances = []
    for i, record in enumerate(frame[DATASET_COLUMNS].itertuples(index=False), start=1):
        values = dict(zip(DATASET_COLUMNS, record))
        try:
            label = PreferenceLabel.parse(values["label"])
        except LabelError as exc:
            raise LabelError(str(exc), row=i, column="label") from None
        try:
            instance = LabeledInstance(
                occupant_id=_parse_number(values["occupant_id"], i, "occupant_id", int),
                timestep=_parse_number(values["timestep"], i, "timestep", int),
                env=EnvState(
                    indoor_temp=_parse_number(values["indoor_temp_c"], i, "indoor_temp_c", float),
                    air_speed=_parse_number(values["air_speed_ms"], i, "air_speed_ms", float),
                    outdoor_temp=_parse_number(values["outdoor_temp_c"], i, "outdoor_temp_c", float),
                    outdoor_rh=_parse_number(values["outdoor_rh_pct"], i, "outdoor_rh_pct", float),
                ),
                label=label,
            )
        except ValidationError as exc:
            error = exc.errors()[0]
            field = str(error["loc"][-1]) if error["loc"] else None
            raise DatasetParseError(error["msg"], row=i, column=_FIELD_COLUMNS.get(field, field)) from None
        instances.append(instance)

    logger.info("Loaded %d instances from %s", len(instances), path)
    return instances


def instances_frame(instances: Sequence[LabeledInstance]) -> pd.DataFrame:
    """Dataset-schema frame for a sequence of labelled instances."""
    return pd.DataFrame(
        {
            "timestep": [x.timestep for x in instances],
            "occupant_id": [x.occupant_id for x in instances],
            "indoor_temp_c": [x.env.indoor_temp for x in instances],
            "air_speed_ms": [x.env.air_speed for x in instances],
            "outdoor_temp_c": [x.env.outdoor_temp for x in instances],
            "outdoor_rh_pct": [x.env.outdoor_rh for x in instances],
            "label": [x.label.token for x in instances],
        },
        columns=DATASET_COLUMNS,
    )


def write_dataset_csv(instances: Sequence[LabeledInstance], path: Union[str, Path]) -> Path:
    """Write instances in the dataset CSV schema."""
    path = Path(path)
    try:
        instances_frame(instances).to_csv(path, index=False)
    except OSError as exc:
        raise OutputError(str(exc), path) from exc
    return path


def _scaled_distance(env: EnvState, other: EnvState) -> float:
    dt = (other.indoor_temp - env.indoor_temp) / (TEMP_RANGE[1] - TEMP_RANGE[0])
    dv = (other.air_speed - env.air_speed) / (SPEED_RANGE[1] - SPEED_RANGE[0])
    return math.hypot(dt, dv)


def nearest_instances(
    pool: Sequence[Union[LabeledInstance, int]],
    env: EnvState,
    k_occupants: int,
    rng: np.random.Generator,
    timestep: int = 0,
) -> list[Candidate]:
    """Pick one candidate per occupant for ``k_occupants`` distinct occupants.

    ``pool`` is either a replay dataset (labelled instances) or a list of
    occupant ids (oracle mode). Occupants are chosen uniformly without
    replacement. In replay mode each chosen occupant contributes the pool
    instance closest to ``env`` (ties to the lowest timestep); in oracle mode
    the candidate carries ``env`` itself and no label.
    """
    replay = bool(pool) and isinstance(pool[0], LabeledInstance)
    if replay:
        by_occupant: dict[int, list[LabeledInstance]] = {}
        for instance in pool:
            by_occupant.setdefault(instance.occupant_id, []).append(instance)
        occupant_ids = sorted(by_occupant)
    else:
        occupant_ids = sorted(set(int(i) for i in pool))

    if k_occupants > len(occupant_ids):
        raise PoolError(f"requested {k_occupants} occupants but only {len(occupant_ids)} are available")

    chosen = sorted(int(i) for i in rng.choice(occupant_ids, size=k_occupants, replace=False))
    if not replay:
        return [Candidate(occupant_id=i, env=env, timestep=timestep) for i in chosen]

    return [
        min(by_occupant[i], key=lambda inst: (_scaled_distance(env, inst.env), inst.timestep))
        for i in chosen
    ]


def generate_campaign(
    population: Sequence[OccupantParams],
    weather_at,
    seed: int,
    days: int = 10,
    slots_per_day: int = 20,
    start_hour: float = 8.0,
) -> list[LabeledInstance]:
    """Simulate the data-collection campaign that produces a comfort dataset.

    Occupants are split into ``days`` groups (one group per working day); every
    30 minutes the indoor temperature and air speed move to the next condition
    of a shuffled temperature x air-speed schedule, and each group member votes.

    Args:
        population: Occupants taking part
        weather_at: Callable mapping minutes since start to (outdoor_temp, outdoor_rh)
        seed: Seed for grouping, scheduling and votes
        days: Number of working days in the campaign
        slots_per_day: 30-minute slots per day
        start_hour: Hour of the first slot

    Returns:
        list of labelled instances ordered by timestep then occupant id
    """
    rng = np.random.default_rng(seed)
    temps = np.arange(TEMP_RANGE[0], TEMP_RANGE[1] + 0.5, 1.0)
    speeds = np.array([0.1, 0.3, 0.5, 0.8])
    conditions = [(float(t), float(v)) for t in temps for v in speeds]

    order = rng.permutation(len(population))
    groups = np.array_split(order, max(1, days))
    instances = []
    for day, group in enumerate(groups):
        schedule = [conditions[j % len(conditions)] for j in rng.permutation(max(slots_per_day, len(conditions)))]
        for slot in range(slots_per_day):
            timestep = day * slots_per_day + slot
            time_min = day * 1440 + start_hour * 60 + slot * 30
            outdoor_temp, outdoor_rh = weather_at(time_min)
            indoor, speed = schedule[slot]
            env = EnvState(indoor_temp=indoor, air_speed=speed, outdoor_temp=outdoor_temp, outdoor_rh=outdoor_rh)
            for idx in sorted(int(g) for g in group):
                occ = population[idx]
                instances.append(
                    LabeledInstance(occupant_id=occ.id, env=env, timestep=timestep, label=sample_label(occ, env, rng))
                )
    return instances
