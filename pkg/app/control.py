"""Closed-loop occupant-centric control runs, strategy comparison and summary metrics."""

from __future__ import annotations

import dataclasses
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel

from app.active_learning import (
    Committee,
    committee_from_matrix,
    is_cold_start,
    labelling_effort,
    select_informative,
    select_random,
)
from app.comfort_model import ComfortModel, FeatureLayout, fit_comfort_model, instance_labels
from app.config import Settings, check_consistency
from app.errors import ConfigError, InputError
from app.gbt import Metrics
from app.occupants import (
    Candidate,
    EnvState,
    LabeledInstance,
    OccupantParams,
    condition_probabilities,
    generate_population,
    instances_frame,
    load_dataset_csv,
    nearest_instances,
    sample_label,
    sample_labels,
)
from app.profiles import (
    ProfileContext,
    acceptability,
    aggregate_setpoint,
    generate_profiles,
    model_acceptability,
    oracle_acceptability,
    profile_frame,
)
from app.weather import WeatherSeries, load_weather_csv, synth_weather
from app.zone import ZoneState, run_baseline, supply_airflow, zone_step

logger = logging.getLogger(__name__)

# Keys of the independent random streams derived from a run seed.
POPULATION_STREAM = 1
WEATHER_STREAM = 2
CANDIDATE_STREAM = 3
LABEL_STREAM = 4
COMMITTEE_STREAM = 5
RANDOM_STREAM = 6
HOLDOUT_STREAM = 7

# Setpoints closer than half a grid step count as equal.
CONVERGENCE_TOLERANCE = 0.051

STEP_COLUMNS = [
    "step",
    "time_min",
    "strategy",
    "setpoint_c",
    "zone_temp_c",
    "q_cool_w",
    "district_kwh",
    "fan_kwh",
    "pump_kwh",
]

CONTROL_COLUMNS = [
    "step",
    "time_min",
    "strategy",
    "setpoint_c",
    "zone_temp_c",
    "outdoor_temp_c",
    "outdoor_rh_pct",
    "air_speed_ms",
    "airflow_m3s",
    "cold_start",
    "candidates",
    "queried",
    "n_candidates",
    "n_queried",
    "cumulative_labels",
    "agreement",
    "model_acceptability",
    "oracle_acceptability",
    "macro_f1",
]

CURVE_COLUMNS = ["control_step", "labels", "macro_f1", "accuracy"]


class Strategy(str, Enum):
    AL = "al"
    CONVENTIONAL = "conventional"
    BASELINE = "baseline"
    RANDOM = "random"

    @property
    def occupant_centric(self) -> bool:
        return self is not Strategy.BASELINE


def derive_rng(seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *keys]))


def derive_seed(seed: int, *keys: int) -> int:
    return int(np.random.SeedSequence([seed, *keys]).generate_state(1)[0])


@dataclass(frozen=True)
class StepRecord:
    step: int
    time_min: float
    strategy: str
    setpoint: float
    zone_temp: float
    q_cool: float
    district_kwh: float
    fan_kwh: float
    pump_kwh: float
    outdoor_temp: float
    outdoor_rh: float
    air_speed: float
    occupied: bool
    airflow: float = 0.0
    cold_start: bool = False
    candidate_ids: tuple[int, ...] = ()
    queried_ids: tuple[int, ...] = ()
    cumulative_labels: int = 0
    agreement: int = 0
    model_acceptability: float = math.nan
    oracle_acceptability: float = math.nan
    macro_f1: float = math.nan

    @property
    def total_kwh(self) -> float:
        return self.district_kwh + self.fan_kwh + self.pump_kwh


@dataclass(frozen=True)
class CurvePoint:
    control_step: int
    labels: int
    macro_f1: float
    accuracy: float


@dataclass(frozen=True, eq=False)
class Scenario:
    """Everything a run needs that depends only on (settings, seed)."""

    settings: Settings
    seed: int
    population: tuple[OccupantParams, ...]
    dataset: tuple[LabeledInstance, ...]
    weather: WeatherSeries
    layout: FeatureLayout
    holdout_X: np.ndarray
    holdout_y: np.ndarray

    @property
    def replay(self) -> bool:
        return bool(self.dataset)

    @property
    def occupant_ids(self) -> tuple[int, ...]:
        return self.layout.occupant_ids

    @property
    def pool(self) -> Sequence:
        return self.dataset if self.replay else self.occupant_ids


@dataclass(frozen=True, eq=False)
class RunResult:
    strategy: Strategy
    seed: int
    step_minutes: int
    records: tuple[StepRecord, ...]
    labels: tuple[LabeledInstance, ...] = ()
    n_candidates_total: int = 0
    curve: tuple[CurvePoint, ...] = ()
    final_metrics: Optional[Metrics] = None
    final_model: Optional[ComfortModel] = None
    profiles: tuple[tuple[int, pd.DataFrame], ...] = ()
    convergence_step: Optional[int] = None
    replay: bool = False

    @property
    def labelling_effort(self) -> float:
        if self.n_candidates_total == 0:
            return math.nan
        return labelling_effort(len(self.labels), self.n_candidates_total)

    @property
    def setpoints(self) -> np.ndarray:
        return np.array([r.setpoint for r in self.records])

    @property
    def total_kwh(self) -> float:
        return float(sum(r.total_kwh for r in self.records))

    def steps_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [
                (r.step, r.time_min, r.strategy, r.setpoint, r.zone_temp, r.q_cool, r.district_kwh, r.fan_kwh, r.pump_kwh)
                for r in self.records
            ],
            columns=STEP_COLUMNS,
        )

    def control_frame(self) -> pd.DataFrame:
        rows = [
            (
                r.step,
                r.time_min,
                r.strategy,
                r.setpoint,
                r.zone_temp,
                r.outdoor_temp,
                r.outdoor_rh,
                r.air_speed,
                r.airflow,
                r.cold_start,
                ";".join(str(i) for i in r.candidate_ids),
                ";".join(str(i) for i in r.queried_ids),
                len(r.candidate_ids),
                len(r.queried_ids),
                r.cumulative_labels,
                r.agreement,
                r.model_acceptability,
                r.oracle_acceptability,
                r.macro_f1,
            )
            for r in self.records
            if r.occupied
        ]
        return pd.DataFrame(rows, columns=CONTROL_COLUMNS)

    def curve_frame(self) -> pd.DataFrame:
        return pd.DataFrame([dataclasses.astuple(p) for p in self.curve], columns=CURVE_COLUMNS)

    def labels_frame(self) -> pd.DataFrame:
        return instances_frame(self.labels)

    def weekly_frame(self) -> pd.DataFrame:
        """Energy by component per simulated week, with the week's mean outdoor conditions."""
        frame = pd.DataFrame(
            {
                "week": [int(r.time_min // (7 * 1440)) + 1 for r in self.records],
                "district_kwh": [r.district_kwh for r in self.records],
                "fan_kwh": [r.fan_kwh for r in self.records],
                "pump_kwh": [r.pump_kwh for r in self.records],
                "outdoor_temp_c": [r.outdoor_temp for r in self.records],
                "outdoor_rh_pct": [r.outdoor_rh for r in self.records],
            }
        )
        weekly = frame.groupby("week").agg(
            district_kwh=("district_kwh", "sum"),
            fan_kwh=("fan_kwh", "sum"),
            pump_kwh=("pump_kwh", "sum"),
            outdoor_temp_mean_c=("outdoor_temp_c", "mean"),
            outdoor_rh_mean_pct=("outdoor_rh_pct", "mean"),
        )
        weekly.insert(3, "total_kwh", weekly["district_kwh"] + weekly["fan_kwh"] + weekly["pump_kwh"])
        weekly.insert(0, "strategy", self.strategy.value)
        return weekly.reset_index()


def _load_weather(settings: Settings, seed: int) -> WeatherSeries:
    if settings.weather.path is not None:
        points = load_weather_csv(settings.weather.path)
    else:
        points = synth_weather(
            settings.run.horizon_days,
            settings.run.step_minutes,
            derive_seed(seed, WEATHER_STREAM),
            settings.weather,
        )
    return WeatherSeries.from_points(points)


def _oracle_holdout(
    population: Sequence[OccupantParams],
    layout: FeatureLayout,
    weather: WeatherSeries,
    settings: Settings,
    seed: int,
) -> tuple[np.ndarray, np.ndarray]:
    rng = derive_rng(seed, HOLDOUT_STREAM)
    n = settings.run.holdout_size
    idx = rng.integers(len(population), size=n)
    indoor = rng.uniform(24.0, 28.0, n)
    speed = rng.uniform(0.1, 0.8, n)
    times = rng.uniform(0.0, settings.run.horizon_days * 1440.0, n)
    outdoor = np.array([weather.at(t) for t in times])
    ids = np.array([population[i].id for i in idx])
    X = layout.encode(ids, indoor, speed, outdoor[:, 0], outdoor[:, 1])
    y = sample_labels(condition_probabilities(population, idx, indoor, speed), rng)
    return X, y


def build_scenario(settings: Settings, seed: int) -> Scenario:
    """Population or replay dataset, weather, feature layout and evaluation holdout."""
    check_consistency(settings)
    weather = _load_weather(settings, seed)
    if settings.data.path is not None:
        dataset = tuple(load_dataset_csv(settings.data.path))
        ids = sorted({x.occupant_id for x in dataset})
        if settings.run.candidates_per_step > len(ids):
            raise ConfigError(
                f"run.candidates_per_step={settings.run.candidates_per_step} exceeds the "
                f"{len(ids)} occupants in {settings.data.path}"
            )
        layout = FeatureLayout(tuple(ids))
        holdout_X = layout.encode_instances(dataset)
        holdout_y = np.array([int(x.label) for x in dataset], dtype=np.int64)
        population: tuple[OccupantParams, ...] = ()
    else:
        dataset = ()
        population = tuple(
            generate_population(settings.population.size, derive_seed(seed, POPULATION_STREAM), settings.population)
        )
        layout = FeatureLayout(tuple(o.id for o in population))
        holdout_X, holdout_y = _oracle_holdout(population, layout, weather, settings, seed)
    return Scenario(settings, seed, population, dataset, weather, layout, holdout_X, holdout_y)


class _Learner:
    """Comfort model and committee over an encoded copy of the labelled set.

    Rows are encoded once as labels arrive. The model is refit whenever the set
    grows, the committee at most every ``al.committee_refresh_steps`` control steps.
    """

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.model: Optional[ComfortModel] = None
        self._model_labels = -1
        self._committee: Optional[Committee] = None
        self._committee_labels = -1
        self._committee_step = -1
        self._metrics: dict[int, Metrics] = {}
        self._X = np.zeros((0, scenario.layout.n_features))
        self._y = np.zeros(0, dtype=np.int64)

    def _sync(self, labels: Sequence[LabeledInstance]) -> tuple[np.ndarray, np.ndarray]:
        fresh = labels[len(self._y):]
        if fresh:
            self._X = np.vstack([self._X, self.scenario.layout.encode_instances(fresh)])
            self._y = np.concatenate([self._y, instance_labels(fresh)])
        return self._X, self._y

    def model_for(self, labels: Sequence[LabeledInstance]) -> ComfortModel:
        if len(labels) != self._model_labels:
            X, y = self._sync(labels)
            self.model = fit_comfort_model(X, y, self.scenario.layout, self.scenario.settings.model, self.scenario.seed)
            self._model_labels = len(labels)
        return self.model

    def committee_for(self, labels: Sequence[LabeledInstance], control_index: int) -> Committee:
        settings = self.scenario.settings
        stale = len(labels) != self._committee_labels
        due = self._committee is None or control_index - self._committee_step >= settings.al.committee_refresh_steps
        if stale and due:
            X, y = self._sync(labels)
            self._committee = committee_from_matrix(
                X,
                y,
                settings.al.committee_size,
                derive_seed(self.scenario.seed, COMMITTEE_STREAM, len(labels)),
                self.scenario.layout,
                settings.model,
            )
            self._committee_labels = len(labels)
            self._committee_step = control_index
        return self._committee

    def metrics(self) -> Metrics:
        if self._model_labels not in self._metrics:
            self._metrics[self._model_labels] = self.model.evaluate(self.scenario.holdout_X, self.scenario.holdout_y)
        return self._metrics[self._model_labels]


def _answer(scenario: Scenario, candidate: Candidate, step: int) -> LabeledInstance:
    if scenario.replay:
        return candidate
    occupant = scenario.population[scenario.layout.index_of(candidate.occupant_id)]
    rng = derive_rng(scenario.seed, LABEL_STREAM, step, candidate.occupant_id)
    return candidate.with_label(sample_label(occupant, candidate.env, rng))


def _baseline_result(scenario: Scenario) -> RunResult:
    settings = scenario.settings
    run = settings.run
    steps_per_day = 1440 // run.step_minutes
    zone_records = run_baseline(
        scenario.weather,
        settings.zone,
        fixed_setpoint=run.baseline_setpoint,
        air_speed=run.baseline_air_speed,
        horizon_steps=run.horizon_days * steps_per_day,
        dt_minutes=run.step_minutes,
        initial_temp=run.initial_setpoint,
    )
    accepted = math.nan
    if not scenario.replay:
        accepted = oracle_acceptability(scenario.population, run.baseline_setpoint, run.baseline_air_speed)
    records = tuple(
        StepRecord(
            step=z.step,
            time_min=z.time_min,
            strategy=Strategy.BASELINE.value,
            setpoint=z.setpoint,
            zone_temp=z.zone_temp,
            q_cool=z.q_cool,
            district_kwh=z.energy.district_kwh,
            fan_kwh=z.energy.fan_kwh,
            pump_kwh=z.energy.pump_kwh,
            outdoor_temp=z.outdoor_temp,
            outdoor_rh=z.outdoor_rh,
            air_speed=z.air_speed,
            occupied=z.occupied,
            airflow=supply_airflow(z.q_cool, settings.zone),
            oracle_acceptability=accepted if z.occupied else math.nan,
        )
        for z in zone_records
    )
    return RunResult(Strategy.BASELINE, scenario.seed, run.step_minutes, records, replay=scenario.replay)


def run_simulation(
    settings: Settings,
    strategy: Strategy,
    seed: int,
    scenario: Optional[Scenario] = None,
    random_fraction: Optional[float] = None,
    record_profiles: bool = False,
) -> RunResult:
    """Simulate one strategy over the configured horizon.

    At every occupied control step: sample candidates near the current indoor
    condition, choose which to label, retrain on all labels, predict every
    occupant's comfort profile, aggregate a setpoint and advance the zone.
    Unoccupied steps hold the last setpoint.

    Args:
        settings: Validated settings
        strategy: Which labelling strategy drives the loop
        seed: Master seed; all random streams derive from it
        scenario: Prebuilt scenario shared between strategies of one seed
        random_fraction: Label probability per candidate for the random strategy
        record_profiles: Keep per-occupant profiles every ``run.profile_every`` control steps

    Returns:
        RunResult with one record per zone step
    """
    strategy = Strategy(strategy)
    scenario = scenario or build_scenario(settings, seed)
    if scenario.settings is not settings and scenario.settings != settings:
        raise InputError("scenario was built from different settings")
    if strategy is Strategy.BASELINE:
        return _baseline_result(scenario)

    run = settings.run
    grid = settings.grid
    fraction = run.random_fraction if random_fraction is None else random_fraction
    policy = settings.al.selection_policy()
    horizon = run.horizon_days * (1440 // run.step_minutes)

    candidate_rng = derive_rng(seed, CANDIDATE_STREAM)
    random_rng = derive_rng(seed, RANDOM_STREAM)
    learner = _Learner(scenario)

    state = ZoneState(zone_temp=run.initial_setpoint)
    setpoint = run.initial_setpoint
    labels: list[LabeledInstance] = []
    records: list[StepRecord] = []
    curve: list[CurvePoint] = []
    profiles_out: list[tuple[int, pd.DataFrame]] = []
    n_candidates = 0
    control_index = 0
    was_cold = True

    for step in range(horizon):
        t = step * run.step_minutes
        point = scenario.weather.point(t)
        occupied = settings.zone.is_occupied(t)
        extra: dict = {}

        if occupied:
            env = EnvState(
                indoor_temp=min(max(state.zone_temp, 20.0), 35.0),
                air_speed=run.air_speed,
                outdoor_temp=point.outdoor_temp,
                outdoor_rh=point.outdoor_rh,
            )
            candidates = nearest_instances(scenario.pool, env, run.candidates_per_step, candidate_rng, timestep=step)
            cold = is_cold_start(labels, settings.al)
            if cold or strategy is Strategy.CONVENTIONAL:
                selected = list(candidates)
            elif strategy is Strategy.AL:
                selected = select_informative(learner.committee_for(labels, control_index), candidates, policy)
            else:
                selected = select_random(candidates, fraction, random_rng)
            labels.extend(_answer(scenario, c, step) for c in selected)
            n_candidates += len(candidates)

            context = ProfileContext(air_speed=run.air_speed, outdoor_temp=point.outdoor_temp, outdoor_rh=point.outdoor_rh)
            agreement = 0
            model_accept = math.nan
            macro_f1 = math.nan
            if control_index > 0 and not is_cold_start(labels, settings.al):
                if was_cold:
                    logger.info("%s: cold start over after %d labels (step %d)", strategy.value, len(labels), step)
                    was_cold = False
                model = learner.model_for(labels)
                profiles = generate_profiles(model, scenario.occupant_ids, context, grid)
                decision = aggregate_setpoint(profiles, grid, previous=setpoint)
                setpoint, agreement = decision.setpoint, decision.agreement_count
                if grid.contains(setpoint):
                    model_accept = acceptability(profiles, setpoint)
                else:
                    model_accept = model_acceptability(model, scenario.occupant_ids, context, setpoint)
                if record_profiles and control_index % run.profile_every == 0:
                    profiles_out.append((step, profile_frame(profiles)))
                if control_index % run.eval_every == 0:
                    metrics = learner.metrics()
                    macro_f1 = metrics.macro_f1
                    curve.append(CurvePoint(control_index, len(labels), metrics.macro_f1, metrics.accuracy))
            else:
                setpoint = run.initial_setpoint

            extra = dict(
                cold_start=cold,
                candidate_ids=tuple(c.occupant_id for c in candidates),
                queried_ids=tuple(c.occupant_id for c in selected),
                agreement=agreement,
                model_acceptability=model_accept,
                oracle_acceptability=(
                    math.nan if scenario.replay else oracle_acceptability(scenario.population, setpoint, run.air_speed)
                ),
                macro_f1=macro_f1,
            )
            control_index += 1

        next_state, q_cool, energy = zone_step(state, setpoint, point, settings.zone, run.step_minutes)
        records.append(
            StepRecord(
                step=step,
                time_min=t,
                strategy=strategy.value,
                setpoint=setpoint,
                zone_temp=next_state.zone_temp,
                q_cool=q_cool,
                district_kwh=energy.district_kwh,
                fan_kwh=energy.fan_kwh,
                pump_kwh=energy.pump_kwh,
                outdoor_temp=point.outdoor_temp,
                outdoor_rh=point.outdoor_rh,
                air_speed=run.air_speed,
                occupied=occupied,
                airflow=supply_airflow(q_cool, settings.zone),
                cumulative_labels=len(labels),
                **extra,
            )
        )
        state = next_state

    final_metrics = None
    if learner.model is not None:
        learner.model_for(labels)
        final_metrics = learner.metrics()
        if not curve or curve[-1].labels != len(labels):
            curve.append(CurvePoint(control_index, len(labels), final_metrics.macro_f1, final_metrics.accuracy))

    result = RunResult(
        strategy=strategy,
        seed=seed,
        step_minutes=run.step_minutes,
        records=tuple(records),
        labels=tuple(labels),
        n_candidates_total=n_candidates,
        curve=tuple(curve),
        final_metrics=final_metrics,
        final_model=learner.model,
        profiles=tuple(profiles_out),
        replay=scenario.replay,
    )
    logger.info(
        "%s (seed %d): %.2f kWh, %d/%d labels, final setpoint %.1f °C",
        strategy.value,
        seed,
        result.total_kwh,
        len(labels),
        n_candidates,
        setpoint,
    )
    return result


def detect_convergence(series_a, series_b, window_days: float, steps_per_day: int = 1) -> Optional[int]:
    """Earliest step from which both setpoint series agree through the end.

    The agreeing tail must span at least ``window_days * steps_per_day`` steps.
    """
    a = np.asarray(series_a, dtype=float)
    b = np.asarray(series_b, dtype=float)
    if a.shape != b.shape:
        raise InputError(f"series lengths differ: {a.shape} vs {b.shape}")
    window = max(1, int(math.ceil(window_days * steps_per_day)))
    apart = np.nonzero(np.abs(a - b) > CONVERGENCE_TOLERANCE)[0]
    start = int(apart[-1]) + 1 if len(apart) else 0
    return start if len(a) - start >= window else None


def selection_fraction(result: RunResult) -> float:
    """Share of candidates labelled once the cold start was over."""
    warm = [r for r in result.records if r.occupied and not r.cold_start]
    offered = sum(len(r.candidate_ids) for r in warm)
    if offered == 0:
        return 1.0
    return sum(len(r.queried_ids) for r in warm) / offered


class StrategySummary(BaseModel):
    strategy: str
    seed: int
    total_kwh: float
    district_kwh: float
    fan_kwh: float
    pump_kwh: float
    reduction_vs_baseline_pct: float
    saving_vs_conventional_pct: Optional[float] = None
    acceptability_model_before: Optional[float] = None
    acceptability_model_after: Optional[float] = None
    acceptability_oracle_before: Optional[float] = None
    acceptability_oracle_after: Optional[float] = None
    n_labels: int = 0
    n_candidates: int = 0
    labelling_effort: Optional[float] = None
    effort_reduction_vs_conventional_pct: Optional[float] = None
    final_macro_f1: Optional[float] = None
    convergence_step: Optional[int] = None
    post_convergence_kwh: Optional[float] = None
    mean_post_convergence_setpoint: Optional[float] = None
    effort_to_match: Optional[float] = None
    annual_kwh_extrapolated: Optional[float] = None


class Summary(BaseModel):
    seed: int
    convergence_step: Optional[int] = None
    rows: list[StrategySummary]

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame([r.model_dump() for r in self.rows], columns=list(StrategySummary.model_fields))

    def row(self, strategy: Strategy) -> Optional[StrategySummary]:
        return next((r for r in self.rows if r.strategy == Strategy(strategy).value), None)


def _mean(values) -> Optional[float]:
    values = [v for v in values if not math.isnan(v)]
    return float(np.mean(values)) if values else None


def _finite(value: Optional[float]) -> Optional[float]:
    return None if value is None or math.isnan(value) else float(value)


def effort_to_match(
    curve: Sequence[CurvePoint], target_f1: float, conventional_labels: int, tolerance: float = 0.01
) -> Optional[float]:
    """Labels needed to reach ``target_f1 - tolerance``, relative to the conventional label count."""
    if conventional_labels <= 0:
        return None
    reached = [p.labels for p in curve if p.macro_f1 >= target_f1 - tolerance]
    return min(reached) / conventional_labels if reached else None


def metrics_summary(
    results: Mapping[Strategy, RunResult],
    baseline: RunResult,
    window_days: float = 3.0,
    match_tolerance: float = 0.01,
    annualize: bool = False,
) -> Summary:
    """Energy, acceptability and labelling metrics per strategy relative to the baseline.

    Acceptability is averaged over occupied steps before and after the step at
    which AL and conventional setpoints converge.
    """
    runs = {Strategy(k): v for k, v in results.items()}
    runs.setdefault(Strategy.BASELINE, baseline)
    horizon = len(baseline.records)
    for strategy, result in runs.items():
        if len(result.records) != horizon or result.step_minutes != baseline.step_minutes:
            raise InputError(f"{strategy.value} covers a different horizon than the baseline")

    steps_per_day = 1440 // baseline.step_minutes
    convergence = None
    al, conv = runs.get(Strategy.AL), runs.get(Strategy.CONVENTIONAL)
    if al is not None and conv is not None:
        convergence = detect_convergence(al.setpoints, conv.setpoints, window_days, steps_per_day)
        if convergence is not None:
            logger.info("Setpoints converged at step %d", convergence)

    base_total = baseline.total_kwh
    conv_total = conv.total_kwh if conv is not None else None
    conv_effort = conv.labelling_effort if conv is not None else math.nan
    conv_f1 = conv.final_metrics.macro_f1 if conv is not None and conv.final_metrics else None
    horizon_days = horizon / steps_per_day

    rows = []
    for strategy in Strategy:
        result = runs.get(strategy)
        if result is None:
            continue
        occupied = [r for r in result.records if r.occupied]
        split = convergence if convergence is not None else horizon
        before = [r for r in occupied if r.step < split]
        after = [r for r in occupied if r.step >= split]
        total = result.total_kwh
        effort = result.labelling_effort

        row = StrategySummary(
            strategy=strategy.value,
            seed=result.seed,
            total_kwh=total,
            district_kwh=float(sum(r.district_kwh for r in result.records)),
            fan_kwh=float(sum(r.fan_kwh for r in result.records)),
            pump_kwh=float(sum(r.pump_kwh for r in result.records)),
            reduction_vs_baseline_pct=(base_total - total) / base_total * 100.0 if base_total > 0 else 0.0,
            saving_vs_conventional_pct=(
                (conv_total - total) / conv_total * 100.0 if conv_total else None
            ),
            acceptability_model_before=_mean(r.model_acceptability for r in before),
            acceptability_model_after=_mean(r.model_acceptability for r in after),
            acceptability_oracle_before=_mean(r.oracle_acceptability for r in before),
            acceptability_oracle_after=_mean(r.oracle_acceptability for r in after),
            n_labels=len(result.labels),
            n_candidates=result.n_candidates_total,
            labelling_effort=_finite(effort),
            effort_reduction_vs_conventional_pct=(
                _finite((1.0 - effort / conv_effort) * 100.0) if conv_effort and not math.isnan(conv_effort) else None
            ),
            final_macro_f1=result.final_metrics.macro_f1 if result.final_metrics else None,
            convergence_step=convergence,
            post_convergence_kwh=(
                float(sum(r.total_kwh for r in result.records[convergence:])) if convergence is not None else None
            ),
            mean_post_convergence_setpoint=_mean(r.setpoint for r in after) if convergence is not None else None,
            effort_to_match=(
                effort_to_match(result.curve, conv_f1, len(conv.labels), match_tolerance)
                if conv_f1 is not None and strategy in (Strategy.AL, Strategy.RANDOM)
                else None
            ),
            annual_kwh_extrapolated=total * 365.0 / horizon_days if annualize else None,
        )
        rows.append(row)
    return Summary(seed=baseline.seed, convergence_step=convergence, rows=rows)


@dataclass(frozen=True, eq=False)
class Comparison:
    results: dict[Strategy, RunResult]
    summary: Summary


def run_comparison(settings: Settings, seed: int, workers: int = 1, record_profiles: bool = False) -> Comparison:
    """All four strategies on one shared scenario and candidate stream.

    The random strategy runs last with its label probability matched to the
    fraction AL actually labelled after the cold start.
    """
    scenario = build_scenario(settings, seed)

    def simulate(strategy: Strategy, fraction: Optional[float] = None) -> RunResult:
        return run_simulation(settings, strategy, seed, scenario, fraction, record_profiles)

    first = [Strategy.AL, Strategy.CONVENTIONAL, Strategy.BASELINE]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = dict(zip(first, pool.map(simulate, first)))
    else:
        results = {s: simulate(s) for s in first}

    fraction = selection_fraction(results[Strategy.AL])
    logger.info("Random strategy matched to AL label fraction %.3f", fraction)
    results[Strategy.RANDOM] = simulate(Strategy.RANDOM, fraction)

    summary = metrics_summary(
        results,
        results[Strategy.BASELINE],
        settings.run.convergence_window_days,
        settings.run.match_tolerance,
        settings.run.annualize,
    )
    for strategy in (Strategy.AL, Strategy.CONVENTIONAL):
        results[strategy] = dataclasses.replace(results[strategy], convergence_step=summary.convergence_step)
    return Comparison(results=results, summary=summary)


def seeds_frame(comparisons: Sequence[Comparison]) -> pd.DataFrame:
    """Summary rows of several seeds stacked, for ``summary_seeds.csv``."""
    return pd.concat([c.summary.frame() for c in comparisons], ignore_index=True)
