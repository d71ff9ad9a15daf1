"""Single-zone 1R1C thermal model with a VAV cooling energy breakdown."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.errors import InputError
from app.weather import WeatherPoint, WeatherSeries

logger = logging.getLogger(__name__)

AIR_DENSITY = 1.2  # kg/m3
AIR_HEAT_CAPACITY = 1006.0  # J/(kg K)
MINUTES_PER_DAY = 1440


class ZoneParams(BaseModel):
    """Zone envelope, internal gains and plant sizing."""

    capacitance: float = Field(default=5.0e6, gt=0.0, description="Thermal capacitance C (J/K)")
    ua: float = Field(default=120.0, gt=0.0, description="Envelope conductance UA (W/K)")
    q_int_occupied: float = Field(default=900.0, gt=0.0, description="Internal gains while occupied (W)")
    q_int_unoccupied: float = Field(default=100.0, gt=0.0, description="Internal gains otherwise (W)")
    q_max: float = Field(default=6000.0, gt=0.0, description="Cooling capacity (W)")
    supply_delta_t: float = Field(default=8.0, gt=0.0, description="Supply air temperature difference (K)")
    q_nom: float = Field(default=4000.0, gt=0.0, description="Nominal thermal load for fan and pump (W)")
    p_fan_nom: float = Field(default=400.0, gt=0.0, description="AHU fan power at nominal load (W)")
    p_pump_nom: float = Field(default=150.0, gt=0.0, description="Chilled-water pump power at nominal load (W)")
    cop_eff: float = Field(default=4.0, gt=0.0, description="District plant performance factor")
    occupied_start_hour: float = Field(default=8.0, ge=0.0, lt=24.0, description="Start of occupied hours")
    occupied_end_hour: float = Field(default=18.0, gt=0.0, le=24.0, description="End of occupied hours")
    design_outdoor_temp: float = Field(default=34.0, description="Design outdoor temperature (°C)")
    design_indoor_temp: float = Field(default=24.0, description="Design indoor temperature (°C)")

    @model_validator(mode="after")
    def _check_sizing(self) -> "ZoneParams":
        if self.occupied_end_hour <= self.occupied_start_hour:
            raise ValueError("occupied hours must end after they start")
        peak = self.ua * (self.design_outdoor_temp - self.design_indoor_temp) + max(
            self.q_int_occupied, self.q_int_unoccupied
        )
        if self.q_max < peak:
            raise ValueError(f"q_max {self.q_max} W is below the design peak load {peak:.0f} W")
        return self

    def is_occupied(self, time_min: float) -> bool:
        """Weekday office hours; the simulation starts on a Monday at midnight."""
        day = int(time_min // MINUTES_PER_DAY)
        hour = (time_min % MINUTES_PER_DAY) / 60.0
        return day % 7 < 5 and self.occupied_start_hour <= hour < self.occupied_end_hour

    def internal_gains(self, time_min: float) -> float:
        return self.q_int_occupied if self.is_occupied(time_min) else self.q_int_unoccupied


class ZoneState(BaseModel):
    model_config = ConfigDict(frozen=True)

    zone_temp: float = Field(allow_inf_nan=False, description="Zone air temperature (°C)")
    time_min: float = Field(default=0.0, ge=0.0, description="Minutes since simulation start")


class EnergyBreakdown(BaseModel):
    model_config = ConfigDict(frozen=True)

    district_kwh: float = Field(default=0.0, ge=0.0)
    fan_kwh: float = Field(default=0.0, ge=0.0)
    pump_kwh: float = Field(default=0.0, ge=0.0)

    @property
    def total_kwh(self) -> float:
        return self.district_kwh + self.fan_kwh + self.pump_kwh

    def __add__(self, other: "EnergyBreakdown") -> "EnergyBreakdown":
        return EnergyBreakdown(
            district_kwh=self.district_kwh + other.district_kwh,
            fan_kwh=self.fan_kwh + other.fan_kwh,
            pump_kwh=self.pump_kwh + other.pump_kwh,
        )


def cooling_energy(q_cool: float, params: ZoneParams, dt_minutes: float) -> EnergyBreakdown:
    """District, fan (cubic affinity law) and pump energy for a constant load over ``dt``."""
    dt_hours = dt_minutes / 60.0
    load = q_cool / params.q_nom
    return EnergyBreakdown(
        district_kwh=q_cool * dt_hours / params.cop_eff / 1000.0,
        fan_kwh=params.p_fan_nom * load**3 * dt_hours / 1000.0,
        pump_kwh=params.p_pump_nom * load * dt_hours / 1000.0,
    )


def supply_airflow(q_cool: float, params: ZoneParams) -> float:
    """Supply air volume flow (m3/s) delivering ``q_cool`` at the design supply delta-T."""
    return q_cool / (AIR_DENSITY * AIR_HEAT_CAPACITY * params.supply_delta_t)


def zone_step(
    state: ZoneState,
    setpoint: float,
    weather: Union[WeatherPoint, float],
    params: ZoneParams,
    dt_minutes: float,
    q_int: Optional[float] = None,
) -> tuple[ZoneState, float, EnergyBreakdown]:
    """Advance the zone by ``dt`` under an ideal cooling controller.

    The controller applies the constant cooling power that lands the zone
    exactly on ``setpoint`` at the end of the step, clamped to ``[0, q_max]``;
    the temperature update is the exact solution of
    ``C dT/dt = UA (T_out - T) + Q_int - Q_cool``.

    Args:
        state: Zone state at the start of the step
        setpoint: Cooling setpoint (°C)
        weather: Outdoor conditions (or outdoor temperature) held over the step
        params: Zone parameters
        dt_minutes: Step length
        q_int: Internal gains; the occupancy schedule is used when omitted

    Returns:
        (next state, applied cooling power in W, energy used during the step)
    """
    if dt_minutes <= 0:
        raise InputError(f"dt must be positive, got {dt_minutes}")
    t_out = weather.outdoor_temp if isinstance(weather, WeatherPoint) else float(weather)
    gains = params.internal_gains(state.time_min) if q_int is None else q_int

    decay = math.exp(-dt_minutes * 60.0 * params.ua / params.capacitance)
    # Equilibrium temperature whose exponential approach passes through the setpoint at step end.
    target_eq = setpoint + (setpoint - state.zone_temp) * decay / (1.0 - decay)
    q_cool = min(max(gains + params.ua * (t_out - target_eq), 0.0), params.q_max)

    t_eq = t_out + (gains - q_cool) / params.ua
    next_temp = t_eq + (state.zone_temp - t_eq) * decay
    next_state = ZoneState(zone_temp=next_temp, time_min=state.time_min + dt_minutes)
    return next_state, q_cool, cooling_energy(q_cool, params, dt_minutes)


@dataclass(frozen=True)
class ZoneRecord:
    step: int
    time_min: float
    setpoint: float
    zone_temp: float
    q_cool: float
    energy: EnergyBreakdown
    outdoor_temp: float
    outdoor_rh: float
    air_speed: float
    occupied: bool


def run_baseline(
    weather: WeatherSeries,
    params: ZoneParams,
    fixed_setpoint: float = 27.0,
    air_speed: float = 0.94,
    horizon_steps: int = 56 * 48,
    dt_minutes: float = 30.0,
    initial_temp: Optional[float] = None,
) -> list[ZoneRecord]:
    """Fixed-setpoint operation; ``air_speed`` is carried along for acceptability scoring.

    Each record holds the zone temperature reached at the end of its step.
    """
    if horizon_steps < 1:
        raise InputError(f"horizon must be at least one step, got {horizon_steps}")
    state = ZoneState(zone_temp=fixed_setpoint if initial_temp is None else initial_temp)
    records = []
    for step in range(horizon_steps):
        t = step * dt_minutes
        point = weather.point(t)
        occupied = params.is_occupied(t)
        state, q_cool, energy = zone_step(state, fixed_setpoint, point, params, dt_minutes)
        records.append(
            ZoneRecord(
                step=step,
                time_min=t,
                setpoint=fixed_setpoint,
                zone_temp=state.zone_temp,
                q_cool=q_cool,
                energy=energy,
                outdoor_temp=point.outdoor_temp,
                outdoor_rh=point.outdoor_rh,
                air_speed=air_speed,
                occupied=occupied,
            )
        )
    logger.info(
        "Baseline at %.1f °C: %.2f kWh over %d steps",
        fixed_setpoint,
        sum(r.energy.total_kwh for r in records),
        horizon_steps,
    )
    return records
