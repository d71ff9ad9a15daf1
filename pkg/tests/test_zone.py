import math

import pytest
from pydantic import ValidationError

from app.errors import InputError
from app.weather import WeatherConfig, WeatherSeries, synth_weather
from app.zone import ZoneParams, ZoneState, cooling_energy, run_baseline, supply_airflow, zone_step

PARAMS = ZoneParams()


def test_steady_state_cooling_balances_the_heat_gains():
    params = ZoneParams(ua=100.0)
    state, q_cool, energy = zone_step(ZoneState(zone_temp=27.0), 27.0, 32.0, params, 30.0, q_int=500.0)
    assert q_cool == pytest.approx(1000.0)
    assert state.zone_temp == pytest.approx(27.0)
    assert state.time_min == 30.0
    assert energy.district_kwh == pytest.approx(0.125)


def test_unconstrained_step_lands_on_the_setpoint_for_any_step_length():
    start = ZoneState(zone_temp=25.3)
    whole, q_whole, _ = zone_step(start, 25.0, 30.0, PARAMS, 30.0, q_int=100.0)
    half, q_half, _ = zone_step(start, 25.0, 30.0, PARAMS, 15.0, q_int=100.0)
    second, _, _ = zone_step(half, 25.0, 30.0, PARAMS, 15.0, q_int=100.0)
    assert 0.0 < q_whole < PARAMS.q_max
    assert 0.0 < q_half < PARAMS.q_max
    assert whole.zone_temp == pytest.approx(25.0)
    assert second.zone_temp == pytest.approx(25.0)
    assert second.time_min == whole.time_min


def test_capacity_limit_leaves_the_zone_above_setpoint():
    params = ZoneParams(q_max=2100.0)
    state, q_cool, _ = zone_step(ZoneState(zone_temp=22.0), 22.0, 40.0, params, 30.0, q_int=900.0)
    assert q_cool == params.q_max
    assert state.zone_temp > 22.0


def test_no_cooling_when_the_zone_would_drift_below_setpoint():
    state, q_cool, energy = zone_step(ZoneState(zone_temp=27.0), 27.0, 20.0, PARAMS, 30.0, q_int=100.0)
    assert q_cool == 0.0
    assert energy.total_kwh == 0.0
    assert state.zone_temp < 27.0


@pytest.mark.parametrize(
    "setpoint, t_out, q_int",
    [(30.0, 22.0, 100.0), (33.0, 31.0, 900.0), (20.0, 38.0, 900.0)],
)
def test_saturated_steps_are_exact_for_any_step_length(setpoint, t_out, q_int):
    start = ZoneState(zone_temp=26.0)
    whole, q_whole, _ = zone_step(start, setpoint, t_out, PARAMS, 30.0, q_int=q_int)
    half, q_half, _ = zone_step(start, setpoint, t_out, PARAMS, 15.0, q_int=q_int)
    second, q_second, _ = zone_step(half, setpoint, t_out, PARAMS, 15.0, q_int=q_int)
    assert q_whole == q_half == q_second
    assert q_whole in (0.0, PARAMS.q_max)
    assert second.zone_temp == pytest.approx(whole.zone_temp, rel=1e-12)
    t_eq = t_out + (q_int - q_whole) / PARAMS.ua
    decay = math.exp(-30.0 * 60.0 * PARAMS.ua / PARAMS.capacitance)
    assert whole.zone_temp == pytest.approx(t_eq + (26.0 - t_eq) * decay, rel=1e-12)


def test_step_length_must_be_positive():
    with pytest.raises(InputError):
        zone_step(ZoneState(zone_temp=25.0), 25.0, 30.0, PARAMS, 0.0)


def test_energy_components_at_nominal_load():
    energy = cooling_energy(4000.0, PARAMS, 60.0)
    assert energy.district_kwh == pytest.approx(1.0)
    assert energy.fan_kwh == pytest.approx(0.4)
    assert energy.pump_kwh == pytest.approx(0.15)
    assert energy.total_kwh == pytest.approx(1.55)
    half = cooling_energy(2000.0, PARAMS, 60.0)
    assert half.fan_kwh == pytest.approx(0.05)
    assert (energy + half).district_kwh == pytest.approx(1.5)


def test_supply_airflow_scales_with_load():
    assert supply_airflow(0.0, PARAMS) == 0.0
    assert supply_airflow(2000.0, PARAMS) == pytest.approx(2 * supply_airflow(1000.0, PARAMS))


@pytest.mark.parametrize(
    "time_min, occupied",
    [(480, True), (1079, True), (1080, False), (479, False), (4 * 1440 + 600, True), (5 * 1440 + 600, False), (7 * 1440 + 600, True)],
)
def test_weekday_office_hours(time_min, occupied):
    assert PARAMS.is_occupied(time_min) is occupied
    assert PARAMS.internal_gains(time_min) == (900.0 if occupied else 100.0)


def test_undersized_plant_is_rejected():
    with pytest.raises(ValidationError):
        ZoneParams(q_max=1000.0)


def test_baseline_holds_the_fixed_setpoint():
    series = WeatherSeries.from_points(synth_weather(2, 30, seed=0, cfg=WeatherConfig()))
    records = run_baseline(series, PARAMS, fixed_setpoint=27.0, horizon_steps=96)
    assert len(records) == 96
    assert all(r.setpoint == 27.0 and r.air_speed == 0.94 for r in records)
    assert all(r.zone_temp <= 27.0 + 1e-9 for r in records)
    assert sum(r.occupied for r in records) == 2 * 20
    assert sum(r.energy.total_kwh for r in records) > 0.0
