import numpy as np
import pytest
from pydantic import ValidationError

from app.comfort_model import train_comfort_model
from app.errors import InputError
from app.gbt import BoostingParams
from app.occupants import OccupantParams
from app.profiles import (
    PROFILE_COLUMNS,
    ComfortProfile,
    ProfileContext,
    TempGrid,
    acceptability,
    aggregate_setpoint,
    comfort_mask,
    generate_profile,
    generate_profiles,
    model_acceptability,
    oracle_acceptability,
    profile_frame,
)

GRID = TempGrid()
COMFORT = [0.1, 0.8, 0.1]
HOT = [0.7, 0.2, 0.1]


def profile(occupant_id, comfortable_temps, grid=GRID):
    """Profile that is comfortable exactly at ``comfortable_temps``."""
    temps = grid.points()
    proba = np.array([COMFORT if np.any(np.isclose(t, comfortable_temps)) else HOT for t in temps])
    return ComfortProfile(occupant_id, temps, proba)


def test_default_grid():
    points = GRID.points()
    assert GRID.n_points == 36
    assert points[0] == 24.5 and points[-1] == 28.0
    assert GRID.midpoint == pytest.approx(26.3)
    assert GRID.contains(26.3)
    assert not GRID.contains(26.35)


@pytest.mark.parametrize("lo, hi, step", [(28.0, 24.5, 0.1), (24.5, 28.0, 0.3)])
def test_invalid_grid_is_rejected(lo, hi, step):
    with pytest.raises(ValidationError):
        TempGrid(lo=lo, hi=hi, step=step)


def test_comfort_mask_requires_strict_majority_of_no_change():
    proba = np.array([[0.2, 0.6, 0.2], [0.4, 0.4, 0.2], [0.1, 0.3, 0.6]])
    assert comfort_mask(proba).tolist() == [True, False, False]


def test_setpoint_is_highest_temperature_with_greatest_agreement():
    profiles = [
        profile(0, [25.0, 25.1, 25.2]),
        profile(1, [25.1, 25.2, 25.3]),
        profile(2, [27.0]),
    ]
    decision = aggregate_setpoint(profiles, GRID)
    assert decision.setpoint == pytest.approx(25.2)
    assert decision.agreement_count == 2
    assert not decision.fallback
    assert len(decision.histogram) == GRID.n_points


def test_no_comfortable_occupant_holds_previous_setpoint():
    profiles = [profile(0, []), profile(1, [])]
    held = aggregate_setpoint(profiles, GRID, previous=24.0)
    assert held.fallback and held.setpoint == 24.0 and held.agreement_count == 0
    assert aggregate_setpoint(profiles, GRID).setpoint == pytest.approx(26.3)


def test_setpoint_does_not_depend_on_profile_order():
    profiles = [
        profile(0, [25.0, 25.1, 25.2]),
        profile(1, [25.1, 25.2, 25.3, 27.0]),
        profile(2, [27.0, 27.1]),
        profile(3, [25.2, 27.0]),
    ]
    expected = aggregate_setpoint(profiles, GRID, previous=24.0)
    rng = np.random.default_rng(0)
    for _ in range(10):
        order = rng.permutation(len(profiles))
        decision = aggregate_setpoint([profiles[i] for i in order], GRID, previous=24.0)
        assert decision.setpoint == expected.setpoint
        assert decision.agreement_count == expected.agreement_count


def test_occupant_without_a_comfortable_temperature_changes_nothing():
    profiles = [profile(0, [25.0, 25.1, 25.2]), profile(1, [25.1, 25.2, 25.3]), profile(2, [27.0])]
    before = aggregate_setpoint(profiles, GRID, previous=24.0)
    after = aggregate_setpoint(profiles + [profile(3, [])], GRID, previous=24.0)
    assert after.setpoint == before.setpoint
    assert after.agreement_count == before.agreement_count
    assert after.histogram == before.histogram


def test_aggregate_rejects_empty_profiles():
    with pytest.raises(InputError):
        aggregate_setpoint([], GRID)


def test_acceptability_counts_occupants_comfortable_at_setpoint():
    profiles = [profile(0, [25.0, 25.5]), profile(1, [25.5]), profile(2, [27.0]), profile(3, [])]
    assert acceptability(profiles, 25.5) == 0.5
    assert acceptability(profiles, 27.0) == 0.25
    assert acceptability(profiles, 24.5) == 0.0


def test_acceptability_rejects_off_grid_setpoint():
    with pytest.raises(InputError):
        acceptability([profile(0, [25.0])], 25.05)


def test_oracle_acceptability_of_a_tolerant_occupant():
    occ = OccupantParams(id=0, neutral_temp=26.0, slope=2.0, band_halfwidth=1.0, airspeed_gain=0.0)
    assert oracle_acceptability([occ], 26.0, 0.1) == 1.0
    assert oracle_acceptability([occ], 31.0, 0.1) == 0.0


def test_profiles_from_a_trained_model(labelled_instances, layout, population):
    model = train_comfort_model(labelled_instances, layout, BoostingParams(rounds=15))
    context = ProfileContext(air_speed=0.3, outdoor_temp=28.0, outdoor_rh=70.0)
    ids = [o.id for o in population[:3]]
    profiles = generate_profiles(model, ids, context, GRID)
    assert [p.occupant_id for p in profiles] == ids
    assert profiles[0].proba.shape == (GRID.n_points, 3)
    single = generate_profile(model, ids[1], context, GRID)
    np.testing.assert_allclose(single.proba, profiles[1].proba)

    # Labels favour NoChange between roughly 25.3 and 26.7.
    comfort = np.concatenate([p.comfort_set for p in profiles])
    assert len(comfort) > 0
    assert 25.0 <= comfort.mean() <= 27.0

    decision = aggregate_setpoint(profiles, GRID)
    assert acceptability(profiles, decision.setpoint) == pytest.approx(decision.agreement_count / 3)
    assert model_acceptability(model, ids, context, decision.setpoint) == pytest.approx(
        acceptability(profiles, decision.setpoint)
    )


def test_profile_frame_has_one_row_per_occupant_and_temperature():
    frame = profile_frame([profile(0, [25.0]), profile(1, [])])
    assert list(frame.columns) == PROFILE_COLUMNS
    assert len(frame) == 2 * GRID.n_points
    assert frame["comfortable"].sum() == 1
