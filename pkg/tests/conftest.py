import numpy as np
import pytest

from app.comfort_model import FeatureLayout
from app.config import Settings, load_settings
from app.control import run_comparison
from app.occupants import EnvState, LabeledInstance, OccupantParams, PreferenceLabel, generate_population

# Two simulated weekdays with a small population and light learners.
SMALL_OVERRIDES = {
    "population.size": "12",
    "run.horizon_days": "2",
    "run.holdout_size": "300",
    "run.eval_every": "5",
    "run.convergence_window_days": "0.25",
    "model.rounds": "10",
    "al.committee_size": "3",
}


@pytest.fixture
def small_settings() -> Settings:
    return load_settings(overrides=SMALL_OVERRIDES)


@pytest.fixture(scope="session")
def small_comparison():
    """All four strategies on the small scenario, computed once per session."""
    return run_comparison(load_settings(overrides=SMALL_OVERRIDES), seed=7)


@pytest.fixture
def population() -> list[OccupantParams]:
    return generate_population(8, seed=3)


@pytest.fixture
def layout(population) -> FeatureLayout:
    return FeatureLayout(tuple(o.id for o in population))


@pytest.fixture
def comfortable_occupant() -> OccupantParams:
    return OccupantParams(id=0, neutral_temp=26.5, slope=1.5, band_halfwidth=1.0, airspeed_gain=2.0)


def make_instance(occupant_id, indoor, speed=0.3, label=PreferenceLabel.NO_CHANGE, timestep=0, outdoor=28.0, rh=70.0):
    return LabeledInstance(
        occupant_id=occupant_id,
        env=EnvState(indoor_temp=indoor, air_speed=speed, outdoor_temp=outdoor, outdoor_rh=rh),
        timestep=timestep,
        label=label,
    )


@pytest.fixture
def labelled_instances(population) -> list[LabeledInstance]:
    """Noisy three-class labels driven by indoor temperature."""
    rng = np.random.default_rng(11)
    instances = []
    for t in range(120):
        indoor = float(rng.uniform(24.0, 28.0))
        noisy = indoor + rng.normal(0.0, 0.4)
        label = PreferenceLabel.WARMER if noisy < 25.3 else PreferenceLabel.COOLER if noisy > 26.7 else PreferenceLabel.NO_CHANGE
        instances.append(make_instance(population[t % len(population)].id, indoor, float(rng.uniform(0.1, 0.8)), label, t))
    return instances
