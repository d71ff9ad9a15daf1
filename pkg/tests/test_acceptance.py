"""End-to-end properties of the simulator.

Tests marked ``slow`` run the default eight-week configuration; run them with
``pytest -m slow``.
"""

import itertools
import math

import numpy as np
import pytest

from app import gbt
from app.active_learning import MAX_ENTROPY, entropy_of_votes
from app.config import load_settings
from app.control import Strategy, run_comparison, run_simulation
from app.gbt import BoostingParams
from app.occupants import generate_population
from app.outputs import write_run_outputs
from app.profiles import ComfortProfile, TempGrid, aggregate_setpoint, oracle_acceptability
from app.zone import ZoneParams, ZoneState, zone_step
from tests.conftest import SMALL_OVERRIDES


def enumerate_setpoint(proba_by_occupant, temps, previous):
    best_temp, best_count = None, 0
    for j, temp in enumerate(temps):
        count = 0
        for proba in proba_by_occupant:
            cooler, nochange, warmer = proba[j]
            if nochange > cooler and nochange > warmer:
                count += 1
        if count > 0 and count >= best_count:
            best_temp, best_count = temp, count
    return (previous, 0) if best_temp is None else (best_temp, best_count)


def test_setpoint_aggregation_matches_exhaustive_enumeration():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n_points = int(rng.integers(2, 11))
        grid = TempGrid(lo=25.0, hi=round(25.0 + 0.1 * (n_points - 1), 1), step=0.1)
        temps = grid.points()
        n_occ = int(rng.integers(1, 7))
        # Coarse probabilities so that ties between classes and temperatures occur.
        probas = [rng.integers(0, 4, (n_points, 3)).astype(float) + 1e-3 for _ in range(n_occ)]
        probas = [p / p.sum(axis=1, keepdims=True) for p in probas]
        profiles = [ComfortProfile(i, temps, p) for i, p in enumerate(probas)]

        decision = aggregate_setpoint(profiles, grid, previous=24.0)
        expected_temp, expected_count = enumerate_setpoint(probas, temps, 24.0)
        assert decision.setpoint == expected_temp
        assert decision.agreement_count == expected_count


def test_predicted_distributions_are_valid():
    rng = np.random.default_rng(1)
    X = rng.normal(0, 1, (300, 4))
    y = rng.integers(0, 3, 300)
    model = gbt.train(X, y, BoostingParams(rounds=10))
    proba = gbt.predict_proba(model, rng.normal(0, 3, (10_000, 4)))
    assert np.all(proba >= 0.0) and np.all(proba <= 1.0)
    np.testing.assert_allclose(proba.sum(axis=1), 1.0, atol=1e-12)


def test_training_loss_is_nonincreasing_on_random_datasets():
    rng = np.random.default_rng(2)
    for _ in range(50):
        n = int(rng.integers(5, 60))
        X = rng.normal(0, 1, (n, int(rng.integers(1, 5))))
        y = rng.integers(0, 3, n)
        losses = np.array(gbt.train(X, y, BoostingParams(rounds=8)).train_loss)
        assert np.all(np.diff(losses) <= 1e-12)


def test_gradient_matches_finite_differences_relatively():
    rng = np.random.default_rng(3)
    for _ in range(20):
        logits = rng.normal(0, 2, (1, 3))
        y = rng.integers(0, 3, 1)
        g, _ = gbt.multiclass_gradients(logits, y)
        for c in range(3):
            eps = 1e-7
            up, down = logits.copy(), logits.copy()
            up[0, c] += eps
            down[0, c] -= eps
            numeric = (gbt.multiclass_log_loss(up, y) - gbt.multiclass_log_loss(down, y)) / (2 * eps)
            assert g[0, c] == pytest.approx(numeric, rel=1e-5, abs=1e-7)


def test_vote_entropy_on_every_vote_multiset():
    for m in range(1, 7):
        for votes in itertools.product(range(m + 1), repeat=3):
            if sum(votes) != m:
                continue
            value = entropy_of_votes(votes)[0]
            assert 0.0 <= value <= MAX_ENTROPY + 1e-12
            if max(votes) == m:
                assert value == 0.0
            if votes == (2, 2, 2):
                assert value == pytest.approx(math.log(3))


def test_zone_steady_state_balance_is_exact():
    params = ZoneParams(ua=100.0)
    _, q_cool, energy = zone_step(ZoneState(zone_temp=27.0), 27.0, 32.0, params, 30.0, q_int=500.0)
    assert abs(q_cool - 1000.0) < 1e-9
    assert abs(energy.district_kwh - 0.125) < 1e-9


def test_higher_setpoints_never_cost_more_energy():
    rng = np.random.default_rng(4)
    params = ZoneParams()
    for _ in range(100):
        t_out = rng.uniform(24.0, 34.0)
        q_int = rng.uniform(100.0, 900.0)
        low, high = sorted(rng.uniform(23.0, 29.0, 2))
        _, _, e_low = zone_step(ZoneState(zone_temp=low), low, t_out, params, 30.0, q_int=q_int)
        _, _, e_high = zone_step(ZoneState(zone_temp=high), high, t_out, params, 30.0, q_int=q_int)
        assert e_high.total_kwh <= e_low.total_kwh + 1e-12


@pytest.mark.parametrize("seed", range(5))
def test_no_setpoint_satisfies_the_default_population(seed):
    settings = load_settings()
    population = generate_population(settings.population.size, seed, settings.population)
    best = max(oracle_acceptability(population, t, settings.run.air_speed) for t in np.arange(20.0, 32.05, 0.1))
    assert 0.4 < best < 0.85


def test_repeated_runs_write_identical_step_files(tmp_path):
    settings = load_settings(overrides={**SMALL_OVERRIDES, "run.horizon_days": "1"})
    first = write_run_outputs(run_simulation(settings, Strategy.AL, 11), tmp_path / "a")
    second = write_run_outputs(run_simulation(settings, Strategy.AL, 11), tmp_path / "b")
    for a, b in zip(first, second):
        assert a.name == b.name
        assert a.read_bytes() == b.read_bytes()


@pytest.fixture(scope="module")
def default_comparisons():
    settings = load_settings()
    return [run_comparison(settings, seed, workers=3) for seed in range(5)]


@pytest.mark.slow
def test_active_learning_saves_labels_without_losing_accuracy(default_comparisons):
    efforts, gaps = [], []
    for comparison in default_comparisons:
        al = comparison.results[Strategy.AL]
        conv = comparison.results[Strategy.CONVENTIONAL]
        efforts.append(al.labelling_effort)
        gaps.append(abs(al.final_metrics.macro_f1 - conv.final_metrics.macro_f1))
    assert np.mean(efforts) <= 0.85
    assert max(gaps) <= 0.05


@pytest.mark.slow
def test_converged_setpoints_use_matching_energy(default_comparisons):
    for comparison in default_comparisons:
        if comparison.summary.convergence_step is None:
            continue
        al = comparison.summary.row(Strategy.AL).post_convergence_kwh
        conv = comparison.summary.row(Strategy.CONVENTIONAL).post_convergence_kwh
        assert al == pytest.approx(conv, rel=1e-3)


@pytest.mark.slow
@pytest.mark.xfail(
    strict=False,
    reason="AL and conventional learn from different label sets and the argmax setpoint moves with the outdoor "
    "context every step, so agreement within 0.05 °C for three days is not reached on most default seeds",
)
def test_most_seeds_converge(default_comparisons):
    converged = [c for c in default_comparisons if c.summary.convergence_step is not None]
    assert len(converged) >= 4


def mean_oracle_acceptability(result):
    return float(np.nanmean([r.oracle_acceptability for r in result.records if r.occupied]))


@pytest.mark.slow
def test_occupant_centric_control_is_accepted_more_than_the_baseline(default_comparisons):
    for comparison in default_comparisons:
        baseline = mean_oracle_acceptability(comparison.results[Strategy.BASELINE])
        for strategy in (Strategy.AL, Strategy.CONVENTIONAL):
            assert mean_oracle_acceptability(comparison.results[strategy]) > baseline


@pytest.mark.slow
@pytest.mark.xfail(
    strict=True,
    reason="with the default population no single setpoint is acceptable to 95% of occupants; "
    "see test_no_setpoint_satisfies_the_default_population",
)
def test_occupants_accept_the_converged_setpoint(default_comparisons):
    accepted = [
        comparison.summary.row(strategy).acceptability_oracle_after
        for comparison in default_comparisons
        for strategy in (Strategy.AL, Strategy.CONVENTIONAL)
    ]
    assert all(value is not None and value >= 0.95 for value in accepted)


@pytest.mark.slow
def test_warmer_setpoints_beat_the_baseline(default_comparisons):
    for comparison in default_comparisons:
        for strategy in (Strategy.AL, Strategy.CONVENTIONAL):
            row = comparison.summary.row(strategy)
            if row.mean_post_convergence_setpoint is not None and row.mean_post_convergence_setpoint > 27.0:
                assert row.reduction_vs_baseline_pct > 0.0
