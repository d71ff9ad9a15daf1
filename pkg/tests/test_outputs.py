import json
from xml.etree import ElementTree

import pandas as pd
import pytest

from app.config import load_settings
from app.control import Strategy, run_simulation
from app.errors import OutputError
from app.outputs import OutputFlags, emit_outputs, render_setpoint_chart, replot, write_run_outputs
from app.profiles import PROFILE_COLUMNS
from tests.conftest import SMALL_OVERRIDES

SVG = "{http://www.w3.org/2000/svg}"


@pytest.fixture
def results_dir(tmp_path, small_comparison):
    results = list(small_comparison.results.values())
    emit_outputs(results, tmp_path, small_comparison.summary, OutputFlags(dump_model=True))
    return tmp_path


def test_results_directory_layout(results_dir):
    names = {p.name for p in results_dir.iterdir()}
    for strategy in ("al", "conventional", "baseline", "random"):
        assert f"steps_{strategy}.csv" in names
        assert f"control_{strategy}.csv" in names
    for strategy in ("al", "conventional", "random"):
        assert f"labels_{strategy}.csv" in names
        assert f"curve_{strategy}.csv" in names
        assert f"model_{strategy}.json" in names
    assert "labels_baseline.csv" not in names
    assert {"weekly.csv", "summary.csv", "setpoints.svg", "weekly_energy.svg", "learning_curve.svg"} <= names


def test_csv_contents(results_dir, small_comparison):
    steps = pd.read_csv(results_dir / "steps_al.csv")
    assert len(steps) == len(small_comparison.results[Strategy.AL].records)
    summary = pd.read_csv(results_dir / "summary.csv")
    assert summary["strategy"].tolist() == ["al", "conventional", "baseline", "random"]
    weekly = pd.read_csv(results_dir / "weekly.csv")
    assert set(weekly["strategy"]) == {"al", "conventional", "baseline", "random"}
    model = json.loads((results_dir / "model_al.json").read_text())
    assert len(model["base_score"]) == 3


def test_charts_tag_every_series(results_dir):
    setpoints = (results_dir / "setpoints.svg").read_text()
    for strategy in ("al", "conventional", "baseline", "random"):
        assert f'id="setpoint-{strategy}"' in setpoints
    curves = (results_dir / "learning_curve.svg").read_text()
    assert 'id="curve-al"' in curves and 'id="curve-baseline"' not in curves
    energy = (results_dir / "weekly_energy.svg").read_text()
    assert 'id="energy-baseline-fan_kwh-w1"' in energy


def test_chart_rendering_is_byte_stable(tmp_path, small_comparison):
    steps = {s.value: r.steps_frame() for s, r in small_comparison.results.items()}
    a = render_setpoint_chart(steps, tmp_path / "a.svg").read_bytes()
    b = render_setpoint_chart(steps, tmp_path / "b.svg").read_bytes()
    assert a == b


def path_vertices(group):
    d = next(group.iter(f"{SVG}path")).get("d")
    return [token for token in d.split() if token in ("M", "L")]


def test_each_setpoint_group_holds_one_step_path(tmp_path):
    steps = {
        "al": pd.DataFrame({"time_min": [0.0, 30.0, 60.0, 90.0], "setpoint_c": [24.0, 24.0, 26.3, 26.5]}),
        "baseline": pd.DataFrame({"time_min": [0.0, 30.0, 60.0, 90.0], "setpoint_c": [27.0] * 4}),
    }
    root = ElementTree.parse(render_setpoint_chart(steps, tmp_path / "setpoints.svg")).getroot()
    groups = {g.get("id"): g for g in root.iter(f"{SVG}g") if (g.get("id") or "").startswith("setpoint-")}
    assert set(groups) == {"setpoint-al", "setpoint-baseline"}
    for group in groups.values():
        paths = list(group.iter(f"{SVG}path"))
        assert len(paths) == 1
        assert paths[0].get("d").lstrip().startswith("M")
    # A held setpoint is a single horizontal run; a changing one needs risers.
    assert len(path_vertices(groups["setpoint-al"])) > len(path_vertices(groups["setpoint-baseline"]))


def test_replot_rebuilds_the_charts(results_dir):
    (results_dir / "setpoints.svg").unlink()
    written = replot(results_dir)
    assert {p.name for p in written} == {"setpoints.svg", "weekly_energy.svg", "learning_curve.svg"}
    assert (results_dir / "setpoints.svg").exists()


def test_replot_needs_step_files(tmp_path):
    with pytest.raises(OutputError):
        replot(tmp_path)


def test_profiles_are_skipped_when_not_recorded(tmp_path, small_comparison):
    result = small_comparison.results[Strategy.CONVENTIONAL]
    written = write_run_outputs(result, tmp_path, OutputFlags(dump_profiles=True))
    assert not any("profiles" in p.parts for p in written)
    assert not (tmp_path / "model_conventional.json").exists()


def test_recorded_profiles_are_dumped(tmp_path):
    settings = load_settings(overrides={**SMALL_OVERRIDES, "run.horizon_days": "1", "run.profile_every": "5"})
    result = run_simulation(settings, Strategy.CONVENTIONAL, 3, record_profiles=True)
    written = write_run_outputs(result, tmp_path, OutputFlags(dump_profiles=True))
    dumped = sorted((tmp_path / "profiles" / "conventional").glob("step_*.csv"))
    assert len(dumped) == len(result.profiles)
    assert set(dumped) <= set(written)
    if dumped:
        frame = pd.read_csv(dumped[0])
        assert list(frame.columns) == PROFILE_COLUMNS
        assert len(frame) == settings.population.size * settings.grid.n_points


def test_unwritable_directory_raises_output_error(tmp_path, small_comparison):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(OutputError):
        write_run_outputs(small_comparison.results[Strategy.BASELINE], blocker / "out")
