import io

import pandas as pd
import pytest

from app.cli import main, parse_args
from app.occupants import load_dataset_csv
from tests.conftest import SMALL_OVERRIDES

SETS = [arg for key, value in {**SMALL_OVERRIDES, "run.horizon_days": "1"}.items() for arg in ("--set", f"{key}={value}")]


def test_help_lists_config_keys(capsys):
    with pytest.raises(SystemExit):
        parse_args(["--help"])
    assert "run.horizon_days" in capsys.readouterr().out


def test_gen_data_then_select_features(tmp_path, capsys):
    data = tmp_path / "campaign.csv"
    assert main(["gen-data", "--out", str(data), "--n", "12", "--days", "3", "--seed", "4", "--extra-sensors"]) == 0
    instances = load_dataset_csv(data)
    assert len(instances) == 12 * 20
    assert "co2_ppm" in pd.read_csv(data).columns

    capsys.readouterr()
    code = main(["select-features", "--data", str(data), "--folds", "2", "--top", "3", "--set", "model.rounds=5"])
    assert code == 0
    report = pd.read_csv(io.StringIO(capsys.readouterr().out))
    assert list(report.columns) == ["feature_name", "mean_rank", "importance", "selected"]
    assert len(report) == 10
    assert report["selected"].sum() == 3
    assert report["mean_rank"].is_monotonic_increasing


def test_run_writes_a_results_directory(tmp_path):
    out = tmp_path / "run"
    assert main(["run", "--strategy", "random", "--seed", "1", "--out", str(out), "--dump-model", *SETS]) == 0
    assert (out / "steps_random.csv").exists()
    assert (out / "model_random.json").exists()
    assert (out / "setpoints.svg").exists()
    summary = pd.read_csv(out / "summary.csv")
    assert summary["strategy"].tolist() == ["baseline", "random"]
    assert summary["labelling_effort"].notna().tolist() == [False, True]
    assert not (out / "steps_baseline.csv").exists()


def test_compare_over_several_seeds(tmp_path):
    out = tmp_path / "cmp"
    assert main(["compare", "--seeds", "1", "2", "--out", str(out), *SETS]) == 0
    for seed in (1, 2):
        assert (out / f"seed_{seed}" / "summary.csv").exists()
    stacked = pd.read_csv(out / "summary_seeds.csv")
    assert len(stacked) == 8
    assert sorted(set(stacked["seed"])) == [1, 2]

    (out / "seed_1" / "weekly_energy.svg").unlink()
    assert main(["plot", "--in", str(out / "seed_1")]) == 0
    assert (out / "seed_1" / "weekly_energy.svg").exists()


def test_domain_errors_exit_with_status_two(tmp_path, capsys):
    assert main(["run", "--out", str(tmp_path), "--set", "run.unknown=1"]) == 2
    assert "unknown config key" in capsys.readouterr().err
    assert main(["plot", "--in", str(tmp_path / "empty")]) == 2
