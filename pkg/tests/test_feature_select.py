import logging

import numpy as np
import pandas as pd
import pytest

from app.errors import ConfigError, DegenerateDatasetError, InputError
from app.feature_select import (
    FeatureTable,
    feature_report,
    impurity_importance,
    load_feature_table,
    report_frame,
    rfecv_rank,
    select_top_features,
)
from app.gbt import BoostingParams
from tests.conftest import make_instance

PARAMS = BoostingParams(rounds=5)


def separable_table(n=60, seed=0):
    """``a`` and its copy separate the two classes; ``noise`` does not."""
    rng = np.random.default_rng(seed)
    y = np.repeat([0, 2], n // 2)
    a = np.where(y == 0, -1.0 - rng.uniform(0, 1, n), 1.0 + rng.uniform(0, 1, n))
    frame = pd.DataFrame({"a": a, "a_copy": a, "noise": rng.normal(0, 1, n)})
    return FeatureTable.from_frame(frame, y)


def test_categorical_columns_become_one_feature_group():
    frame = pd.DataFrame({"occupant_id": [3, 1, 3, 2], "indoor_temp": [25.0, 26.0, 27.0, 28.0]})
    table = FeatureTable.from_frame(frame, [0, 1, 2, 1], categorical=("occupant_id",))
    assert table.features == ("occupant_id", "indoor_temp")
    assert table.columns == ((0, 1, 2), (3,))
    assert table.X.shape == (4, 4)
    np.testing.assert_array_equal(table.X[:, :3].sum(axis=1), 1.0)


def test_subset_reorders_groups_and_rows():
    table = separable_table()
    sub = table.subset(["noise", "a"], rows=np.arange(10))
    assert sub.features == ("noise", "a")
    assert sub.columns == ((0,), (1,))
    np.testing.assert_array_equal(sub.X[:, 1], table.X[:10, 0])
    with pytest.raises(InputError):
        table.subset(["missing"])


def test_importance_is_normalized_and_goes_to_the_separating_column():
    importance = impurity_importance(separable_table(), params=PARAMS)
    assert sum(importance.values()) == pytest.approx(1.0)
    assert importance["a"] == pytest.approx(1.0)
    assert importance["noise"] == 0.0


def test_single_class_dataset_is_degenerate():
    table = FeatureTable.from_frame(pd.DataFrame({"x": [1.0, 2.0, 3.0]}), [1, 1, 1])
    with pytest.raises(DegenerateDatasetError):
        impurity_importance(table)
    with pytest.raises(DegenerateDatasetError):
        rfecv_rank(table, k_folds=2)


def test_constant_features_get_uniform_importance(caplog):
    table = FeatureTable.from_frame(pd.DataFrame({"x": [1.0] * 6, "z": [2.0] * 6}), [0, 2, 0, 2, 0, 2])
    with caplog.at_level(logging.WARNING):
        importance = impurity_importance(table, params=PARAMS)
    assert importance == {"x": 0.5, "z": 0.5}
    assert "uniform" in caplog.text


def test_elimination_keeps_the_first_of_duplicate_columns():
    ranks = rfecv_rank(separable_table(), k_folds=3, params=PARAMS, seed=1)
    assert ranks == {"a": 1.0, "a_copy": 2.0, "noise": 3.0}


def test_parallel_folds_match_sequential():
    table = separable_table(seed=4)
    assert rfecv_rank(table, k_folds=3, params=PARAMS, workers=3) == rfecv_rank(table, k_folds=3, params=PARAMS)


def test_fold_count_is_validated():
    table = separable_table(n=4)
    with pytest.raises(ConfigError):
        rfecv_rank(table, k_folds=1)
    with pytest.raises(InputError):
        rfecv_rank(table, k_folds=5)


def test_top_features_break_rank_ties_by_importance_then_name():
    ranks = {"b": 1.5, "a": 1.5, "c": 1.5, "d": 1.0}
    importances = {"b": 0.3, "a": 0.3, "c": 0.4, "d": 0.0}
    assert select_top_features(ranks, importances, 4) == ["d", "c", "a", "b"]
    assert select_top_features(ranks, importances, 2) == ["d", "c"]


def test_top_features_do_not_depend_on_input_order():
    ranks = {"indoor": 1.0, "speed": 2.0, "outdoor": 2.0, "rh": 3.5, "id": 3.5, "noise": 5.0}
    importances = {"indoor": 0.4, "speed": 0.2, "outdoor": 0.2, "rh": 0.1, "id": 0.1, "noise": 0.0}
    expected = select_top_features(ranks, importances, 6)
    assert expected == ["indoor", "outdoor", "speed", "id", "rh", "noise"]
    rng = np.random.default_rng(2)
    names = list(ranks)
    for _ in range(10):
        order = [names[i] for i in rng.permutation(len(names))]
        shuffled_ranks = {name: ranks[name] for name in order}
        shuffled_importances = {name: importances[name] for name in reversed(order)}
        assert select_top_features(shuffled_ranks, shuffled_importances, 6) == expected
        assert select_top_features(shuffled_ranks, shuffled_importances, 3) == expected[:3]


def test_top_features_validate_inputs():
    with pytest.raises(InputError):
        select_top_features({"a": 1.0}, {"b": 1.0}, 1)
    with pytest.raises(InputError):
        select_top_features({"a": 1.0}, {"a": 1.0}, 2)


def test_report_from_dataset_file(tmp_path):
    rng = np.random.default_rng(0)
    rows = []
    for t in range(60):
        indoor = 24.0 + 4.0 * (t % 20) / 19
        label = 2 if indoor < 25.5 else 0 if indoor > 26.5 else 1
        rows.append(make_instance(t % 3, indoor, label=label, timestep=t))
    frame = pd.DataFrame(
        {
            "timestep": [x.timestep for x in rows],
            "occupant_id": [x.occupant_id for x in rows],
            "indoor_temp_c": [x.env.indoor_temp for x in rows],
            "air_speed_ms": [x.env.air_speed for x in rows],
            "outdoor_temp_c": [x.env.outdoor_temp for x in rows],
            "outdoor_rh_pct": [x.env.outdoor_rh for x in rows],
            "label": [x.label.token for x in rows],
            "co2_ppm": rng.normal(650, 100, len(rows)),
        }
    )
    path = tmp_path / "data.csv"
    frame.to_csv(path, index=False)

    table = load_feature_table(path)
    assert set(table.features) == {"occupant_id", "indoor_temp", "air_speed", "outdoor_temp", "outdoor_rh", "co2_ppm"}

    report = feature_report(table, k_folds=3, params=PARAMS)
    assert report[0].feature_name == "indoor_temp"
    assert [r.mean_rank for r in report] == sorted(r.mean_rank for r in report)
    out = report_frame(report)
    assert list(out.columns) == ["feature_name", "mean_rank", "importance"]
    assert out["importance"].sum() == pytest.approx(1.0)
