"""Offline feature selection: cross-validated recursive elimination plus impurity importance.

A *feature* may span several matrix columns (the occupant identifier is one-hot
encoded); its importance is the sum over its columns and it is eliminated as a
unit.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field
from sklearn.model_selection import StratifiedKFold

from app import gbt
from app.errors import ConfigError, DatasetParseError, DegenerateDatasetError, InputError
from app.gbt import BoostingParams
from app.occupants import DATASET_COLUMNS, load_dataset_csv

logger = logging.getLogger(__name__)

# Dataset column -> feature name for the thermal features.
THERMAL_FEATURES = {
    "indoor_temp_c": "indoor_temp",
    "air_speed_ms": "air_speed",
    "outdoor_temp_c": "outdoor_temp",
    "outdoor_rh_pct": "outdoor_rh",
}

OCCUPANT_FEATURE = "occupant_id"


class FeatureReport(BaseModel):
    feature_name: str
    mean_rank: float = Field(ge=1.0, description="1 = best, averaged over folds")
    importance: float = Field(ge=0.0, description="Normalized impurity importance")


@dataclass(frozen=True, eq=False)
class FeatureTable:
    """Design matrix with named (possibly multi-column) features."""

    X: np.ndarray
    y: np.ndarray
    features: tuple[str, ...]
    columns: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if self.X.shape[0] != self.y.shape[0]:
            raise InputError(f"{self.X.shape[0]} rows but {self.y.shape[0]} labels")
        if len(self.features) != len(self.columns):
            raise InputError("every feature needs its column group")

    @classmethod
    def from_frame(
        cls,
        frame: pd.DataFrame,
        y,
        categorical: Sequence[str] = (),
    ) -> "FeatureTable":
        """Numeric columns become one feature each; ``categorical`` columns are one-hot groups."""
        blocks, features, columns = [], [], []
        width = 0
        for name in frame.columns:
            if name in categorical:
                block = pd.get_dummies(frame[name], dtype=float).to_numpy()
            else:
                block = frame[[name]].to_numpy(dtype=float)
            blocks.append(block)
            features.append(str(name))
            columns.append(tuple(range(width, width + block.shape[1])))
            width += block.shape[1]
        X = np.hstack(blocks) if blocks else np.zeros((len(frame), 0))
        return cls(X, np.asarray(y, dtype=np.int64), tuple(features), tuple(columns))

    def subset(self, features: Sequence[str], rows: Optional[np.ndarray] = None) -> "FeatureTable":
        missing = [f for f in features if f not in self.features]
        if missing:
            raise InputError(f"unknown features {missing}")
        groups = [self.columns[self.features.index(f)] for f in features]
        cols = [c for g in groups for c in g]
        new_columns, start = [], 0
        for g in groups:
            new_columns.append(tuple(range(start, start + len(g))))
            start += len(g)
        X = self.X[:, cols]
        y = self.y
        if rows is not None:
            X, y = X[rows], y[rows]
        return FeatureTable(X, y, tuple(features), tuple(new_columns))

    def group_sum(self, per_column: np.ndarray) -> np.ndarray:
        return np.array([per_column[list(g)].sum() for g in self.columns])

    def group_max(self, per_column: np.ndarray) -> np.ndarray:
        return np.array([per_column[list(g)].max() if g else 0.0 for g in self.columns])


def load_feature_table(path: Union[str, Path]) -> FeatureTable:
    """Read a comfort dataset with any extra sensor columns as candidate features."""
    instances = load_dataset_csv(path)
    frame = pd.read_csv(path)
    extras = [c for c in frame.columns if c not in DATASET_COLUMNS]
    design = pd.DataFrame({OCCUPANT_FEATURE: frame[OCCUPANT_FEATURE].astype(int)})
    for column, feature in THERMAL_FEATURES.items():
        design[feature] = frame[column].astype(float)
    for column in extras:
        try:
            design[column] = pd.to_numeric(frame[column], errors="raise")
        except (ValueError, TypeError) as exc:
            raise DatasetParseError(f"extra column is not numeric: {exc}", column=column) from None
    y = np.array([int(x.label) for x in instances], dtype=np.int64)
    logger.info("Feature table: %d rows, features %s", len(y), list(design.columns))
    return FeatureTable.from_frame(design, y, categorical=(OCCUPANT_FEATURE,))


def _require_two_classes(y: np.ndarray) -> None:
    if len(np.unique(y)) < 2:
        raise DegenerateDatasetError("dataset contains a single class; impurity decrease is undefined")


def _raw_importance(table: FeatureTable, params: BoostingParams, seed: int) -> np.ndarray:
    model = gbt.train(table.X, table.y, params, seed)
    return table.group_sum(gbt.split_importance(model))


def _normalize(raw: np.ndarray) -> np.ndarray:
    total = raw.sum()
    if total <= 0.0:
        logger.warning("No split reduced impurity; assigning uniform importance")
        return np.full(len(raw), 1.0 / len(raw))
    return raw / total


def impurity_importance(
    table: FeatureTable,
    features: Optional[Sequence[str]] = None,
    params: Optional[BoostingParams] = None,
    seed: int = 0,
) -> dict[str, float]:
    """Normalized impurity importance of each feature from one trained ensemble.

    Args:
        table: Labelled design matrix
        features: Features to use (all when omitted)
        params: Ensemble hyperparameters
        seed: Training seed

    Returns:
        dict feature -> importance, summing to 1
    """
    if table.X.shape[0] == 0:
        raise InputError("dataset is empty")
    _require_two_classes(table.y)
    sub = table.subset(features or table.features)
    raw = _raw_importance(sub, params or BoostingParams(), seed)
    return dict(zip(sub.features, (float(v) for v in _normalize(raw))))


def _elimination_ranks(table: FeatureTable, params: BoostingParams, seed: int) -> dict[str, int]:
    """Drop the least important feature until one remains; the survivor ranks 1."""
    tiebreak = dict(zip(table.features, table.group_max(gbt.root_split_gains(table.X, table.y, params))))
    remaining = list(table.features)
    ranks: dict[str, int] = {}
    while len(remaining) > 1:
        current = table.subset(remaining)
        importance = dict(zip(remaining, _raw_importance(current, params, seed)))
        # lowest importance, then lowest root gain, then the lexicographically last name
        weakest = min((importance[f], tiebreak[f]) for f in remaining)
        victim = max(f for f in remaining if (importance[f], tiebreak[f]) == weakest)
        ranks[victim] = len(remaining)
        remaining.remove(victim)
    ranks[remaining[0]] = 1
    return ranks


def rfecv_rank(
    table: FeatureTable,
    features: Optional[Sequence[str]] = None,
    k_folds: int = 5,
    params: Optional[BoostingParams] = None,
    seed: int = 0,
    workers: int = 1,
) -> dict[str, float]:
    """Mean elimination rank of each feature over stratified folds."""
    if k_folds < 2:
        raise ConfigError(f"k_folds must be at least 2, got {k_folds}")
    if table.X.shape[0] < k_folds:
        raise InputError(f"dataset has {table.X.shape[0]} rows, fewer than {k_folds} folds")
    _require_two_classes(table.y)
    params = params or BoostingParams()
    sub = table.subset(features or table.features)
    if len(sub.features) == 1:
        return {sub.features[0]: 1.0}

    splitter = StratifiedKFold(n_splits=k_folds, shuffle=True, random_state=seed)
    fold_seeds = np.random.SeedSequence(seed).generate_state(k_folds)
    jobs = [
        (sub.subset(sub.features, rows=train_idx), int(fold_seed))
        for (train_idx, _), fold_seed in zip(splitter.split(sub.X, sub.y), fold_seeds)
    ]

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            fold_ranks = list(pool.map(lambda job: _elimination_ranks(job[0], params, job[1]), jobs))
    else:
        fold_ranks = [_elimination_ranks(fold, params, fold_seed) for fold, fold_seed in jobs]

    for i, ranks in enumerate(fold_ranks):
        logger.debug("Fold %d elimination ranks: %s", i, ranks)
    return {f: float(np.mean([ranks[f] for ranks in fold_ranks])) for f in sub.features}


def select_top_features(ranks: Mapping[str, float], importances: Mapping[str, float], n: int) -> list[str]:
    """Sort by mean rank, then descending importance, then name; keep the first ``n``."""
    if set(ranks) != set(importances):
        raise InputError("rank and importance tables cover different features")
    if n > len(ranks):
        raise InputError(f"cannot select {n} of {len(ranks)} features")
    ordered = sorted(ranks, key=lambda f: (ranks[f], -importances[f], f))
    return ordered[:n]


def feature_report(
    table: FeatureTable,
    k_folds: int = 5,
    params: Optional[BoostingParams] = None,
    seed: int = 0,
    workers: int = 1,
) -> list[FeatureReport]:
    """Full pipeline, rows ordered best first."""
    ranks = rfecv_rank(table, k_folds=k_folds, params=params, seed=seed, workers=workers)
    importances = impurity_importance(table, params=params, seed=seed)
    order = select_top_features(ranks, importances, len(ranks))
    return [FeatureReport(feature_name=f, mean_rank=ranks[f], importance=importances[f]) for f in order]


def report_frame(report: Sequence[FeatureReport]) -> pd.DataFrame:
    return pd.DataFrame([r.model_dump() for r in report], columns=list(FeatureReport.model_fields))
