"""Personal comfort model: one boosted ensemble shared by all occupants.

Feature vectors hold an occupant one-hot block followed by the four thermal
features, so the occupant identifier takes part in every split search.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from app import gbt
from app.errors import LayoutError, TrainingError
from app.gbt import BoostedEnsemble, BoostingParams
from app.occupants import Candidate, EnvState, LabeledInstance

CONTINUOUS_FEATURES = ("indoor_temp", "air_speed", "outdoor_temp", "outdoor_rh")


@dataclass(frozen=True)
class FeatureLayout:
    occupant_ids: tuple[int, ...]

    @cached_property
    def _index(self) -> dict[int, int]:
        return {occ: i for i, occ in enumerate(self.occupant_ids)}

    @property
    def n_features(self) -> int:
        return len(self.occupant_ids) + len(CONTINUOUS_FEATURES)

    @property
    def feature_names(self) -> list[str]:
        return [f"occupant_{i}" for i in self.occupant_ids] + list(CONTINUOUS_FEATURES)

    def index_of(self, occupant_id: int) -> int:
        try:
            return self._index[int(occupant_id)]
        except KeyError:
            raise LayoutError(f"occupant {occupant_id} is not part of the model layout") from None

    def encode(self, occupant_ids, indoor_temp, air_speed, outdoor_temp, outdoor_rh) -> np.ndarray:
        """Feature matrix for aligned (broadcastable) arrays of occupants and conditions."""
        occupant_ids = np.atleast_1d(occupant_ids)
        columns = np.broadcast_arrays(
            occupant_ids,
            np.asarray(indoor_temp, dtype=float),
            np.asarray(air_speed, dtype=float),
            np.asarray(outdoor_temp, dtype=float),
            np.asarray(outdoor_rh, dtype=float),
        )
        n = columns[0].shape[0]
        n_occ = len(self.occupant_ids)
        X = np.zeros((n, self.n_features))
        X[np.arange(n), [self.index_of(i) for i in columns[0]]] = 1.0
        for j, col in enumerate(columns[1:]):
            X[:, n_occ + j] = col
        return X

    def encode_env(self, occupant_id: int, env: EnvState) -> np.ndarray:
        return self.encode([occupant_id], env.indoor_temp, env.air_speed, env.outdoor_temp, env.outdoor_rh)[0]

    def encode_instances(self, instances: Sequence[Candidate]) -> np.ndarray:
        if not instances:
            return np.zeros((0, self.n_features))
        return self.encode(
            [x.occupant_id for x in instances],
            [x.env.indoor_temp for x in instances],
            [x.env.air_speed for x in instances],
            [x.env.outdoor_temp for x in instances],
            [x.env.outdoor_rh for x in instances],
        )


def instance_labels(instances: Sequence[LabeledInstance]) -> np.ndarray:
    return np.array([int(x.label) for x in instances], dtype=np.int64)


@dataclass(frozen=True, eq=False)
class ComfortModel:
    ensemble: BoostedEnsemble
    layout: FeatureLayout

    def predict_proba(self, X) -> np.ndarray:
        return gbt.predict_proba(self.ensemble, X)

    def proba_for(self, candidates: Sequence[Candidate]) -> np.ndarray:
        return gbt.predict_proba(self.ensemble, self.layout.encode_instances(candidates))

    def labels_for(self, candidates: Sequence[Candidate]) -> np.ndarray:
        return gbt.labels_from_proba(self.proba_for(candidates))

    def evaluate(self, X, y) -> gbt.Metrics:
        return gbt.evaluate(self.ensemble, X, y)


def train_comfort_model(
    instances: Sequence[LabeledInstance],
    layout: FeatureLayout,
    params: Optional[BoostingParams] = None,
    seed: int = 0,
) -> ComfortModel:
    """Retrain from scratch on every label collected so far."""
    if not instances:
        raise TrainingError("no labelled instances to train on")
    return fit_comfort_model(layout.encode_instances(instances), instance_labels(instances), layout, params, seed)


def fit_comfort_model(
    X: np.ndarray,
    y: np.ndarray,
    layout: FeatureLayout,
    params: Optional[BoostingParams] = None,
    seed: int = 0,
) -> ComfortModel:
    """Same as ``train_comfort_model`` for rows already encoded with ``layout``."""
    if X.shape[1] != layout.n_features:
        raise LayoutError(f"expected {layout.n_features} feature columns, got {X.shape[1]}")
    return ComfortModel(gbt.train(X, y, params, seed), layout)
