"""Query-by-committee selection of informative candidates and labelling-effort accounting."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Literal, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.stats import entropy
from sklearn.utils import resample

from app import gbt
from app.comfort_model import ComfortModel, FeatureLayout, fit_comfort_model, instance_labels
from app.errors import ColdStartError, ConfigError, InputError, UndefinedEffortError
from app.gbt import BoostingParams
from app.occupants import Candidate, LabeledInstance

logger = logging.getLogger(__name__)

MAX_ENTROPY = math.log(gbt.N_CLASSES)


class SelectionPolicy(BaseModel):
    """``threshold`` selects entropy > theta; ``top_k`` selects the k most disputed."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["threshold", "top_k"] = "threshold"
    theta: float = 0.2
    k: int = 2


class ActiveLearningConfig(BaseModel):
    committee_size: int = Field(default=5, description="Committee members (m >= 2)")
    policy: Literal["threshold", "top_k"] = Field(default="threshold", description="Selection policy")
    theta: float = Field(default=0.2, description="Vote-entropy threshold (nats)")
    k: int = Field(default=2, description="Candidates per step under top_k")
    cold_start_min_labels: int = Field(default=12, ge=1, description="Labels required before the committee is used")
    cold_start_min_classes: int = Field(default=2, ge=1, le=3, description="Distinct classes required likewise")
    committee_refresh_steps: int = Field(
        default=5, ge=1, description="Control steps between committee rebuilds (1 rebuilds on every new label)"
    )

    def selection_policy(self) -> SelectionPolicy:
        return SelectionPolicy(kind=self.policy, theta=self.theta, k=self.k)


@dataclass(frozen=True, eq=False)
class Committee:
    members: tuple[ComfortModel, ...]
    seeds: tuple[int, ...]

    def __post_init__(self):
        if len(self.members) < 2:
            raise ConfigError(f"a committee needs at least 2 members, got {len(self.members)}")

    @property
    def size(self) -> int:
        return len(self.members)


class QueryDecision(BaseModel):
    model_config = ConfigDict(frozen=True)

    candidate: Candidate
    disagreement: float = Field(ge=0.0, le=MAX_ENTROPY + 1e-12, description="Vote entropy (nats)")
    selected: bool
    votes: tuple[int, int, int]


def member_seeds(seed: int, m: int) -> list[int]:
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(m)]


def build_committee(
    labelled: Sequence[LabeledInstance],
    m: int,
    seed: int,
    layout: FeatureLayout,
    params: Optional[BoostingParams] = None,
) -> Committee:
    """Train ``m`` members on same-size bootstrap resamples of the labelled set.

    Args:
        labelled: Every label collected so far
        m: Committee size
        seed: Master seed; member seeds are derived from it
        layout: Feature layout shared by all members
        params: Ensemble hyperparameters

    Returns:
        Committee, identical for identical inputs
    """
    if not labelled:
        raise ColdStartError("cannot build a committee without labelled instances")
    if m < 2:
        raise ConfigError(f"committee size must be at least 2, got {m}")
    return committee_from_matrix(
        layout.encode_instances(labelled), instance_labels(labelled), m, seed, layout, params
    )


def committee_from_matrix(
    X: np.ndarray,
    y: np.ndarray,
    m: int,
    seed: int,
    layout: FeatureLayout,
    params: Optional[BoostingParams] = None,
) -> Committee:
    """``build_committee`` over rows already encoded with ``layout``.

    Bootstraps row indices, which draws the same resamples as bootstrapping the
    instances themselves.
    """
    if len(y) == 0:
        raise ColdStartError("cannot build a committee without labelled instances")
    if m < 2:
        raise ConfigError(f"committee size must be at least 2, got {m}")
    seeds = member_seeds(seed, m)
    members = []
    for s in seeds:
        rows = resample(np.arange(len(y)), replace=True, n_samples=len(y), random_state=s)
        members.append(fit_comfort_model(X[rows], y[rows], layout, params, s))
    return Committee(tuple(members), tuple(seeds))


def vote_counts(committee: Committee, X) -> np.ndarray:
    """Votes per class for each row of ``X``, shape (n, 3)."""
    X = np.atleast_2d(X)
    counts = np.zeros((X.shape[0], gbt.N_CLASSES), dtype=np.int64)
    rows = np.arange(X.shape[0])
    for member in committee.members:
        counts[rows, gbt.labels_from_proba(member.predict_proba(X))] += 1
    return counts


def entropy_of_votes(counts) -> np.ndarray:
    """Vote entropy in nats; zero for unanimous rows."""
    counts = np.atleast_2d(np.asarray(counts, dtype=float))
    return np.clip(entropy(counts, axis=1), 0.0, MAX_ENTROPY)


def vote_entropy(committee: Committee, x) -> float:
    """Disagreement of the committee on one feature vector."""
    return float(entropy_of_votes(vote_counts(committee, x))[0])


def apply_policy(disagreement: np.ndarray, occupant_ids: Sequence[int], policy: SelectionPolicy) -> np.ndarray:
    """Boolean selection mask for candidates with the given disagreements."""
    disagreement = np.asarray(disagreement, dtype=float)
    n = len(disagreement)
    if n == 0:
        raise InputError("no candidates to select from")
    if policy.kind == "threshold":
        if policy.theta < 0:
            raise ConfigError(f"theta must be non-negative, got {policy.theta}")
        return disagreement > policy.theta
    if policy.k < 0 or policy.k > n:
        raise ConfigError(f"top_k needs 0 <= k <= {n}, got {policy.k}")
    order = sorted(range(n), key=lambda i: (-disagreement[i], occupant_ids[i]))
    mask = np.zeros(n, dtype=bool)
    mask[order[: policy.k]] = True
    return mask


def rank_candidates(committee: Committee, candidates: Sequence[Candidate], policy: SelectionPolicy) -> list[QueryDecision]:
    if not candidates:
        raise InputError("no candidates to select from")
    X = committee.members[0].layout.encode_instances(candidates)
    counts = vote_counts(committee, X)
    disagreement = entropy_of_votes(counts)
    mask = apply_policy(disagreement, [c.occupant_id for c in candidates], policy)
    return [
        QueryDecision(candidate=c, disagreement=float(d), selected=bool(s), votes=tuple(int(v) for v in votes))
        for c, d, s, votes in zip(candidates, disagreement, mask, counts)
    ]


def select_informative(committee: Committee, candidates: Sequence[Candidate], policy: SelectionPolicy) -> list[Candidate]:
    """Candidates the committee disagrees on enough to be worth a survey question."""
    decisions = rank_candidates(committee, candidates, policy)
    logger.debug("Disagreement %s", [round(d.disagreement, 3) for d in decisions])
    return [d.candidate for d in decisions if d.selected]


def select_random(candidates: Sequence[Candidate], fraction: float, rng: np.random.Generator) -> list[Candidate]:
    """Uniform subset whose size is Binomial(len(candidates), fraction)."""
    if not 0.0 <= fraction <= 1.0:
        raise ConfigError(f"random fraction must be within [0, 1], got {fraction}")
    n = int(rng.binomial(len(candidates), fraction))
    keep = sorted(int(i) for i in rng.choice(len(candidates), size=n, replace=False))
    return [candidates[i] for i in keep]


def is_cold_start(labelled: Sequence[LabeledInstance], cfg: ActiveLearningConfig) -> bool:
    classes = {x.label for x in labelled}
    return len(labelled) < cfg.cold_start_min_labels or len(classes) < cfg.cold_start_min_classes


def labelling_effort(n_labelled: int, n_candidates_total: int) -> float:
    if n_candidates_total <= 0:
        raise UndefinedEffortError("labelling effort is undefined without candidates")
    if not 0 <= n_labelled <= n_candidates_total:
        raise InputError(f"{n_labelled} labels out of {n_candidates_total} candidates")
    return n_labelled / n_candidates_total
