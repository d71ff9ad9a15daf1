"""Gradient-boosted decision trees for three-class preference prediction.

Softmax objective, one regression tree per class per round, leaves set by a
second-order Newton step. Trees are grown level by level for all classes at
once and stored as complete binary arrays, so node ``i`` has children
``2i + 1`` (x <= threshold) and ``2i + 2``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field
from sklearn.metrics import accuracy_score, confusion_matrix, f1_score, log_loss

from app.errors import ShapeError, TrainingError
from app.occupants import PreferenceLabel

logger = logging.getLogger(__name__)

N_CLASSES = 3

# Step halvings tried before a round is reduced to a no-op.
MAX_HALVINGS = 30

# Split gains this close (relative) to the best count as tied.
GAIN_TIE_RTOL = 1e-9


class BoostingParams(BaseModel):
    """Hyperparameters of the boosted ensemble."""

    rounds: int = Field(default=50, ge=0, description="Boosting rounds")
    learning_rate: float = Field(default=0.3, gt=0.0, le=1.0, description="Shrinkage applied to each leaf")
    max_depth: int = Field(default=3, ge=1, le=8, description="Maximum tree depth")
    min_samples_leaf: int = Field(default=2, ge=1, description="Minimum training samples per leaf")
    l2_leaf_penalty: float = Field(default=1.0, ge=0.0, description="L2 penalty on leaf values (lambda)")
    max_bins: int = Field(
        default=64, ge=2, le=1024, description="Distinct values above which split candidates are quantiles"
    )


@dataclass(frozen=True, eq=False)
class BoostedEnsemble:
    """Trained ensemble; arrays are indexed (round, class, node)."""

    base_score: np.ndarray
    feature: np.ndarray
    threshold: np.ndarray
    value: np.ndarray
    gain: np.ndarray
    cover: np.ndarray
    n_features: int
    params: BoostingParams
    train_loss: tuple[float, ...] = ()
    n_train: int = 0

    @property
    def rounds(self) -> int:
        return self.feature.shape[0]


class Metrics(BaseModel):
    """Classification quality of a model on a labelled set."""

    accuracy: float
    macro_f1: float
    log_loss: float
    n: int
    confusion: list[list[int]] = Field(default_factory=list, description="Rows are true classes, columns predictions")


def softmax(logits) -> np.ndarray:
    """Max-shifted softmax over the last axis."""
    z = np.asarray(logits, dtype=float)
    shifted = np.exp(z - z.max(axis=-1, keepdims=True))
    return shifted / shifted.sum(axis=-1, keepdims=True)


def _mean_log_loss(logits: np.ndarray, y: np.ndarray) -> float:
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    return float(np.mean(log_norm - z[np.arange(len(y)), y]))


def multiclass_log_loss(logits, y) -> float:
    """Mean multiclass log-loss of raw scores ``logits`` (n, 3) against labels ``y``."""
    return _mean_log_loss(np.atleast_2d(np.asarray(logits, dtype=float)), np.asarray(y, dtype=int))


def multiclass_gradients(logits, y) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample gradient ``p - y`` and diagonal hessian ``p (1 - p)`` of the summed log-loss."""
    p = softmax(np.atleast_2d(logits))
    onehot = np.eye(N_CLASSES)[np.asarray(y, dtype=int)]
    return p - onehot, p * (1.0 - p)


def _first_best(gains: np.ndarray) -> np.ndarray:
    """Per row, the first candidate whose gain is within GAIN_TIE_RTOL of the row maximum.

    Candidates are ordered by (feature, threshold), so near-ties resolve to the
    lowest feature index and then the lowest threshold.
    """
    top = gains.max(axis=1, keepdims=True)
    return np.argmax(gains >= top - GAIN_TIE_RTOL * np.abs(top), axis=1)


def _candidate_cuts(column: np.ndarray, max_bins: int) -> np.ndarray:
    values = np.unique(column)
    if len(values) <= 1:
        return np.empty(0)
    if len(values) > max_bins:
        qs = np.quantile(column, np.linspace(0.0, 1.0, max_bins + 1)[1:-1])
        values = np.unique(np.concatenate([[values[0]], qs, [values[-1]]]))
    return (values[:-1] + values[1:]) / 2.0


class _SplitFinder:
    """Histogram statistics and split candidates for one training matrix."""

    def __init__(self, X: np.ndarray, params: BoostingParams):
        self.X = X
        self.params = params
        n, d = X.shape

        cont_cols, bin_cols, cuts = [], [], []
        for j in range(d):
            col = X[:, j]
            values = np.unique(col)
            if len(values) == 2 and values[0] == 0.0 and values[1] == 1.0:
                bin_cols.append(j)
            else:
                c = _candidate_cuts(col, params.max_bins)
                if len(c):
                    cont_cols.append(j)
                    cuts.append(c)

        self.cont_cols = np.array(cont_cols, dtype=np.int64)
        self.bin_cols = np.array(bin_cols, dtype=np.int64)
        self.n_bin = len(bin_cols)
        hit_row, hit_col = np.nonzero(X[:, self.bin_cols]) if len(bin_cols) else (np.zeros(0, np.int64),) * 2
        self._hit_cols = hit_col.astype(np.int64)
        self._hit_count = np.bincount(hit_row, minlength=n)
        self._hit_ptr = np.cumsum(self._hit_count) - self._hit_count

        nbins = np.array([len(c) + 1 for c in cuts], dtype=np.int64)
        self.nbins = nbins
        self.offsets = np.concatenate([[0], np.cumsum(nbins)[:-1]]).astype(np.int64) if len(cuts) else np.zeros(0, np.int64)
        self.total_bins = int(nbins.sum()) if len(cuts) else 0
        if len(cuts):
            self.codes = np.stack([np.searchsorted(c, X[:, j], side="left") for j, c in zip(cont_cols, cuts)], axis=1)
        else:
            self.codes = np.zeros((n, 0), dtype=np.int64)

        # Candidate list: continuous cuts first, binary columns after; ``order`` sorts by (column, threshold).
        cand_col, cand_thr = [], []
        for j, c in zip(cont_cols, cuts):
            cand_col.extend([j] * len(c))
            cand_thr.extend(c)
        n_cont = len(cand_col)
        for j in bin_cols:
            cand_col.append(j)
            cand_thr.append(0.5)
        self.n_cont_cands = n_cont
        cand_col = np.array(cand_col, dtype=np.int64)
        cand_thr = np.array(cand_thr, dtype=float)
        self.order = np.lexsort((cand_thr, cand_col))
        self.cand_col = cand_col[self.order]
        self.cand_thr = cand_thr[self.order]

    @property
    def n_candidates(self) -> int:
        return len(self.cand_col)

    def _binary_hits(self, rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(pair index, binary column) of every 1 in the given rows, in row order."""
        counts = self._hit_count[rows]
        pair = np.repeat(np.arange(len(rows)), counts)
        within = np.arange(int(counts.sum())) - np.repeat(np.cumsum(counts) - counts, counts)
        return pair, self._hit_cols[self._hit_ptr[rows][pair] + within]

    def _left_stats(
        self, rows: np.ndarray, grp: np.ndarray, weights: np.ndarray, n_groups: int, totals: np.ndarray
    ) -> np.ndarray:
        """Left-side sums of each weight row, per group and candidate: (stats, groups, candidates).

        Every column is accumulated on its own, in row order, so duplicated
        columns produce bit-identical statistics.
        """
        n_stats = weights.shape[0]
        stat = np.arange(n_stats)[:, None]
        parts = []
        if self.n_cont_cands:
            d_cont = self.codes.shape[1]
            size = n_groups * self.total_bins
            idx = (grp[:, None] * self.total_bins + self.offsets[None, :] + self.codes[rows]).ravel()
            hist = np.bincount(
                (stat * size + idx[None, :]).ravel(),
                weights=np.repeat(weights, d_cont, axis=1).ravel(),
                minlength=n_stats * size,
            ).reshape(n_stats, n_groups, self.total_bins)
            for ofs, nb in zip(self.offsets, self.nbins):
                parts.append(np.cumsum(hist[:, :, ofs : ofs + nb - 1], axis=2))
        if self.n_bin:
            pair, cols = self._binary_hits(rows)
            size = n_groups * self.n_bin
            idx = grp[pair] * self.n_bin + cols
            ones_side = np.bincount(
                (stat * size + idx[None, :]).ravel(),
                weights=weights[:, pair].ravel(),
                minlength=n_stats * size,
            ).reshape(n_stats, n_groups, self.n_bin)
            parts.append(totals[:, :, None] - ones_side)
        left = np.concatenate(parts, axis=2)
        return left[:, :, self.order]

    def _gains(self, rows, grp, gw, hw, n_groups):
        lam = self.params.l2_leaf_penalty
        Gt = np.bincount(grp, weights=gw, minlength=n_groups)
        Ht = np.bincount(grp, weights=hw, minlength=n_groups)
        Nt = np.bincount(grp, minlength=n_groups).astype(float)
        if self.n_candidates == 0:
            return Gt, Ht, Nt, None
        GL, HL, NL = self._left_stats(
            rows, grp, np.stack([gw, hw, np.ones_like(gw)]), n_groups, np.stack([Gt, Ht, Nt])
        )
        GR, HR, NR = Gt[:, None] - GL, Ht[:, None] - HL, Nt[:, None] - NL
        with np.errstate(divide="ignore", invalid="ignore"):
            gain = GL**2 / (HL + lam) + GR**2 / (HR + lam) - (Gt**2 / (Ht + lam))[:, None]
        msl = self.params.min_samples_leaf
        valid = (NL >= msl) & (NR >= msl) & np.isfinite(gain)
        return Gt, Ht, Nt, np.where(valid, gain, -np.inf)

    def grow(self, g: np.ndarray, h: np.ndarray, feature, threshold, value, gain, cover) -> np.ndarray:
        """Grow one tree per class into the given (class, node) arrays; return each pair's leaf node."""
        n, n_classes = g.shape
        lam = self.params.l2_leaf_penalty
        eta = self.params.learning_rate
        depth = self.params.max_depth
        node = np.zeros((n, n_classes), dtype=np.int64)
        active = np.ones((n, n_classes), dtype=bool)

        for level in range(depth + 1):
            rows, cls = np.nonzero(active)
            if len(rows) == 0:
                break
            first, width = 2**level - 1, 2**level
            n_groups = n_classes * width
            grp = cls * width + (node[rows, cls] - first)
            gw, hw = g[rows, cls], h[rows, cls]
            Gt, Ht, Nt, gains = self._gains(rows, grp, gw, hw, n_groups)

            present = np.nonzero(Nt > 0)[0]
            if gains is None or level == depth:
                splits = np.zeros(n_groups, dtype=bool)
                best = np.zeros(n_groups, dtype=np.int64)
            else:
                best = _first_best(gains)
                best_gain = gains[np.arange(n_groups), best]
                splits = best_gain > 0.0

            g_cls, g_nid = present // width, first + present % width
            is_split = splits[present]
            s_cls, s_nid, s_grp = g_cls[is_split], g_nid[is_split], present[is_split]
            feature[s_cls, s_nid] = self.cand_col[best[s_grp]]
            threshold[s_cls, s_nid] = self.cand_thr[best[s_grp]]
            gain[s_cls, s_nid] = gains[s_grp, best[s_grp]] if len(s_grp) else 0.0
            cover[s_cls, s_nid] = Nt[s_grp]

            l_cls, l_nid, l_grp = g_cls[~is_split], g_nid[~is_split], present[~is_split]
            denom = Ht[l_grp] + lam
            value[l_cls, l_nid] = np.where(denom > 0, -Gt[l_grp] / np.where(denom > 0, denom, 1.0), 0.0) * eta

            pair_split = splits[grp]
            active[rows[~pair_split], cls[~pair_split]] = False
            sr, sc, sg = rows[pair_split], cls[pair_split], grp[pair_split]
            if len(sr):
                col = self.cand_col[best[sg]]
                right = self.X[sr, col] > self.cand_thr[best[sg]]
                node[sr, sc] = 2 * node[sr, sc] + 1 + right
        return node

    def column_gains(self, g: np.ndarray, h: np.ndarray) -> np.ndarray:
        """Best root-split gain of every column, summed over the class trees."""
        n, n_classes = g.shape
        rows = np.repeat(np.arange(n), n_classes)
        cls = np.tile(np.arange(n_classes), n)
        _, _, _, gains = self._gains(rows, cls, g[rows, cls], h[rows, cls], n_classes)
        out = np.zeros(self.X.shape[1])
        if gains is None:
            return out
        per_col = np.full((n_classes, self.X.shape[1]), -np.inf)
        for c in range(n_classes):
            np.maximum.at(per_col[c], self.cand_col, gains[c])
        return np.clip(per_col, 0.0, None).sum(axis=0)


def _check_training_data(X, y) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise TrainingError("training data must be a non-empty 2-D matrix")
    if y.shape != (X.shape[0],):
        raise TrainingError(f"expected {X.shape[0]} labels, got shape {y.shape}")
    if y.min() < 0 or y.max() >= N_CLASSES:
        raise TrainingError("labels must be class indices 0, 1 or 2")
    if not np.all(np.isfinite(X)):
        raise TrainingError("training features must be finite")
    return X, y


def base_scores(y: np.ndarray) -> np.ndarray:
    """Laplace-smoothed log class frequencies."""
    counts = np.bincount(y, minlength=N_CLASSES).astype(float)
    return np.log((counts + 1.0) / (len(y) + N_CLASSES))


def train(X, y, params: Optional[BoostingParams] = None, seed: int = 0) -> BoostedEnsemble:
    """Fit the ensemble by stage-wise functional gradient descent.

    Training uses no randomness; ``seed`` is accepted so every learner in the
    package shares one signature.

    Args:
        X: Feature matrix (n, d)
        y: Class indices (n,)
        params: Hyperparameters
        seed: Unused

    Returns:
        BoostedEnsemble whose ``train_loss`` is nonincreasing
    """
    params = params or BoostingParams()
    X, y = _check_training_data(X, y)
    n, d = X.shape
    n_nodes = 2 ** (params.max_depth + 1) - 1
    shape = (params.rounds, N_CLASSES, n_nodes)
    feature = np.full(shape, -1, dtype=np.int64)
    threshold = np.zeros(shape)
    value = np.zeros(shape)
    gain = np.zeros(shape)
    cover = np.zeros(shape)

    base = base_scores(y)
    logits = np.tile(base, (n, 1))
    onehot = np.eye(N_CLASSES)[y]
    losses = [_mean_log_loss(logits, y)]
    finder = _SplitFinder(X, params)
    classes = np.arange(N_CLASSES)[None, :]

    for r in range(params.rounds):
        p = softmax(logits)
        leaf = finder.grow(p - onehot, p * (1.0 - p), feature[r], threshold[r], value[r], gain[r], cover[r])
        delta = value[r][classes, leaf]
        scale, loss = 1.0, _mean_log_loss(logits + delta, y)
        halvings = 0
        while loss > losses[-1] and halvings < MAX_HALVINGS:
            scale *= 0.5
            halvings += 1
            loss = _mean_log_loss(logits + scale * delta, y)
        if loss > losses[-1]:
            scale, loss = 0.0, losses[-1]
        if scale != 1.0:
            logger.debug("Round %d step scaled by %g", r, scale)
            value[r] *= scale
            delta = delta * scale
        logits = logits + delta
        losses.append(loss)

    return BoostedEnsemble(
        base_score=base,
        feature=feature,
        threshold=threshold,
        value=value,
        gain=gain,
        cover=cover,
        n_features=d,
        params=params,
        train_loss=tuple(losses),
        n_train=n,
    )


def raw_scores(model: BoostedEnsemble, X) -> np.ndarray:
    """Base score plus the summed tree outputs, shape (n, 3)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise ShapeError(f"model expects {model.n_features} features, got shape {X.shape}")
    n = X.shape[0]
    logits = np.tile(model.base_score, (n, 1))
    rounds, n_classes, n_nodes = model.feature.shape
    if rounds == 0 or n == 0:
        return logits

    n_trees = rounds * n_classes
    feat = model.feature.reshape(n_trees, n_nodes)
    thr = model.threshold.reshape(n_trees, n_nodes)
    val = model.value.reshape(n_trees, n_nodes)
    tree = np.arange(n_trees)[None, :]
    row = np.arange(n)[:, None]
    pos = np.zeros((n, n_trees), dtype=np.int64)
    for _ in range(model.params.max_depth):
        f = feat[tree, pos]
        internal = f >= 0
        x = X[row, np.where(internal, f, 0)]
        pos = np.where(internal, 2 * pos + 1 + (x > thr[tree, pos]), pos)
    return logits + val[tree, pos].reshape(n, rounds, n_classes).sum(axis=1)


def predict_proba(model: BoostedEnsemble, X) -> np.ndarray:
    """Class probabilities; a single feature vector yields a single triple."""
    single = np.ndim(X) == 1
    proba = softmax(raw_scores(model, X))
    return proba[0] if single else proba


def labels_from_proba(proba: np.ndarray) -> np.ndarray:
    """Argmax with ties resolved to NoChange first, then Cooler."""
    proba = np.atleast_2d(proba)
    top = proba.max(axis=1)
    return np.where(
        proba[:, PreferenceLabel.NO_CHANGE] >= top,
        PreferenceLabel.NO_CHANGE,
        np.where(proba[:, PreferenceLabel.COOLER] >= top, PreferenceLabel.COOLER, PreferenceLabel.WARMER),
    ).astype(np.int64)


def predict_labels(model: BoostedEnsemble, X) -> np.ndarray:
    return labels_from_proba(predict_proba(model, np.atleast_2d(X)))


def predict_label(model: BoostedEnsemble, x) -> PreferenceLabel:
    """Most probable preference for one feature vector."""
    return PreferenceLabel(int(predict_labels(model, x)[0]))


def classification_metrics(y_true, y_pred, proba) -> Metrics:
    """Accuracy, macro-F1 over classes seen in truth or predictions, and log-loss."""
    y_true = np.asarray(y_true, dtype=np.int64)
    return Metrics(
        accuracy=float(accuracy_score(y_true, y_pred)),
        macro_f1=float(f1_score(y_true, y_pred, average="macro", zero_division=0)),
        log_loss=float(log_loss(y_true, np.atleast_2d(proba), labels=list(range(N_CLASSES)))),
        n=len(y_true),
        confusion=confusion_matrix(y_true, y_pred, labels=list(range(N_CLASSES))).tolist(),
    )


def evaluate(model: BoostedEnsemble, X, y) -> Metrics:
    """Score the model on a non-empty test set."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] == 0:
        raise ShapeError("test set is empty")
    proba = predict_proba(model, X)
    return classification_metrics(y, labels_from_proba(proba), proba)


def split_importance(model: BoostedEnsemble) -> np.ndarray:
    """Impurity decrease per column, weighted by the share of samples each split sees.

    The impurity of a node is its second-order loss per sample, so a split with
    gain ``gain`` over ``cover`` samples contributes ``(cover / n) * (gain / cover)``.
    """
    mask = model.feature >= 0
    if not mask.any():
        return np.zeros(model.n_features)
    cover = model.cover[mask]
    per_sample = model.gain[mask] / cover
    weighted = (cover / model.n_train) * per_sample
    return np.bincount(model.feature[mask], weights=weighted, minlength=model.n_features)


def root_split_gains(X, y, params: Optional[BoostingParams] = None) -> np.ndarray:
    """Best first-split gain of each column at the base score (summed over classes)."""
    params = params or BoostingParams()
    X, y = _check_training_data(X, y)
    logits = np.tile(base_scores(y), (len(y), 1))
    g, h = multiclass_gradients(logits, y)
    return _SplitFinder(X, params).column_gains(g, h)


def dump_model(model: BoostedEnsemble, feature_names: Optional[Sequence[str]] = None) -> dict:
    """Tree listing for debugging; node ids follow the complete-binary layout."""

    def node_entry(r: int, c: int, i: int) -> dict:
        f = int(model.feature[r, c, i])
        if f < 0:
            return {"node": i, "leaf": float(model.value[r, c, i])}
        entry = {
            "node": i,
            "feature": f,
            "threshold": float(model.threshold[r, c, i]),
            "left": 2 * i + 1,
            "right": 2 * i + 2,
            "gain": float(model.gain[r, c, i]),
        }
        if feature_names is not None:
            entry["feature_name"] = feature_names[f]
        return entry

    rounds = []
    for r in range(model.rounds):
        trees = []
        for c in range(N_CLASSES):
            nodes, stack = [], [0]
            while stack:
                i = stack.pop()
                entry = node_entry(r, c, i)
                nodes.append(entry)
                if "leaf" not in entry:
                    stack.extend([2 * i + 2, 2 * i + 1])
            trees.append({"class": PreferenceLabel(c).token, "nodes": sorted(nodes, key=lambda e: e["node"])})
        rounds.append(trees)
    return {
        "base_score": [float(b) for b in model.base_score],
        "n_features": model.n_features,
        "params": model.params.model_dump(),
        "rounds": rounds,
    }
