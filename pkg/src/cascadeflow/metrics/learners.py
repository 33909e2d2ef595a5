"""Classifier-based scores: real-vs-synthetic detection and train-synthetic-test-real utility."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..data import CATEGORICAL, Dataset
from ..errors import SingleClassTarget
from .auc import auc_to_score, roc_auc
from .gbdt import LOGISTIC, SQUARED, Gbdt
from .univariate import check_compatible

ONE_HOT_LIMIT = 16
N_FOLDS = 5


@dataclass
class FeatureMap:
    """Column-wise encoding shared by every table scored together."""

    names: list[str]
    kinds: list[str]
    labels: list[list]  # categorical: sorted label union; numerical: []
    freqs: list[dict]  # high-cardinality categorical: label share
    one_hot_limit: int

    def transform(self, ds: Dataset) -> np.ndarray:
        blocks = []
        for name, kind, labs, fr in zip(self.names, self.kinds, self.labels, self.freqs):
            v = ds.column_values(name)
            if kind != CATEGORICAL:
                blocks.append(v.astype(float)[:, None])
            elif len(labs) < self.one_hot_limit:
                idx = {lab: k for k, lab in enumerate(labs)}
                block = np.zeros((len(v), len(labs)))
                block[np.arange(len(v)), [idx[x] for x in v]] = 1.0
                blocks.append(block)
            else:
                blocks.append(np.array([fr.get(x, 0.0) for x in v], dtype=float)[:, None])
        if not blocks:
            return np.zeros((len(ds), 0))
        return np.hstack(blocks)


def fit_feature_map(tables: list[Dataset], exclude: tuple[str, ...] = (),
                    one_hot_limit: int = ONE_HOT_LIMIT) -> FeatureMap:
    """Categorical columns below ``one_hot_limit`` labels are one-hot encoded, the rest
    replaced by the label's share of rows across ``tables``."""
    schema = tables[0].schema
    names, kinds, labels, freqs = [], [], [], []
    for col in schema.columns:
        if col.name in exclude:
            continue
        names.append(col.name)
        kinds.append(col.kind)
        if col.kind == CATEGORICAL:
            vals = np.concatenate([t.column_values(col.name) for t in tables])
            labs, counts = np.unique(vals.astype(str), return_counts=True)
            labels.append(list(labs))
            freqs.append(dict(zip(labs, counts / counts.sum())) if len(labs) >= one_hot_limit else {})
        else:
            labels.append([])
            freqs.append({})
    return FeatureMap(names, kinds, labels, freqs, one_hot_limit)


def canonical_order(X: np.ndarray, y: np.ndarray | None = None) -> np.ndarray:
    """Row order that depends only on row contents, so scores ignore input order."""
    keys = [X[:, k] for k in range(X.shape[1] - 1, -1, -1)]  # np.lexsort: last key is primary
    if y is not None:
        keys.append(y)
    return np.lexsort(keys) if keys else np.arange(X.shape[0])


def _match_rows(X: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    if X.shape[0] == n:
        return X
    return X[np.sort(rng.choice(X.shape[0], size=n, replace=X.shape[0] < n))]


@dataclass
class DetectionResult:
    score: float
    best_auc: float
    best_iteration: int
    mean_auc_curve: np.ndarray


def detection_score(real_train: Dataset, synth: Dataset, seed: int = 0, n_iter: int = 500,
                    one_hot_limit: int = ONE_HOT_LIMIT) -> DetectionResult:
    """5-fold real-vs-synthetic boosting; the best mean validation AUC over iterations is scored."""
    check_compatible(real_train, synth)
    rng = np.random.default_rng(seed)
    fmap = fit_feature_map([real_train, synth], one_hot_limit=one_hot_limit)
    R = fmap.transform(real_train)
    S = fmap.transform(synth)
    R = R[canonical_order(R)]
    S = _match_rows(S[canonical_order(S)], R.shape[0], rng)
    X = np.vstack([R, S])
    y = np.concatenate([np.zeros(R.shape[0]), np.ones(S.shape[0])])
    order = canonical_order(X, y)
    X, y = X[order], y[order]
    folds = np.array_split(rng.permutation(X.shape[0]), N_FOLDS)
    curves = []
    for k in range(N_FOLDS):
        val = folds[k]
        tr = np.concatenate([folds[j] for j in range(N_FOLDS) if j != k])
        m = Gbdt(loss=LOGISTIC, n_iter=n_iter).fit(X[tr], y[tr], X[val], y[val])
        curves.append(m.eval_auc)
    mean_curve = np.mean(curves, axis=0)
    best = int(np.argmax(mean_curve))
    auc = float(mean_curve[best])
    return DetectionResult(auc_to_score(auc), auc, best + 1, mean_curve)


@dataclass
class MleResult:
    score: float
    synthetic: float
    real: float
    task: str  # "classification" (AUC) or "regression" (RMSE on the standardized target)


def _fit_eval(task, X, y, X_test, y_test, classes, n_iter):
    if task == "regression":
        m = Gbdt(loss=SQUARED, n_iter=n_iter).fit(X, y)
        return float(np.sqrt(np.mean((m.predict(X_test) - y_test) ** 2)))
    aucs = []
    for c in classes:
        yb = (y == c).astype(float)
        m = Gbdt(loss=LOGISTIC, n_iter=n_iter).fit(X, yb)
        aucs.append(roc_auc(y_test == c, m.predict(X_test)))
        if len(classes) == 2:
            break
    return float(np.mean(aucs))


def mle_score(real_train: Dataset, real_test: Dataset, synth: Dataset, seed: int = 0, n_iter: int = 500,
              one_hot_limit: int = ONE_HOT_LIMIT) -> MleResult:
    """|M_S - M_R|: the same learner trained on synthetic and on real rows, tested on real rows.

    Multi-class targets use the mean one-vs-rest AUC.
    """
    del seed  # the learner is deterministic
    check_compatible(real_train, synth)
    target = real_train.schema.target
    if target is None:
        raise ValueError("mle_score needs a schema with a target column")
    fmap = fit_feature_map([real_train, real_test, synth], exclude=(target.name,), one_hot_limit=one_hot_limit)
    Xr, Xs, Xt = (fmap.transform(d) for d in (real_train, synth, real_test))
    yr, ys, yt = (d.column_values(target.name) for d in (real_train, synth, real_test))
    if target.kind == CATEGORICAL:
        task = "classification"
        yr, ys, yt = (np.asarray(v).astype(str) for v in (yr, ys, yt))
        classes = sorted(set(yr))
        if len(classes) < 2:
            raise SingleClassTarget(f"target {target.name!r} has a single class in the real training rows")
    else:
        task = "regression"
        mu, sd = float(np.mean(yr)), float(np.std(yr)) or 1.0
        yr, ys, yt = ((np.asarray(v, dtype=float) - mu) / sd for v in (yr, ys, yt))
        classes = []
    or_ = canonical_order(Xr)
    os_ = canonical_order(Xs)
    m_r = _fit_eval(task, Xr[or_], yr[or_], Xt, yt, classes, n_iter)
    m_s = _fit_eval(task, Xs[os_], ys[os_], Xt, yt, classes, n_iter)
    return MleResult(abs(m_s - m_r), m_s, m_r, task)
