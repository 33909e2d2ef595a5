"""Privacy proxies: distance-to-closest-record share and a membership inference attack."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import kernels
from ..data import CATEGORICAL, Dataset
from .auc import auc_to_score, roc_auc
from .gbdt import LOGISTIC, Gbdt
from .learners import ONE_HOT_LIMIT, canonical_order, fit_feature_map
from .univariate import check_compatible

N_REPEATS = 5
ATTACK_SHARE = 0.75


def distance_features(reference: Dataset, tables: list[Dataset]) -> list[np.ndarray]:
    """Min-max scaled numericals (mean-imputed, plus missing indicators) and one-hot categoricals.

    Scaling constants and imputation means come from ``reference``.
    """
    names = [c.name for c in reference.schema.columns]
    cats = {c.name for c in reference.schema.columns if c.kind == CATEGORICAL}
    out = [[] for _ in tables]
    for name in names:
        if name in cats:
            labs = sorted(set(np.concatenate([t.column_values(name) for t in tables]).astype(str)))
            idx = {lab: k for k, lab in enumerate(labs)}
            for k, t in enumerate(tables):
                v = t.column_values(name).astype(str)
                block = np.zeros((len(v), len(labs)))
                block[np.arange(len(v)), [idx[x] for x in v]] = 1.0
                out[k].append(block)
            continue
        r = reference.column_values(name)
        lo, hi = np.nanmin(r), np.nanmax(r)
        span = hi - lo if hi > lo else 1.0
        fill = (np.nanmean(r) - lo) / span
        any_missing = any(np.isnan(t.column_values(name)).any() for t in tables)
        for k, t in enumerate(tables):
            v = (t.column_values(name) - lo) / span
            miss = np.isnan(v)
            out[k].append(np.where(miss, fill, v)[:, None])
            if any_missing:
                out[k].append(miss[:, None].astype(float))
    return [np.hstack(blocks) if blocks else np.zeros((len(t), 0)) for blocks, t in zip(out, tables)]


@dataclass
class DcrResult:
    share: float
    closer_to_train: np.ndarray  # per synthetic row: 1, 0 or 0.5


def dcr_share(real_train: Dataset, real_test: Dataset, synth: Dataset) -> DcrResult:
    """Share of synthetic rows nearer to a training row than to any test row (ties count 0.5)."""
    check_compatible(real_train, synth)
    tr, te, sy = distance_features(real_train, [real_train, real_test, synth])
    d_tr = kernels.min_sq_distances(sy, tr)
    d_te = kernels.min_sq_distances(sy, te)
    s = np.where(d_tr < d_te, 1.0, np.where(d_tr > d_te, 0.0, 0.5))
    return DcrResult(float(s.mean()) if s.size else 0.5, s)


@dataclass
class MiaResult:
    score: float
    aucs: list[float]


def mia_score(real_train: Dataset, real_test: Dataset, synth: Dataset, seed: int = 0,
              n_iter: int = 500, repeats: int = N_REPEATS, one_hot_limit: int = ONE_HOT_LIMIT) -> MiaResult:
    """Attack: learn test-vs-synthetic on 75% of the test rows, then score how well that
    classifier separates training members from the held-out 25% of test rows."""
    check_compatible(real_train, synth)
    if len(real_test) < 8:
        raise ValueError("membership inference needs at least 8 test rows")
    fmap = fit_feature_map([real_train, real_test, synth], one_hot_limit=one_hot_limit)
    Tr, Te, Sy = (fmap.transform(d) for d in (real_train, real_test, synth))
    Tr, Te, Sy = (A[canonical_order(A)] for A in (Tr, Te, Sy))
    aucs, scores = [], []
    for r in range(repeats):
        rng = np.random.default_rng([seed, r])
        perm = rng.permutation(Te.shape[0])
        cut = int(round(ATTACK_SHARE * Te.shape[0]))
        fit_rows, hold = Te[perm[:cut]], Te[perm[cut:]]
        syn = Sy[rng.choice(Sy.shape[0], size=fit_rows.shape[0], replace=Sy.shape[0] < fit_rows.shape[0])]
        mem = Tr[rng.choice(Tr.shape[0], size=hold.shape[0], replace=Tr.shape[0] < hold.shape[0])]
        X = np.vstack([fit_rows, syn])
        y = np.concatenate([np.zeros(len(fit_rows)), np.ones(len(syn))])
        m = Gbdt(loss=LOGISTIC, n_iter=n_iter).fit(X, y)
        Xe = np.vstack([hold, mem])
        ye = np.concatenate([np.zeros(len(hold)), np.ones(len(mem))])
        auc = roc_auc(ye, m.predict(Xe))
        aucs.append(auc)
        scores.append(auc_to_score(auc))
    return MiaResult(float(np.mean(scores)), aucs)
