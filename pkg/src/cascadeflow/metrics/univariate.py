"""Per-feature fidelity: KS and TVD shape scores, Wasserstein-1, Jensen-Shannon."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import wasserstein_distance

from ..data import CATEGORICAL, Dataset
from ..errors import EmptyAfterMissingDrop, SchemaError


def check_compatible(real: Dataset, synth: Dataset) -> None:
    a = {c.name: c.kind for c in real.schema.columns}
    b = {c.name: c.kind for c in synth.schema.columns}
    if a != b:
        raise SchemaError("real and synthetic schemas differ in column names or kinds")


def observed(ds: Dataset, name: str) -> np.ndarray:
    x = ds.column_values(name)
    x = x[~np.isnan(x)]
    if x.size == 0:
        raise EmptyAfterMissingDrop(name)
    return x


def ks_statistic(a, b) -> float:
    """Largest gap between the two empirical CDFs, checked at every pooled point."""
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    pts = np.concatenate([a, b])
    fa = np.searchsorted(a, pts, side="right") / a.size
    fb = np.searchsorted(b, pts, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def frequencies(a, b) -> tuple[np.ndarray, np.ndarray]:
    """Aligned relative frequencies of two label arrays over their union."""
    labels = sorted(set(a) | set(b), key=str)
    idx = {v: k for k, v in enumerate(labels)}
    pa = np.bincount([idx[v] for v in a], minlength=len(labels)) / len(a)
    pb = np.bincount([idx[v] for v in b], minlength=len(labels)) / len(b)
    return pa, pb


def tvd(p: np.ndarray, q: np.ndarray) -> float:
    return float(0.5 * np.abs(p - q).sum())


def jsd(p: np.ndarray, q: np.ndarray) -> float:
    """Jensen-Shannon divergence in nats, with 0 log 0 = 0."""
    m = 0.5 * (p + q)

    def kl(x):
        nz = x > 0
        return float(np.sum(x[nz] * np.log(x[nz] / m[nz])))

    return 0.5 * kl(p) + 0.5 * kl(q)


def wasserstein1(a, b) -> float:
    return float(wasserstein_distance(a, b))


@dataclass
class ShapeScores:
    shape: float
    shape_cat: float | None
    shape_num: float | None
    wd_num: float | None
    jsd_cat: float | None
    per_feature: dict[str, float]
    wd_per_feature: dict[str, float]
    jsd_per_feature: dict[str, float]


def _mean(xs):
    return float(np.mean(xs)) if xs else None


def shape_scores(real: Dataset, synth: Dataset) -> ShapeScores:
    check_compatible(real, synth)
    per, wds, jsds = {}, {}, {}
    cat_scores, num_scores = [], []
    for col in real.schema.columns:
        if col.kind == CATEGORICAL:
            p, q = frequencies(real.column_values(col.name), synth.column_values(col.name))
            per[col.name] = 1.0 - tvd(p, q)
            jsds[col.name] = jsd(p, q)
            cat_scores.append(per[col.name])
        else:
            r = observed(real, col.name)
            s = observed(synth, col.name)
            per[col.name] = 1.0 - ks_statistic(r, s)
            lo, hi = r.min(), r.max()
            span = hi - lo if hi > lo else 1.0
            wds[col.name] = wasserstein1((r - lo) / span, (s - lo) / span)
            num_scores.append(per[col.name])
    return ShapeScores(
        shape=float(np.mean(list(per.values()))),
        shape_cat=_mean(cat_scores),
        shape_num=_mean(num_scores),
        wd_num=_mean(list(wds.values())),
        jsd_cat=_mean(list(jsds.values())),
        per_feature=per,
        wd_per_feature=wds,
        jsd_per_feature=jsds,
    )
