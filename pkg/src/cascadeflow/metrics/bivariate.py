"""Pairwise fidelity: correlation agreement and contingency-table TVD."""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from ..data import CATEGORICAL, Dataset
from .univariate import check_compatible, frequencies, tvd

N_BINS = 10


def equal_width_bins(real: np.ndarray, synth: np.ndarray, n_bins: int = N_BINS):
    """Bin indices using edges spanning the real range; synthetic values clip into the end bins."""
    lo, hi = np.nanmin(real), np.nanmax(real)
    edges = np.linspace(lo, hi, n_bins + 1)[1:-1]
    return np.searchsorted(edges, real, side="right"), np.searchsorted(edges, synth, side="right")


def contingency_tvd(ra, rb, sa, sb) -> float:
    real = [f"{x}\x1f{y}" for x, y in zip(ra, rb)]
    syn = [f"{x}\x1f{y}" for x, y in zip(sa, sb)]
    p, q = frequencies(real, syn)
    return tvd(p, q)


@dataclass
class TrendScores:
    trend: float | None
    trend_mixed: float | None
    per_pair: dict[str, float] = field(default_factory=dict)
    skipped: list[str] = field(default_factory=list)


def _pair_rows(ds: Dataset, a: str, b: str):
    x, y = ds.column_values(a), ds.column_values(b)
    keep = np.ones(len(ds), dtype=bool)
    for v, name in ((x, a), (y, b)):
        if ds.schema.column(name).kind != CATEGORICAL:
            keep &= ~np.isnan(v.astype(float))
    return x[keep], y[keep]


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    # sorted rows make the floating-point sums independent of input row order
    o = np.lexsort((y, x))
    return float(np.corrcoef(x[o], y[o])[0, 1])


def trend_scores(real: Dataset, synth: Dataset) -> TrendScores:
    check_compatible(real, synth)
    out = TrendScores(None, None)
    all_scores, mixed = [], []
    for ca, cb in combinations(real.schema.columns, 2):
        key = f"{ca.name}|{cb.name}"
        ra, rb = _pair_rows(real, ca.name, cb.name)
        sa, sb = _pair_rows(synth, ca.name, cb.name)
        if ra.size < 2 or sa.size < 2:
            out.skipped.append(key)
            continue
        kinds = (ca.kind == CATEGORICAL, cb.kind == CATEGORICAL)
        if not any(kinds):
            ra, rb, sa, sb = (v.astype(float) for v in (ra, rb, sa, sb))
            if min(ra.std(), rb.std(), sa.std(), sb.std()) == 0:
                out.skipped.append(key)
                continue
            r = _pearson(ra, rb)
            s = _pearson(sa, sb)
            score = 1.0 - 0.5 * abs(s - r)
        else:
            if not kinds[0]:
                ra, sa = equal_width_bins(ra.astype(float), sa.astype(float))
            if not kinds[1]:
                rb, sb = equal_width_bins(rb.astype(float), sb.astype(float))
            score = 1.0 - contingency_tvd(ra, rb, sa, sb)
        out.per_pair[key] = float(score)
        all_scores.append(score)
        if kinds[0] != kinds[1]:
            mixed.append(score)
    out.trend = float(np.mean(all_scores)) if all_scores else None
    out.trend_mixed = float(np.mean(mixed)) if mixed else None
    return out
