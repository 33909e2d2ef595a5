"""ROC AUC via average ranks (ties count one half)."""
from __future__ import annotations

import numpy as np
from scipy.stats import rankdata


def roc_auc(labels, scores) -> float:
    """Probability that a random positive outscores a random negative.

    Returns 0.5 when only one class is present.
    """
    y = np.asarray(labels).astype(bool)
    s = np.asarray(scores, dtype=float)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return 0.5
    r = rankdata(s)
    return float((r[y].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def auc_to_score(auc: float) -> float:
    """1 - (2 max(0.5, auc) - 1): 1 when indistinguishable, 0 when perfectly separable."""
    return 1.0 - (max(0.5, float(auc)) * 2.0 - 1.0)
