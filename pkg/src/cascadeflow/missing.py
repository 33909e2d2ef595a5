"""Two-stage MNAR missingness simulation (logistic MAR selector followed by MCAR on its inputs)."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.special import expit

from .data import CATEGORICAL, MISSING_LABEL, Dataset
from .errors import NoMaskableFeatures

INPUT_SHARE = 0.3
MCAR_RATE = 0.1
BIAS_BRACKET = (-20.0, 20.0)
BIAS_TOL = 1e-4


@dataclass(frozen=True)
class MnarResult:
    dataset: Dataset
    inputs: tuple[str, ...]
    masked: tuple[str, ...]  # stage-1 (logistic) features
    stage1_mask: np.ndarray  # (n, len(masked)) new stage-1 missing cells


def calibrate_bias(lin: np.ndarray, p: float) -> float:
    """Bisection for b with mean(sigmoid(lin + b)) == p within BIAS_TOL."""
    lo, hi = BIAS_BRACKET
    mid = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        gap = expit(lin + mid).mean() - p
        if abs(gap) < BIAS_TOL:
            break
        if gap > 0:
            hi = mid
        else:
            lo = mid
    return mid


def _design_matrix(ds: Dataset, names: Sequence[str]) -> np.ndarray:
    blocks = []
    for name in names:
        col = ds.schema.column(name)
        if col.kind == CATEGORICAL:
            codes = ds.cat[:, ds.cat_index(name)]
            block = np.eye(col.cardinality)[codes]
        else:
            j = ds.num_index(name)
            x = ds.num[:, j].copy()
            obs = ~ds.missing[:, j]
            x[~obs] = x[obs].mean() if obs.any() else 0.0
            block = x[:, None]
        sd = block.std(axis=0)
        sd[sd == 0] = 1.0
        blocks.append((block - block.mean(axis=0)) / sd)
    return np.hstack(blocks)


def simulate_mnar(
    ds: Dataset,
    p_miss: float,
    seed: int,
    inputs: Sequence[str] | None = None,
    candidates: Sequence[str] | None = None,
) -> MnarResult:
    """Mask numerical features missing-not-at-random.

    Stage 1 draws ``ceil(0.3 * n_features)`` non-target features as inputs to a
    random logistic model whose linear predictor is scaled to unit variance and
    whose bias is bisected so the mean probability equals ``p_miss``; every other
    numerical non-target feature (optionally restricted to ``candidates``) is
    masked cell-wise by Bernoulli draws with those probabilities. Stage 2 masks
    10% of each input feature's cells completely at random, which turns the
    stage-1 drivers partly latent. ``inputs`` overrides the random draw.
    """
    if not 0.0 <= p_miss < 1.0:
        raise ValueError("p_miss must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    schema = ds.schema
    features = [c.name for c in schema.columns if not c.target]
    if inputs is None:
        k = max(1, math.ceil(INPUT_SHARE * len(features)))
        pick = np.sort(rng.choice(len(features), size=min(k, len(features)), replace=False))
        inputs = [features[i] for i in pick]
    else:
        inputs = list(inputs)
        for name in inputs:
            if schema.column(name).target:
                raise ValueError("the target cannot drive missingness")
    pool = [c.name for c in schema.num_columns if not c.target and c.name not in inputs]
    if candidates is not None:
        pool = [name for name in pool if name in set(candidates)]
    if not pool:
        raise NoMaskableFeatures("no numerical non-target feature left to mask")

    X = _design_matrix(ds, inputs)
    n = len(ds)
    num = ds.num.copy()
    missing = ds.missing.copy()
    stage1 = np.zeros((n, len(pool)), dtype=bool)
    for k, name in enumerate(pool):
        coef = rng.standard_normal(X.shape[1])
        lin = X @ coef
        sd = lin.std()
        lin = (lin - lin.mean()) / (sd if sd > 0 else 1.0)
        if p_miss == 0.0:
            prob = np.zeros(n)
        else:
            prob = expit(lin + calibrate_bias(lin, p_miss))
        stage1[:, k] = rng.random(n) < prob
        j = ds.num_index(name)
        missing[:, j] |= stage1[:, k]

    cat = ds.cat.copy()
    for name in inputs:
        hit = rng.random(n) < MCAR_RATE
        col = schema.column(name)
        if col.kind == CATEGORICAL:
            if hit.any():
                schema = schema.with_missing_category(name)
                miss_code = schema.column(name).categories.index(MISSING_LABEL)
                cat[hit, ds.cat_index(name)] = miss_code
        else:
            missing[:, ds.num_index(name)] |= hit

    num[missing] = np.nan
    out = replace(ds, schema=schema, cat=cat, num=num, missing=missing)
    return MnarResult(out, tuple(inputs), tuple(pool), stage1)
