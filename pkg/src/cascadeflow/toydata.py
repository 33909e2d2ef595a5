"""Synthetic tables and feature families used by tests, benchmarks and the demo."""
from __future__ import annotations

import numpy as np

from .data import CATEGORICAL, NUMERICAL, Column, Dataset, FeatureSchema, from_columns
from .missing import simulate_mnar

FAMILIES = ("bimodal", "zero_inflated", "heavy_tailed", "uniform", "integer")


def feature_family(name: str, n: int, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    if name == "bimodal":
        left = rng.random(n) < 0.4
        return np.where(left, rng.normal(-2.0, 0.5, n), rng.normal(2.0, 0.7, n))
    if name == "zero_inflated":
        return np.where(rng.random(n) < 0.4, 0.0, rng.lognormal(0.0, 0.8, n))
    if name == "heavy_tailed":
        return rng.standard_t(2.0, n)
    if name == "uniform":
        return rng.uniform(-1.0, 3.0, n)
    if name == "integer":
        return rng.poisson(3.0, n).astype(float)
    raise ValueError(f"unknown family {name!r}")


def two_clusters(n: int, seed: int = 0, centers=(-5.0, 5.0), scale: float = 0.5) -> np.ndarray:
    rng = np.random.default_rng(seed)
    side = rng.random(n) < 0.5
    return np.where(side, centers[0], centers[1]) + scale * rng.standard_normal(n)


MIXED_SCHEMA = FeatureSchema((
    Column("region", CATEGORICAL, ("north", "south", "east")),
    Column("plan", CATEGORICAL, ("basic", "plus", "pro", "team")),
    Column("spend", NUMERICAL),
    Column("tenure", NUMERICAL),
    Column("income", NUMERICAL),
))

SPEND_ZERO_SHARE = 0.4
TENURE_LEFT_SHARE = 0.4
INCOME_MISSING = 0.10


def mixed_table(n: int = 20000, seed: int = 0) -> Dataset:
    """Two linked categoricals; a zero-inflated, a bimodal and a partly missing numerical.

    ``spend`` is exactly 0 with probability 0.4. ``tenure`` has modes near -2
    (share 0.4) and +2. ``income`` is masked not at random at rate 0.10 with
    ``region`` driving the logistic selector (which itself receives 10% missing
    cells, stored as the "" category).
    """
    rng = np.random.default_rng(seed)
    region = rng.choice(3, size=n, p=[0.5, 0.3, 0.2])
    plan_p = np.array([[0.5, 0.3, 0.15, 0.05], [0.3, 0.3, 0.3, 0.1], [0.1, 0.2, 0.4, 0.3]])
    plan = np.array([rng.choice(4, p=plan_p[r]) for r in region])
    left = rng.random(n) < TENURE_LEFT_SHARE
    tenure = np.where(left, rng.normal(-2.0, 0.5, n), rng.normal(2.0, 0.6, n)) + 0.1 * plan
    income = 40.0 + 6.0 * tenure + 5.0 * region + rng.normal(0.0, 5.0, n)
    spend = np.where(rng.random(n) < SPEND_ZERO_SHARE, 0.0,
                     rng.lognormal(1.0 + 0.3 * plan, 0.5, n))
    ds = from_columns(MIXED_SCHEMA, {
        "region": [MIXED_SCHEMA.columns[0].categories[k] for k in region],
        "plan": [MIXED_SCHEMA.columns[1].categories[k] for k in plan],
        "spend": spend,
        "tenure": tenure,
        "income": income,
    })
    return simulate_mnar(ds, INCOME_MISSING, seed + 1, inputs=["region"], candidates=["income"]).dataset
