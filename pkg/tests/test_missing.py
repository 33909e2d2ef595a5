import numpy as np
import pytest

from cascadeflow.data import CATEGORICAL, NUMERICAL, Column, FeatureSchema, from_columns
from cascadeflow.errors import NoMaskableFeatures
from cascadeflow.missing import calibrate_bias, simulate_mnar
from scipy.special import expit


def table(n, seed=0, target=True):
    rng = np.random.default_rng(seed)
    cols = [Column("g", CATEGORICAL, ("a", "b", "c")), Column("x1", NUMERICAL), Column("x2", NUMERICAL),
            Column("x3", NUMERICAL), Column("y", NUMERICAL, target=target)]
    schema = FeatureSchema(tuple(cols))
    x1 = rng.normal(size=n)
    return from_columns(schema, {
        "g": [("a", "b", "c")[k] for k in rng.integers(0, 3, n)],
        "x1": x1, "x2": x1 + rng.normal(size=n), "x3": rng.exponential(size=n), "y": rng.normal(size=n),
    })


def test_bias_calibration_hits_target(rng):
    lin = rng.standard_normal(5000)
    for p in (0.05, 0.3, 0.9):
        assert abs(expit(lin + calibrate_bias(lin, p)).mean() - p) < 1e-4


def test_rate_and_target_untouched():
    ds = table(10_000)
    res = simulate_mnar(ds, 0.10, seed=3)
    assert "y" not in res.inputs and "y" not in res.masked
    assert res.dataset.missing[:, ds.num_index("y")].sum() == 0
    rate = res.stage1_mask.mean(axis=0)
    assert np.all((rate >= 0.08) & (rate <= 0.12))
    assert len(res.inputs) == 2  # ceil(0.3 * 5 features excluding the target = 4) = 2


def test_zero_rate_adds_no_stage1_mask():
    res = simulate_mnar(table(2000), 0.0, seed=1)
    assert not res.stage1_mask.any()


def test_deterministic_per_seed():
    ds = table(3000)
    a, b = simulate_mnar(ds, 0.25, 7), simulate_mnar(ds, 0.25, 7)
    assert np.array_equal(a.dataset.missing, b.dataset.missing)
    assert np.array_equal(a.dataset.cat, b.dataset.cat)
    assert a.inputs == b.inputs


def test_stage_two_masks_inputs_completely_at_random():
    ds = table(20_000)
    res = simulate_mnar(ds, 0.2, 5, inputs=["g", "x1"])
    assert "" in res.dataset.schema.column("g").categories
    miss_g = (res.dataset.column_values("g") == "").mean()
    miss_x1 = res.dataset.missing[:, ds.num_index("x1")].mean()
    assert abs(miss_g - 0.1) < 0.01 and abs(miss_x1 - 0.1) < 0.01


def test_missing_inputs_are_mean_imputed():
    ds = table(2000)
    res1 = simulate_mnar(ds, 0.2, 5, inputs=["x1"])
    res2 = simulate_mnar(res1.dataset, 0.2, 6, inputs=["x1"])
    assert np.isfinite(res2.stage1_mask).all()


def test_no_maskable_feature():
    schema = FeatureSchema((Column("g", CATEGORICAL, ("a", "b")), Column("x", NUMERICAL)))
    ds = from_columns(schema, {"g": ["a", "b"] * 5, "x": np.arange(10.0)})
    with pytest.raises(NoMaskableFeatures):
        simulate_mnar(ds, 0.1, 0, inputs=["x"])
