import json
import math
from dataclasses import replace

import jsonschema
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cascadeflow.data import CATEGORICAL, NUMERICAL, Column, FeatureSchema, from_columns
from cascadeflow.errors import EmptyAfterMissingDrop, EmptyTrainingSet, SchemaError, SingleClassTarget
from cascadeflow.metrics import (
    Gbdt,
    auc_to_score,
    dcr_share,
    detection_score,
    evaluate,
    gbdt_fit,
    gbdt_predict,
    jsd,
    ks_statistic,
    mia_score,
    mle_score,
    report_schema,
    roc_auc,
    shape_scores,
    trend_scores,
    tvd,
    wasserstein1,
)
from cascadeflow.metrics.gbdt import SQUARED
from cascadeflow.toydata import mixed_table
from oracles import auc_pairwise, jsd_scalar, ks_bruteforce

NUM2 = FeatureSchema((Column("a", NUMERICAL), Column("b", NUMERICAL)))
CAT2 = FeatureSchema((Column("a", CATEGORICAL, ("x", "y")), Column("b", CATEGORICAL, ("x", "y"))))


def num_table(a, b=None):
    b = a if b is None else b
    return from_columns(NUM2, {"a": list(a), "b": list(b)})


@pytest.fixture(scope="module")
def mixed():
    ds = mixed_table(8000, seed=3)
    return ds.rows(np.arange(3000)), ds.rows(np.arange(3000, 5000)), ds.rows(np.arange(5000, 8000))


# univariate

def test_ks_examples():
    assert ks_statistic([1, 2, 3, 4], [2, 3, 4, 5]) == 0.25
    assert ks_statistic([0, 0], [1]) == 1.0
    assert ks_statistic([3, 1, 2], [2, 3, 1]) == 0.0


def test_ks_matches_bruteforce(rng):
    for _ in range(300):
        a = rng.integers(0, 8, rng.integers(1, 51)).astype(float)
        b = rng.integers(0, 8, rng.integers(1, 51)).astype(float)
        assert ks_statistic(a, b) == pytest.approx(ks_bruteforce(a, b), abs=1e-12)


def test_tvd_and_jsd(rng):
    p = np.array([0.5, 0.5, 0.0])
    q = np.array([0.0, 0.5, 0.5])
    assert tvd(p, q) == 0.5
    assert jsd(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == pytest.approx(math.log(2), rel=1e-15)
    for _ in range(50):
        p = rng.dirichlet(np.ones(5))
        q = rng.dirichlet(np.ones(5))
        q[rng.integers(5)] = 0.0
        q /= q.sum()
        assert jsd(p, q) == pytest.approx(jsd_scalar(p, q), rel=1e-12)
        assert 0 <= jsd(p, q) <= math.log(2) + 1e-15


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=40).flatmap(
    lambda a: st.tuples(st.just(a), st.lists(st.floats(-1e3, 1e3), min_size=len(a), max_size=len(a)))))
def test_wasserstein_equal_size_oracle(pair):
    a, b = pair
    oracle = float(np.mean(np.abs(np.sort(a) - np.sort(b))))
    assert wasserstein1(a, b) == pytest.approx(oracle, rel=1e-9, abs=1e-9)


def test_shape_identity_and_errors(mixed):
    tr, _, _ = mixed
    sh = shape_scores(tr, tr)
    assert sh.shape == 1.0 and sh.wd_num == 0.0 and sh.jsd_cat == 0.0
    other = FeatureSchema((Column("a", NUMERICAL), Column("c", NUMERICAL)))
    with pytest.raises(SchemaError):
        shape_scores(num_table([1, 2]), from_columns(other, {"a": [1, 2], "c": [1, 2]}))
    with pytest.raises(EmptyAfterMissingDrop):
        shape_scores(num_table([1, 2]), num_table([None, None], [1, 2]))


def test_shape_disjoint_supports():
    sh = shape_scores(num_table([0, 0, 0]), num_table([1, 1, 1]))
    assert sh.shape_num == 0.0


# bivariate

def test_trend_examples(rng):
    x = rng.normal(size=200)
    assert trend_scores(num_table(x, 2 * x), num_table(x, -x)).trend == pytest.approx(0.0, abs=1e-12)
    real = from_columns(CAT2, {"a": ["x", "x", "y", "y"], "b": ["x", "y", "x", "y"]})
    synth = from_columns(CAT2, {"a": ["x"] * 4, "b": ["x"] * 4})
    assert trend_scores(real, synth).trend == pytest.approx(0.25, abs=1e-15)


def test_trend_identity_and_constant_pair(mixed, rng):
    tr, _, _ = mixed
    t = trend_scores(tr, tr)
    assert t.trend == 1.0 and t.trend_mixed == 1.0 and not t.skipped
    c = trend_scores(num_table(rng.normal(size=20), np.ones(20)), num_table(rng.normal(size=20)))
    assert c.trend is None and c.skipped == ["a|b"]


def test_mixed_pair_uses_ten_bins_and_clips():
    schema = FeatureSchema((Column("g", CATEGORICAL, ("x", "y")), Column("v", NUMERICAL)))
    real = from_columns(schema, {"g": ["x"] * 10, "v": list(range(10))})
    far = from_columns(schema, {"g": ["x"] * 10, "v": [100.0] * 10})
    top = from_columns(schema, {"g": ["x"] * 10, "v": [9.0] * 10})
    assert trend_scores(real, far).trend == pytest.approx(trend_scores(real, top).trend)
    assert trend_scores(real, far).trend == pytest.approx(0.1)


# AUC and detection formula

def test_auc_matches_pairwise(rng):
    for _ in range(200):
        n = int(rng.integers(1, 121))
        y = rng.integers(0, 2, n)
        s = rng.integers(0, 6, n).astype(float)
        assert roc_auc(y, s) == pytest.approx(auc_pairwise(y, s), abs=1e-12)


def test_auc_to_score_endpoints():
    assert auc_to_score(0.5) == 1.0 and auc_to_score(1.0) == 0.0
    assert auc_to_score(0.2) == 1.0 and auc_to_score(0.75) == 0.5


def test_detection_shuffled_copy_and_separable(mixed, rng):
    tr, _, _ = mixed
    shuffled = tr.rows(rng.permutation(len(tr)))
    assert detection_score(tr, shuffled, n_iter=100).score >= 0.9
    shifted = replace(tr, num=tr.num + 10.0)
    assert detection_score(tr, shifted, n_iter=50).score < 0.05


# gbdt

def test_gbdt_separable_xor_constant(rng):
    X = rng.normal(size=(1000, 2))
    X = X[np.abs(X.sum(axis=1)) > 0.5][:400]  # margin around the separating line
    y = (X[:, 0] + X[:, 1] > 0).astype(float)
    m = gbdt_fit(X, y, n_iter=50)
    assert roc_auc(y, gbdt_predict(m, X)) == 1.0
    p = gbdt_predict(m, X)
    assert np.all((p > 0) & (p < 1))

    c = np.repeat([[0, 0], [0, 1], [1, 0], [1, 1]], 100, axis=0) + 0.1 * rng.normal(size=(400, 2))
    yx = np.repeat([0.0, 1.0, 1.0, 0.0], 100)
    mx = Gbdt(n_iter=100, max_depth=2).fit(c, yx)
    assert roc_auc(yx, mx.predict(c)) > 0.95

    mc = gbdt_fit(X, np.ones(400), n_iter=5)
    assert np.allclose(mc.predict(X), mc.predict(X)[0]) and roc_auc(np.ones(400), mc.predict(X)) == 0.5


def test_gbdt_training_loss_monotone_and_missing(rng):
    X = rng.normal(size=(600, 3))
    X[rng.random((600, 3)) < 0.2] = np.nan
    y = (np.nan_to_num(X[:, 0], nan=2.0) > 0.5).astype(float)
    m = Gbdt(n_iter=60).fit(X, y)
    assert np.all(np.diff(m.train_loss) <= 1e-12)
    assert roc_auc(y, m.predict(X)) > 0.99
    r = Gbdt(loss=SQUARED, n_iter=40).fit(X[:, 1:], np.nan_to_num(X[:, 1]))
    assert np.all(np.diff(r.train_loss) <= 1e-12)
    with pytest.raises(EmptyTrainingSet):
        Gbdt().fit(np.zeros((0, 2)), np.zeros(0))


def test_gbdt_is_deterministic(rng):
    X = rng.normal(size=(300, 4))
    y = (X[:, 0] > 0).astype(float)
    assert np.array_equal(gbdt_fit(X, y, n_iter=20, seed=1).predict(X), gbdt_fit(X, y, n_iter=20, seed=2).predict(X))


# MLE

def target_table(n, seed, informative=True):
    rng = np.random.default_rng(seed)
    schema = FeatureSchema((Column("u", NUMERICAL), Column("v", NUMERICAL),
                            Column("y", CATEGORICAL, ("neg", "pos"), target=True)))
    u, v = rng.normal(size=n), rng.normal(size=n)
    logit = 2 * u - v if informative else np.zeros(n)
    y = np.where(rng.random(n) < 1 / (1 + np.exp(-logit)), "pos", "neg")
    return from_columns(schema, {"u": u, "v": v, "y": list(y)})


def test_mle_identity_and_noise():
    tr, te = target_table(5000, 0), target_table(2000, 1)
    same = mle_score(tr, te, tr, n_iter=100)
    assert same.score < 0.01 and same.task == "classification"
    noise = mle_score(tr, te, target_table(5000, 2, informative=False), n_iter=100)
    assert abs(noise.synthetic - 0.5) < 0.05
    assert noise.score == pytest.approx(abs(0.5 - noise.real), abs=0.05)


def test_mle_regression_identity(rng):
    schema = FeatureSchema((Column("u", NUMERICAL), Column("y", NUMERICAL, target=True)))
    u = rng.normal(size=3000)
    ds = from_columns(schema, {"u": u, "y": 3 * u + rng.normal(size=3000)})
    tr, te = ds.rows(np.arange(2000)), ds.rows(np.arange(2000, 3000))
    res = mle_score(tr, te, tr, n_iter=50)
    assert res.task == "regression" and res.score < 0.01


def test_mle_single_class():
    tr = target_table(200, 0)
    tr.cat[:, 0] = 0
    with pytest.raises(SingleClassTarget):
        mle_score(tr, target_table(100, 1), tr, n_iter=5)


# privacy

def test_dcr_rules():
    train = num_table([0.0, 1.0, 2.0])
    test = num_table([10.0, 11.0, 12.0])
    assert dcr_share(train, test, train).share == 1.0
    assert dcr_share(train, test, test).share == 0.0
    sym = num_table([5.0, 6.0, 6.0], [5.0, 6.0, 6.0])
    left, right = num_table([4.0, 7.0], [4.0, 7.0]), num_table([6.0, 5.0], [6.0, 5.0])
    assert dcr_share(num_table([0.0, 10.0]), num_table([2.0, 8.0]), num_table([1.0, 9.0])).share == 0.5
    assert set(dcr_share(left, right, sym).closer_to_train.tolist()) <= {0.0, 0.5, 1.0}


def test_mia_direction_and_range(mixed):
    tr, te, indep = mixed
    copy = mia_score(tr, te, tr, n_iter=100)
    fresh = mia_score(tr, te, indep, n_iter=100)
    assert len(copy.aucs) == 5 and 0 <= copy.score <= 1 and 0 <= fresh.score <= 1
    assert copy.score < fresh.score
    with pytest.raises(ValueError):
        mia_score(tr, te.rows(np.arange(7)), indep, n_iter=2)


# report

def test_order_invariance(mixed, rng):
    tr, te, sy = mixed
    a = evaluate(tr, te, sy, seed=1, mle=False, n_iter=30)
    b = evaluate(tr.rows(rng.permutation(len(tr))), te.rows(rng.permutation(len(te))),
                 sy.rows(rng.permutation(len(sy))), seed=1, mle=False, n_iter=30)
    assert a.to_json() == b.to_json()


def test_report_validates_and_ranges(mixed):
    tr, te, sy = mixed
    rep = evaluate(tr, te, sy, seed=0, n_iter=30)
    jsonschema.validate(json.loads(rep.to_json()), report_schema())
    for k in ("shape", "shape_cat", "shape_num", "trend", "trend_mixed", "detection", "dcr_share", "mia"):
        assert 0.0 <= getattr(rep, k) <= 1.0
    assert rep.mle is None and rep.wd_num >= 0 and rep.jsd_cat >= 0
    header, row = rep.csv_row().splitlines()
    assert header.split(",")[0] == "shape" and row.split(",")[-3] == ""
