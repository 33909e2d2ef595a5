import math

import numpy as np
import pytest

from cascadeflow.data import NUMERICAL, Column, FeatureSchema, fit_preprocessor, from_columns
from cascadeflow.encoders import DT, Component, EncoderSet, FeatureEncoder, fit_dt_encoder
from cascadeflow.highres import (
    D_FLOOR,
    HighResModel,
    cfm_loss,
    cfm_target,
    conditional_vector_field,
    gamma_from_coefficients,
    make_path_sample,
    quintic,
    sample_coupled_source,
    sample_highres,
    schedule_gamma,
    transport_cost_gap,
    wasserstein_trace,
)
from cascadeflow.nn import TIME_BASE, TIME_SCALE, Adam, Ema
from cascadeflow.toydata import FAMILIES, feature_family
from oracles import mlp_scalar, quintic_scalar


def encoder_set(*encoders, cats=()):
    return EncoderSet(list(encoders), list(cats))


def two_leaf(has_missing=True):
    return FeatureEncoder(DT, [Component(2.0, 0.5, 0.6), Component(0.0, 0.0, 0.4, inflated=True, value=0.0)],
                          np.array([1.0]), has_missing=has_missing)


def randomize_schedule(model, rng, scale=0.5):
    model.schedule.weights[-1][...] = scale * rng.standard_normal(model.schedule.weights[-1].shape)
    model.schedule.biases[-1][...] = scale * rng.standard_normal(model.schedule.biases[-1].shape)


# schedule

def test_quintic_linear_case():
    t = np.linspace(0, 1, 11)
    g, gd = gamma_from_coefficients(0.0, 0.0, 1.0, t)
    assert np.allclose(g, t, atol=0) and np.allclose(gd, 1.0, atol=0)


def test_quintic_worked_example():
    g, gd = gamma_from_coefficients(1.0, 0.0, 1.0, 0.5)
    assert g == pytest.approx((0.5 ** 5 / 5 + 2 * 0.5 ** 3 / 3 + 0.5) / (1 / 5 + 2 / 3 + 1), rel=1e-14)
    assert gd == pytest.approx((0.25 + 1) ** 2 / (28 / 15), rel=1e-14)
    og, ogd = quintic_scalar(1.0, 0.0, 1.0, 0.5)
    assert g == pytest.approx(og, rel=1e-13) and gd == pytest.approx(ogd, rel=1e-13)


def test_quintic_against_quadrature(rng):
    for _ in range(20):
        a, b = rng.normal(0, 3, 2)
        d = rng.uniform(D_FLOOR, 3)
        t = rng.random()
        og, ogd = quintic_scalar(a, b, d, t)
        g, gd = gamma_from_coefficients(a, b, d, t)
        assert g == pytest.approx(og, rel=1e-10, abs=1e-13) and gd == pytest.approx(ogd, rel=1e-10, abs=1e-13)


def test_quintic_derivative_is_perfect_square(rng):
    a, b, d = rng.normal(size=3)
    t = np.linspace(0, 1, 7)
    h = 1e-6
    fd = (quintic(a, b, d, t + h)[0] - quintic(a, b, d, t - h)[0]) / (2 * h)
    assert np.allclose(fd, quintic(a, b, d, t)[1], rtol=1e-6, atol=1e-8)


def test_schedule_boundaries_monotone_and_consistent(rng):
    model = HighResModel([5, 4, 3], 3, rng, cond_dim=16, time_dim=8, hidden=(8,), schedule_hidden=(16,))
    randomize_schedule(model, rng, scale=2.0)
    x_low = np.column_stack([rng.integers(0, c, 1000) for c in [5, 4, 3]])
    g0, _ = schedule_gamma(model, np.zeros(1000), x_low)
    g1, _ = schedule_gamma(model, np.ones(1000), x_low)
    assert np.max(np.abs(g0)) < 1e-9 and np.max(np.abs(g1 - 1)) < 1e-9
    for t in np.linspace(0, 1, 101):
        _, gd = model.gamma(np.full(1000, t), x_low)
        assert np.all(gd > 0)
    h = 1e-4
    for t in (0.1, 0.5, 0.9):
        gp, _ = model.gamma(np.full(1000, t + h), x_low)
        gm, _ = model.gamma(np.full(1000, t - h), x_low)
        _, gd = model.gamma(np.full(1000, t), x_low)
        assert np.max(np.abs(gd - (gp - gm) / (2 * h))) < 1e-4


def test_fresh_schedule_is_linear(rng):
    model = HighResModel([3], 2, rng, cond_dim=8, time_dim=4, hidden=(4,))
    g, gd = model.gamma(np.full(3, 0.3), np.array([[0, 1], [1, 0], [2, 2]])[:, :1])
    assert np.allclose(g, 0.3, atol=1e-12) and np.allclose(gd, 1.0, atol=1e-12)


# coupling and path

def test_coupled_source_examples(rng):
    es = encoder_set(two_leaf())
    x0, mask = sample_coupled_source(es, np.array([[0], [1], [2]]), np.zeros((3, 1)))
    assert x0[:, 0].tolist() == [2.0, 0.0, 0.0] and mask[:, 0].tolist() == [False, True, True]
    eps = rng.standard_normal((100_000, 1))
    x0, _ = sample_coupled_source(es, np.zeros((100_000, 1), dtype=int), eps)
    assert abs(x0.mean() - 2.0) < 0.02 and abs(x0.std() - 0.5) < 0.02


def test_path_endpoints_and_worked_example(rng):
    es = encoder_set(FeatureEncoder(DT, [Component(0.0, 1.0, 1.0)], np.array([])))
    ps = make_path_sample(es, np.array([[0.3]]), np.array([[1.0]]), np.array([[0]]), np.array([0.3]),
                          np.array([[0.5]]))
    assert ps.xt[0, 0] == pytest.approx(0.65, abs=1e-15)
    x1 = rng.standard_normal((20, 1))
    eps = rng.standard_normal((20, 1))
    z = np.zeros((20, 1), dtype=int)
    p0 = make_path_sample(es, np.zeros((20, 1)), x1, z, np.zeros(20), eps)
    p1 = make_path_sample(es, np.ones((20, 1)), x1, z, np.ones(20), eps)
    assert np.array_equal(p0.xt, p0.x0) and np.array_equal(p1.xt, x1)


def test_vector_field_identity(rng):
    for _ in range(200):
        a, b = rng.normal(size=2)
        d = rng.uniform(0.01, 2)
        t = rng.random()
        g, gd = gamma_from_coefficients(a, b, d, t)
        if g >= 1 - 1e-6:
            continue
        x1, x0 = rng.normal(size=2)
        xt = g * x1 + (1 - g) * x0
        lhs = conditional_vector_field(g, gd, x1, xt)
        rhs = cfm_target(gd, x1, x0)
        assert abs(lhs - rhs) <= 1e-9 * max(1.0, abs(rhs))


# loss

def small_model(rng, n_num=1, cards=(2,)):
    return HighResModel(list(cards), n_num, rng, cond_dim=2, time_dim=2, hidden=(3,), schedule_hidden=(2,))


def test_loss_zero_for_exact_field(rng):
    # a zero-weight field whose bias equals x_1 - x_0 for a constant batch
    es = encoder_set(FeatureEncoder(DT, [Component(0.0, 1.0, 1.0)], np.array([])))
    model = small_model(rng, cards=(1,))
    model.field.weights[-1][...] = 0.0
    model.field.biases[-1][...] = 1.5
    n = 8
    loss = cfm_loss(model, es, np.full((n, 1), 1.5), np.zeros((n, 1), dtype=int), rng.random(n), np.zeros((n, 1)),
                    with_grads=False)
    assert loss == 0.0


def test_all_masked_batch(rng):
    es = encoder_set(two_leaf())
    model = small_model(rng, cards=(3,))
    loss, grads = cfm_loss(model, es, np.zeros((4, 1)), np.array([[1], [2], [1], [2]]), rng.random(4),
                           rng.standard_normal((4, 1)))
    assert loss == 0.0 and all(not g.any() for g in grads)


def test_masked_coordinates_do_not_move_the_loss(rng):
    es = encoder_set(two_leaf(), two_leaf())
    model = HighResModel([3, 3], 2, rng, cond_dim=4, time_dim=4, hidden=(5,), schedule_hidden=(3,))
    x_low = np.array([[0, 1], [0, 2], [0, 0]])
    x1 = rng.standard_normal((3, 2))
    t, eps = rng.random(3), rng.standard_normal((3, 2))
    base = cfm_loss(model, es, x1, x_low, t, eps, with_grads=False)
    x1b = x1.copy()
    x1b[0, 1] += 100.0
    x1b[1, 1] -= 7.0
    assert cfm_loss(model, es, x1b, x_low, t, eps, with_grads=False) == base


def test_loss_matches_scalar_oracle(rng):
    es = encoder_set(FeatureEncoder(DT, [Component(-1.0, 0.7, 0.5), Component(1.0, 0.3, 0.5)], np.array([0.0])))
    model = small_model(rng)
    randomize_schedule(model, rng)
    x1 = np.array([[-0.8], [1.3], [0.2]])
    x_low = np.array([[0], [1], [1]])
    t = np.array([0.2, 0.55, 0.9])
    eps = np.array([[0.3], [-1.1], [0.6]])
    loss = cfm_loss(model, es, x1, x_low, t, eps, with_grads=False)

    fw = [w.tolist() for w in model.field.weights]
    fb = [b.tolist() for b in model.field.biases]
    sw = [w.tolist() for w in model.schedule.weights]
    sb = [b.tolist() for b in model.schedule.biases]
    total = 0.0
    for r in range(3):
        z = int(x_low[r, 0])
        c = model.cond_tables[0][z].tolist()
        a, b, raw = mlp_scalar(sw, sb, c)
        d = math.log1p(math.exp(raw)) + D_FLOOR
        g, gd = quintic_scalar(a, b, d, t[r])
        comp = es.encoders[0].components[z]
        x0 = comp.mu + comp.sigma * eps[r, 0]
        xt = g * x1[r, 0] + (1 - g) * x0
        arg = t[r] * TIME_SCALE * TIME_BASE ** 0.0
        f = mlp_scalar(fw, fb, [xt, 0.0, math.sin(arg), math.cos(arg)] + c)[0]
        total += (gd * f - gd * (x1[r, 0] - x0)) ** 2
    assert loss == pytest.approx(total / 3, abs=1e-9)


def test_loss_gradients_match_finite_differences(rng):
    es = encoder_set(two_leaf(), FeatureEncoder(DT, [Component(0.0, 1.0, 1.0)], np.array([])), cats=(3,))
    model = HighResModel([3, 3, 1], 2, rng, cond_dim=4, time_dim=4, hidden=(6, 5), schedule_hidden=(4,))
    randomize_schedule(model, rng)
    n = 10
    x_low = np.column_stack([rng.integers(0, 3, n), rng.choice([0, 0, 1, 2], n), np.zeros(n, dtype=int)])
    x1 = rng.standard_normal((n, 2))
    t, eps = rng.random(n), rng.standard_normal((n, 2))
    _, grads = cfm_loss(model, es, x1, x_low, t, eps)
    h = 1e-4
    for p, g in zip(model.params, grads):
        for idx in [tuple(rng.integers(0, s) for s in p.shape) for _ in range(4)]:
            old = p[idx]
            p[idx] = old + h
            up = cfm_loss(model, es, x1, x_low, t, eps, with_grads=False)
            p[idx] = old - h
            dn = cfm_loss(model, es, x1, x_low, t, eps, with_grads=False)
            p[idx] = old
            fd = (up - dn) / (2 * h)
            assert abs(fd - g[idx]) <= 1e-3 * max(abs(fd), abs(g[idx])) + 1e-8


# sampling

def test_one_euler_step_with_constant_field(rng):
    es = encoder_set(FeatureEncoder(DT, [Component(0.0, 1.0, 1.0)], np.array([])))
    model = small_model(rng, cards=(1,))
    for w in model.field.weights:
        w[...] = 0.0
    n = 6
    eps = np.random.default_rng(9).standard_normal((n, 1))
    target = 4.0
    # constant field k under the linear schedule: one step from x_0 lands on x_0 + k
    model.field.biases[-1][...] = target
    out = sample_highres(model, es, np.zeros((n, 1), dtype=int), steps=1, seed=9)
    assert np.allclose(out, eps + target, atol=1e-12)


def test_sampling_deterministic_and_chunk_free(rng):
    es = encoder_set(two_leaf(), cats=(2,))
    model = HighResModel([2, 3], 1, rng, cond_dim=4, time_dim=4, hidden=(8,))
    x_low = np.column_stack([rng.integers(0, 2, 30), rng.integers(0, 3, 30)])
    a = sample_highres(model, es, x_low, steps=5, seed=1)
    assert np.array_equal(a, sample_highres(model, es, x_low, steps=5, seed=1, chunk=7))
    assert np.all(a[x_low[:, 1] > 0] == 0.0)
    with pytest.raises(ValueError):
        sample_highres(model, es, x_low, steps=0)


def energy_distance(x, y):
    from scipy.stats import energy_distance as ed
    return ed(x, y)


@pytest.fixture(scope="module")
def gaussian_model():
    rng = np.random.default_rng(0)
    data = rng.normal(3.0, 1.0, (20_000, 1))
    es = encoder_set(FeatureEncoder(DT, [Component(0.0, 1.0, 1.0)], np.array([])))
    model = HighResModel([1], 1, rng, cond_dim=8, time_dim=16, hidden=(64, 64), schedule_hidden=(8,))
    opt = Adam(model.params, lr=2e-3)
    ema = Ema(model.params, 0.99)
    steps = 1500
    for step in range(steps):
        idx = rng.integers(0, data.shape[0], 256)
        _, grads = cfm_loss(model, es, data[idx], np.zeros((256, 1), dtype=int), rng.random(256),
                            rng.standard_normal((256, 1)))
        opt.lr = 2e-3 * min(1.0, 2.0 * (1 - step / steps))
        opt.step(model.params, grads)
        ema.update(model.params)
    ema.copy_to(model.params)
    return model, es, data


def test_gaussian_feature_is_learned(gaussian_model):
    model, es, _ = gaussian_model
    out = sample_highres(model, es, np.zeros((10_000, 1), dtype=int), steps=100, seed=4)
    print(f"generated mean {out.mean():.4f} std {out.std():.4f}")
    assert abs(out.mean() - 3.0) < 0.1 and abs(out.std() - 1.0) < 0.1


def test_more_steps_do_not_hurt(gaussian_model):
    model, es, data = gaussian_model
    x_low = np.zeros((4000, 1), dtype=int)
    ref = data[:4000, 0]
    ed = [energy_distance(sample_highres(model, es, x_low, steps=s, seed=6)[:, 0], ref) for s in (10, 100)]
    print(f"energy distance 10 steps {ed[0]:.5f}, 100 steps {ed[1]:.5f}")
    assert ed[1] <= ed[0] + 0.01


# assembly

def test_assemble_mixed():
    from cascadeflow.highres import assemble_mixed

    rng = np.random.default_rng(2)
    raw = np.where(rng.random(500) < 0.3, 0.0, rng.gamma(2.0, 3.0, 500))
    schema = FeatureSchema((Column("x", NUMERICAL),))
    ds = from_columns(schema, {"x": raw})
    pre = fit_preprocessor(ds)
    enc = FeatureEncoder(DT, [Component(0.5, 1.0, 0.7), Component(-0.4, 0.0, 0.3, inflated=True, value=-0.4,
                                                                  raw_value=0.0)], np.array([0.0]),
                         has_missing=True)
    es = encoder_set(enc)
    z = np.array([[0], [1], [2], [0]])
    xt = np.array([[0.3], [5.0], [5.0], [40.0]])
    out, miss = assemble_mixed(z, xt, es, pre)
    assert np.isnan(out[2, 0]) and miss[:, 0].tolist() == [False, False, True, False]
    assert out[1, 0] == 0.0
    assert raw.min() <= out[0, 0] <= raw.max() and out[3, 0] == raw.max()


# transport gap

def standardized(x):
    return (x - x.mean()) / x.std()


def test_gap_single_leaf_is_zero():
    x = standardized(np.random.default_rng(3).normal(size=5000))[:, None]
    es = encoder_set(FeatureEncoder(DT, [Component(0.0, 1.0, 1.0)], np.array([])))
    gap = transport_cost_gap(x, np.zeros_like(x, dtype=bool), es, n_mc=100_000, seed=0)
    assert gap.cost_independent - gap.cost_coupled == 0.0


def test_gap_two_point_masses():
    x = standardized(np.array([0, 0, 0, 10, 10, 10.0]))[:, None]
    es = encoder_set(fit_dt_encoder(x[:, 0], max_depth=1, min_leaf=3))
    gap = transport_cost_gap(x, np.zeros_like(x, dtype=bool), es, n_mc=100_000, seed=0)
    assert gap.cost_coupled == pytest.approx(0.0, abs=1e-5)
    assert gap.cost_independent == pytest.approx(2.0, abs=0.03)


@pytest.mark.parametrize("family", FAMILIES)
def test_gap_is_positive_for_fitted_trees(family):
    x = feature_family(family, 20_000, seed=4)
    schema = FeatureSchema((Column("x", NUMERICAL),))
    ds = from_columns(schema, {"x": x})
    num = fit_preprocessor(ds).apply(ds).num
    es = encoder_set(fit_dt_encoder(num[:, 0]))
    gap = transport_cost_gap(num, np.zeros_like(num, dtype=bool), es, n_mc=100_000, seed=1)
    print(f"{family}: coupled {gap.cost_coupled:.4f} independent {gap.cost_independent:.4f} "
          f"margin {gap.margin_in_se:.1f} se")
    assert gap.margin_in_se > 3
    assert gap.residual_second_moment[0] <= 1 + 0.02 and gap.source_variance[0] <= 1 + 0.02


def test_wasserstein_trace_shape_and_start():
    x = feature_family("bimodal", 5000, seed=5)
    num = standardized(x)[:, None]
    es = encoder_set(fit_dt_encoder(num[:, 0]))
    tr = wasserstein_trace(num, np.zeros_like(num, dtype=bool), es, n_mc=5000, seed=0)
    assert tr["coupled"].shape == (1, 5) and tr["times"][0] == 0.0
    assert tr["coupled"][0, 0] < tr["independent"][0, 0]
    assert tr["coupled"][0, -1] == tr["independent"][0, -1]
