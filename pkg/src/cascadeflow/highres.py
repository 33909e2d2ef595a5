"""Flow matching for the numerical details x_num given the low-resolution row.

Source draws are coupled to the data through the encoder: x_0 = mu(z) + sigma(z) eps.
The path x_t = gamma_t x_1 + (1 - gamma_t) x_0 uses a per-feature monotone
schedule gamma_t(x_low), a normalized quintic whose derivative is a perfect
square. The network f predicts (x_1 - x_0) so the field is u = gamma_dot * f.
Coordinates whose z is a missing or inflated state are masked throughout.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .encoders import SIGMA_MIN, EncoderSet
from .errors import ShapeMismatch
from .nn import Mlp, time_embedding

D_FLOOR = 1e-3


def softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def quintic(a, b, d, t):
    """f(t) and f'(t) = (a t^2 + b t + d)^2, with f(0) = 0."""
    f = a * a * t ** 5 / 5 + a * b * t ** 4 / 2 + (b * b + 2 * a * d) * t ** 3 / 3 + b * d * t ** 2 + d * d * t
    p = a * t * t + b * t + d
    return f, p * p


def gamma_from_coefficients(a, b, d, t):
    """Normalized schedule gamma = f(t)/f(1) and its time derivative."""
    f, fp = quintic(a, b, d, t)
    f1, _ = quintic(a, b, d, 1.0)
    return f / f1, fp / f1


def _gamma_partials(a, b, d, t):
    """Partial derivatives of (gamma, gamma_dot) with respect to (a, b, d)."""
    f, fp = quintic(a, b, d, t)
    f1, _ = quintic(a, b, d, 1.0)
    g, gd = f / f1, fp / f1
    p = a * t * t + b * t + d
    df = (2 * a * t ** 5 / 5 + b * t ** 4 / 2 + 2 * d * t ** 3 / 3,
          a * t ** 4 / 2 + 2 * b * t ** 3 / 3 + d * t ** 2,
          2 * a * t ** 3 / 3 + b * t ** 2 + 2 * d * t)
    df1 = (2 * a / 5 + b / 2 + 2 * d / 3, a / 2 + 2 * b / 3 + d, 2 * a / 3 + b + 2 * d)
    dp = (t * t, t, 1.0)
    dg = [(x - g * y) / f1 for x, y in zip(df, df1)]
    dgd = [(2 * p * q - gd * y) / f1 for q, y in zip(dp, df1)]
    return dg, dgd


class HighResModel:
    def __init__(self, low_cardinalities, n_num: int, rng: np.random.Generator, cond_dim: int = 64,
                 time_dim: int = 32, hidden=(256, 256, 256), schedule_hidden=(128,)):
        self.low_cardinalities = [int(c) for c in low_cardinalities]
        self.n_num = int(n_num)
        self.cond_dim = cond_dim
        self.time_dim = time_dim
        self.hidden = tuple(hidden)
        self.schedule_hidden = tuple(schedule_hidden)
        scale = 1.0 / np.sqrt(max(1, len(self.low_cardinalities)))
        self.cond_tables = [scale * rng.standard_normal((c, cond_dim)) for c in self.low_cardinalities]
        self.schedule = Mlp([cond_dim, *self.schedule_hidden, 3 * self.n_num], rng, zero_last=True)
        self.field = Mlp([2 * self.n_num + time_dim + cond_dim, *self.hidden, self.n_num], rng)

    @property
    def params(self) -> list[np.ndarray]:
        return self.field.params + self.schedule.params + self.cond_tables

    def condition(self, x_low: np.ndarray) -> np.ndarray:
        x_low = np.asarray(x_low)
        if x_low.ndim != 2 or x_low.shape[1] != len(self.cond_tables):
            raise ShapeMismatch("x_low does not match the model's low-resolution layout")
        c = np.zeros((x_low.shape[0], self.cond_dim))
        for j, tab in enumerate(self.cond_tables):
            c += tab[x_low[:, j]]
        return c

    def coefficients(self, c: np.ndarray, keep: bool = False):
        out, cache = self.schedule.forward(c, keep=True)
        k = self.n_num
        a, b, raw = out[:, :k], out[:, k:2 * k], out[:, 2 * k:]
        d = softplus(raw) + D_FLOOR
        return ((a, b, d), (cache, raw)) if keep else (a, b, d)

    def gamma(self, t, x_low: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        a, b, d = self.coefficients(self.condition(x_low))
        t = np.asarray(t, dtype=float)
        if t.ndim == 1:
            t = t[:, None]
        return gamma_from_coefficients(a, b, d, t)

    def field_input(self, x_t, mask, t, c) -> np.ndarray:
        t = np.broadcast_to(np.asarray(t, dtype=float), (x_t.shape[0],))
        return np.hstack([np.where(mask, 0.0, x_t), mask.astype(float), time_embedding(t, self.time_dim), c])

    def state(self) -> dict[str, np.ndarray]:
        out = {**self.field.state("field"), **self.schedule.state("schedule")}
        for j, tab in enumerate(self.cond_tables):
            out[f"cond.{j}"] = tab
        return out

    def load_state(self, arrays: dict[str, np.ndarray]) -> None:
        self.field.load_state("field", arrays)
        self.schedule.load_state("schedule", arrays)
        for j, tab in enumerate(self.cond_tables):
            tab[...] = arrays[f"cond.{j}"]

    def config(self) -> dict:
        return {
            "low_cardinalities": self.low_cardinalities,
            "n_num": self.n_num,
            "cond_dim": self.cond_dim,
            "time_dim": self.time_dim,
            "hidden": list(self.hidden),
            "schedule_hidden": list(self.schedule_hidden),
        }


def schedule_gamma(model: HighResModel, t, x_low) -> tuple[np.ndarray, np.ndarray]:
    return model.gamma(t, x_low)


def sample_coupled_source(encoders: EncoderSet, z: np.ndarray, eps: np.ndarray):
    """x_0 = mu(z) + sigma(z) eps; special coordinates are 0 and flagged in the mask."""
    z = np.atleast_2d(z)
    eps = np.atleast_2d(eps)
    mu, sd = encoders.source(z)
    mask = encoders.special_mask(z)
    x0 = np.where(mask, 0.0, mu + sd * eps)
    return x0, mask


@dataclass
class PathSample:
    x1: np.ndarray
    z: np.ndarray
    x_low: np.ndarray
    eps: np.ndarray
    t: np.ndarray
    x0: np.ndarray
    xt: np.ndarray
    mask: np.ndarray  # True = excluded (missing or inflated)


def make_path_sample(encoders: EncoderSet, gamma: np.ndarray, x1: np.ndarray, x_low: np.ndarray,
                     t: np.ndarray, eps: np.ndarray) -> PathSample:
    """Point on the guided path using the row's own z (teacher forcing)."""
    x_low = np.atleast_2d(x_low)
    z = x_low[:, len(encoders.cat_cardinalities):]
    x0, mask = sample_coupled_source(encoders, z, eps)
    x1 = np.where(mask, 0.0, np.atleast_2d(x1))
    xt = gamma * x1 + (1.0 - gamma) * x0
    # exact endpoints regardless of rounding in the blend
    xt = np.where(gamma == 0.0, x0, np.where(gamma == 1.0, x1, xt))
    return PathSample(x1, z, x_low, np.atleast_2d(eps), np.asarray(t, dtype=float), x0, xt, mask)


def conditional_vector_field(gamma, gamma_dot, x1, xt):
    """Field that generates the path, written in terms of x_t (singular at gamma = 1)."""
    return gamma_dot / (1.0 - gamma) * (x1 - xt)


def cfm_target(gamma_dot, x1, x0):
    return gamma_dot * (x1 - x0)


def cfm_loss(model: HighResModel, encoders: EncoderSet, x1: np.ndarray, x_low: np.ndarray,
             t: np.ndarray, eps: np.ndarray, with_grads: bool = True):
    """Masked mean of (gamma_dot f - gamma_dot (x_1 - x_0))^2 and gradients aligned with ``params``.

    Gradients reach the field network, the schedule network (through gamma in
    x_t and gamma_dot in both terms) and the conditioning tables.
    """
    x_low = np.asarray(x_low)
    n = x_low.shape[0]
    t = np.asarray(t, dtype=float).reshape(n)
    c = model.condition(x_low)
    (a, b, d), (s_cache, raw) = model.coefficients(c, keep=True)
    tt = t[:, None]
    g, gd = gamma_from_coefficients(a, b, d, tt)
    ps = make_path_sample(encoders, g, x1, x_low, t, eps)
    inp = model.field_input(ps.xt, ps.mask, t, c)
    f, f_cache = model.field.forward(inp, keep=True)
    delta = ps.x1 - ps.x0
    live = ~ps.mask
    count = int(live.sum())
    resid = np.where(live, gd * (f - delta), 0.0)
    loss = float((resid ** 2).sum() / count) if count else 0.0
    if not with_grads:
        return loss
    if not count:
        return loss, [np.zeros_like(p) for p in model.params]

    g_r = 2.0 * resid / count
    g_f = g_r * gd
    g_gd = g_r * (f - delta)
    field_grads, g_in = model.field.backward(f_cache, g_f)
    k = model.n_num
    g_xt = np.where(live, g_in[:, :k], 0.0)
    g_g = g_xt * delta
    g_c = g_in[:, -model.cond_dim:].copy()

    dg, dgd = _gamma_partials(a, b, d, tt)
    g_a = g_g * dg[0] + g_gd * dgd[0]
    g_b = g_g * dg[1] + g_gd * dgd[1]
    g_d = g_g * dg[2] + g_gd * dgd[2]
    g_raw = g_d * expit(raw)
    sched_grads, g_c2 = model.schedule.backward(s_cache, np.hstack([g_a, g_b, g_raw]))
    g_c += g_c2

    cond_grads = []
    for j, tab in enumerate(model.cond_tables):
        gt = np.zeros_like(tab)
        np.add.at(gt, x_low[:, j], g_c)
        cond_grads.append(gt)
    return loss, field_grads + sched_grads + cond_grads


def sample_highres(model: HighResModel, encoders: EncoderSet, x_low: np.ndarray, steps: int = 200,
                   seed: int = 0, chunk: int = 4096) -> np.ndarray:
    """Euler integration of dx = gamma_dot(x_low) f(x_t, x_low, t) dt from the coupled source.

    Masked coordinates stay at 0. The source noise is drawn for all rows up
    front, so the output does not depend on ``chunk``.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    x_low = np.asarray(x_low)
    n = x_low.shape[0]
    k = model.n_num
    rng = np.random.default_rng(seed)
    eps = rng.standard_normal((n, k))
    z = x_low[:, len(encoders.cat_cardinalities):]
    x0, mask = sample_coupled_source(encoders, z, eps)
    out = np.zeros((n, k))
    h = 1.0 / steps
    for s in range(0, n, chunk):
        sl = slice(s, s + chunk)
        c = model.condition(x_low[sl])
        a, b, d = model.coefficients(c)
        f1 = quintic(a, b, d, 1.0)[0]
        x = x0[sl].copy()
        m = mask[sl]
        for step in range(steps):
            t = step * h
            p = a * t * t + b * t + d
            gd = p * p / f1
            f = model.field.forward(model.field_input(x, m, t, c))
            x = np.where(m, 0.0, x + h * gd * f)
        out[sl] = x
    return out


def assemble_mixed(z: np.ndarray, x_tilde: np.ndarray, encoders: EncoderSet, preprocessor):
    """Original-scale numerical values and a missing mask from (z, x_tilde)."""
    z = np.atleast_2d(z)
    x_tilde = np.atleast_2d(x_tilde)
    n, k = z.shape
    out = np.zeros((n, k))
    missing = np.zeros((n, k), dtype=bool)
    for i, enc in enumerate(encoders.encoders):
        zi = z[:, i]
        cont = np.ones(n, dtype=bool)
        if enc.has_missing:
            hit = zi == enc.missing_category
            missing[:, i] = hit
            cont &= ~hit
        for kk in enc.inflated_categories:
            comp = enc.components[kk]
            hit = zi == kk
            v = comp.raw_value
            if v is None:
                v = float(preprocessor.invert_column(i, np.array([comp.value]))[0])
            out[hit, i] = v
            cont &= ~hit
        if cont.any():
            out[cont, i] = preprocessor.invert_column(i, x_tilde[cont, i])
    out[missing] = np.nan
    return out, missing


@dataclass(frozen=True)
class TransportGap:
    cost_coupled: float
    cost_independent: float
    gap_se: float  # standard error of the paired difference
    residual_second_moment: np.ndarray  # per feature E[(x_1 - mu_z)^2]
    source_variance: np.ndarray  # per feature E[sigma_z^2]
    per_feature_coupled: np.ndarray
    per_feature_independent: np.ndarray

    @property
    def margin_in_se(self) -> float:
        gap = self.cost_independent - self.cost_coupled
        return gap / self.gap_se if self.gap_se > 0 else float("inf")


def transport_cost_gap(num: np.ndarray, missing: np.ndarray, encoders: EncoderSet, n_mc: int = 100_000,
                       seed: int = 0) -> TransportGap:
    """Monte-Carlo E||x_1 - x_0||^2 for the encoder coupling versus x_0 ~ N(0, I).

    ``num`` is on the encoder's (standardized) scale. Every observed coordinate
    takes part, inflated ones included: their source is the component's point
    mass widened to SIGMA_MIN, so both costs cover the same coordinates. Both
    couplings share each draw of (x_1, eps), giving a paired difference.
    """
    rng = np.random.default_rng(seed)
    k = len(encoders.encoders)
    coupled = np.zeros(k)
    indep = np.zeros(k)
    resid2 = np.zeros(k)
    var_src = np.zeros(k)
    diff_var = 0.0
    for i, enc in enumerate(encoders.encoders):
        x = num[~missing[:, i], i]
        x1 = x[rng.integers(0, x.size, n_mc)]
        eps = rng.standard_normal(n_mc)
        comp = enc.assign(x1)
        mu = np.array([c.mu for c in enc.components])[comp]
        sd = np.maximum(np.array([c.sigma for c in enc.components]), SIGMA_MIN)[comp]
        cc = (x1 - mu - sd * eps) ** 2
        ci = (x1 - eps) ** 2
        coupled[i], indep[i] = cc.mean(), ci.mean()
        resid2[i] = np.mean((x1 - mu) ** 2)
        var_src[i] = np.mean(sd ** 2)
        diff_var += (ci - cc).var(ddof=1) / n_mc
    return TransportGap(float(coupled.sum()), float(indep.sum()), float(np.sqrt(diff_var)),
                        resid2, var_src, coupled, indep)


TRACE_TIMES = (0.0, 0.25, 0.5, 0.75, 1.0)


def wasserstein_trace(num: np.ndarray, missing: np.ndarray, encoders: EncoderSet, n_mc: int = 10_000,
                      seed: int = 0, times=TRACE_TIMES) -> dict:
    """1-D Wasserstein distance between p_t and the data, per feature and time.

    x_t = t x_1 + (1 - t) x_0 on the straight path, with x_0 from the encoder
    coupling or from N(0, 1). The reference sample is every observed value.
    """
    from scipy.stats import wasserstein_distance

    rng = np.random.default_rng(seed)
    coupled = np.zeros((len(encoders.encoders), len(times)))
    indep = np.zeros_like(coupled)
    for i, enc in enumerate(encoders.encoders):
        data = num[~missing[:, i], i]
        x1 = data[rng.integers(0, data.size, n_mc)]
        eps = rng.standard_normal(n_mc)
        comp = enc.assign(x1)
        mu = np.array([c.mu for c in enc.components])[comp]
        sd = np.maximum(np.array([c.sigma for c in enc.components]), SIGMA_MIN)[comp]
        x0c, x0i = mu + sd * eps, eps
        for k, t in enumerate(times):
            coupled[i, k] = wasserstein_distance(t * x1 + (1 - t) * x0c, data)
            indep[i, k] = wasserstein_distance(t * x1 + (1 - t) * x0i, data)
    return {"times": list(times), "coupled": coupled, "independent": indep}
