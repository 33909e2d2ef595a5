"""Per-feature low-resolution encoders.

Each numerical feature gets a set of Gaussian components. A value is mapped to
the index of its component (a leaf interval for the tree encoder, the weighted
log-likelihood argmax for the mixture encoder). Components whose variance
collapses are point masses ("inflated" values); missing values get their own
category after the components.
"""
from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .data import Dataset
from .errors import EmptyInput, SpecialCategoryHasNoSource

EPS_VAR = 1e-10
SIGMA_MIN = 1e-3
MIN_LEAF = 32
MAX_CANDIDATES = 255
MIN_GAIN = 1e-6
# variance floor inside the split score; far below EPS_VAR so a point mass with a
# single near-zero straggler still gains from cutting the straggler off
SPLIT_VAR_FLOOR = 1e-30
EM_MAX_ITER = 200
EM_TOL = 1e-6
EM_REG = 1e-6

DT = "dt"
GMM = "gmm"


class EMNotConverged(UserWarning):
    pass


@dataclass
class Component:
    mu: float
    sigma: float
    weight: float
    inflated: bool = False
    value: float | None = None  # point mass location on the encoder's (transformed) scale
    raw_value: float | None = None  # same point mass on the original data scale

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("mu", "sigma", "weight", "inflated", "value", "raw_value")}


@dataclass
class FeatureEncoder:
    kind: str
    components: list[Component]
    thresholds: np.ndarray = field(default_factory=lambda: np.zeros(0))  # DT only, sorted
    has_missing: bool = False

    @property
    def n_components(self) -> int:
        return len(self.components)

    @property
    def n_categories(self) -> int:
        return self.n_components + int(self.has_missing)

    @property
    def missing_category(self) -> int | None:
        return self.n_components if self.has_missing else None

    @property
    def inflated_categories(self) -> list[int]:
        return [k for k, c in enumerate(self.components) if c.inflated]

    def intervals(self) -> list[tuple[float, float]]:
        edges = np.concatenate([[-np.inf], self.thresholds, [np.inf]])
        return list(zip(edges[:-1], edges[1:]))

    def special_mask(self) -> np.ndarray:
        """Boolean per category: True for inflated components and the missing category."""
        out = np.zeros(self.n_categories, dtype=bool)
        out[self.inflated_categories] = True
        if self.has_missing:
            out[-1] = True
        return out

    def assign(self, x: np.ndarray) -> np.ndarray:
        """Component index ignoring inflation flags (interval lookup or mixture argmax)."""
        x = np.asarray(x, dtype=float)
        if self.kind == DT:
            return np.searchsorted(self.thresholds, x, side="right")
        mu = np.array([c.mu for c in self.components])
        var = np.maximum(np.array([c.sigma for c in self.components]) ** 2, EPS_VAR)
        logw = np.log(np.maximum([c.weight for c in self.components], 1e-300))
        score = logw - 0.5 * np.log(2 * np.pi * var) - 0.5 * (x[:, None] - mu) ** 2 / var
        return np.argmax(score, axis=1)

    def encode(self, x) -> np.ndarray:
        """Category per value; NaN maps to the missing category."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        z = np.zeros(x.shape, dtype=np.int64)
        miss = np.isnan(x)
        if miss.any():
            if not self.has_missing:
                raise ValueError("encoder was fitted without a missing category")
            z[miss] = self.missing_category
        obs = ~miss
        xo = x[obs]
        if self.kind == DT:
            zo = self.assign(xo)
        else:
            live = [k for k, c in enumerate(self.components) if not c.inflated]
            if live:
                sub = replace(self, components=[self.components[k] for k in live])
                zo = np.asarray(live)[sub.assign(xo)] if xo.size else np.zeros(0, np.int64)
            else:
                zo = self.assign(xo)
        for k in self.inflated_categories:
            zo[xo == self.components[k].value] = k
        z[obs] = zo
        return z

    def source_params(self, z: int) -> tuple[float, float]:
        z = int(z)
        if z == self.missing_category or self.components[z].inflated:
            raise SpecialCategoryHasNoSource(f"category {z} is a missing or inflated state")
        c = self.components[z]
        return c.mu, max(c.sigma, SIGMA_MIN)

    def source_table(self) -> tuple[np.ndarray, np.ndarray]:
        """(mu, sigma) per category; special categories carry (0, 0)."""
        mu = np.zeros(self.n_categories)
        sd = np.zeros(self.n_categories)
        for k, c in enumerate(self.components):
            if not c.inflated:
                mu[k], sd[k] = c.mu, max(c.sigma, SIGMA_MIN)
        return mu, sd

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "components": [c.to_dict() for c in self.components],
            "thresholds": self.thresholds.tolist(),
            "has_missing": self.has_missing,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureEncoder":
        return cls(
            kind=d["kind"],
            components=[Component(**c) for c in d["components"]],
            thresholds=np.asarray(d["thresholds"], dtype=float),
            has_missing=bool(d["has_missing"]),
        )


def _gauss_loglik(n, var):
    return -0.5 * n * (np.log(2 * np.pi * np.maximum(var, SPLIT_VAR_FLOOR)) + 1.0)


def _candidate_positions(xs: np.ndarray, min_leaf: int) -> np.ndarray:
    """Split positions p (left = xs[:p]) at distinct-value boundaries.

    When there are too many, rank-spaced targets are snapped to the nearest
    boundary on each side, so both edges of a heavy tie block stay candidates.
    """
    n = xs.size
    pos = np.flatnonzero(xs[1:] > xs[:-1]) + 1
    pos = pos[(pos >= min_leaf) & (pos <= n - min_leaf)]
    if pos.size > MAX_CANDIDATES:
        targets = np.linspace(pos[0], pos[-1], MAX_CANDIDATES // 2)
        hi = np.minimum(np.searchsorted(pos, targets), pos.size - 1)
        lo = np.maximum(hi - 1, 0)
        pos = np.unique(np.concatenate([pos[lo], pos[hi]]))
    return pos


def _segment_loglik(c1, c2, a, b):
    """Gaussian MLE log-likelihood of sorted values a:b from prefix sums."""
    m = b - a
    mean = (c1[b] - c1[a]) / m
    var = np.maximum((c2[b] - c2[a]) / m - mean ** 2, 0.0)
    return _gauss_loglik(m, var)


def best_gaussian_split(xs: np.ndarray, min_leaf: int) -> tuple[float, int]:
    """Best log-likelihood gain over split positions of sorted ``xs``; (-inf, -1) if none.

    Tie blocks of at least ``min_leaf`` identical values (point masses) are
    exempt from the child-size limit, and an interior block is scored by the
    gain of cutting at both of its edges, so it gets isolated even when the
    continuous values around it are sparse.
    """
    n = xs.size
    bounds = np.flatnonzero(xs[1:] > xs[:-1]) + 1
    starts = np.concatenate([[0], bounds])
    ends = np.concatenate([bounds, [n]])
    heavy = (ends - starts >= min_leaf) & (ends - starts < n)
    edges = np.concatenate([starts[heavy], ends[heavy]])
    edges = edges[(edges > 0) & (edges < n)]
    pos = np.union1d(_candidate_positions(xs, min_leaf), edges).astype(np.int64)
    if pos.size == 0:
        return -np.inf, -1
    c1 = np.concatenate([[0.0], np.cumsum(xs)])
    c2 = np.concatenate([[0.0], np.cumsum(xs * xs)])
    parent = _segment_loglik(c1, c2, 0, n)
    gain = _segment_loglik(c1, c2, 0, pos) + _segment_loglik(c1, c2, pos, n) - parent
    k = int(np.argmax(gain))
    best, best_pos = float(gain[k]), int(pos[k])
    inner = heavy & (starts > 0) & (ends < n)
    for a, b in zip(starts[inner], ends[inner]):
        g = float(_segment_loglik(c1, c2, 0, a) + _segment_loglik(c1, c2, a, b)
                  + _segment_loglik(c1, c2, b, n) - parent)
        if g > best:
            best, best_pos = g, int(a if a >= n - b else b)
    return best, best_pos


def fit_dt_encoder(values, max_depth: int = 8, min_leaf: int = MIN_LEAF) -> FeatureEncoder:
    """Distributional regression tree with Gaussian leaves.

    Greedy binary splitting on value thresholds (midpoints between consecutive
    distinct values) maximizing the gain in Gaussian log-likelihood with MLE
    parameters per child.
    """
    xs = np.sort(np.asarray(values, dtype=float))
    if xs.size < 2:
        raise EmptyInput("the tree encoder needs at least 2 values")
    if max_depth < 0:
        raise ValueError("max_depth must be >= 0")
    leaves: list[np.ndarray] = []
    thresholds: list[float] = []

    def grow(seg: np.ndarray, depth: int) -> None:
        if depth < max_depth and seg.size >= min_leaf:
            gain, p = best_gaussian_split(seg, min_leaf)
            if p > 0 and gain >= MIN_GAIN:
                grow(seg[:p], depth + 1)
                thresholds.append(0.5 * (seg[p - 1] + seg[p]))
                grow(seg[p:], depth + 1)
                return
        leaves.append(seg)

    grow(xs, 0)
    n = xs.size
    comps = [Component(float(s.mean()), float(s.std()), s.size / n) for s in leaves]
    enc = FeatureEncoder(DT, comps, np.asarray(thresholds, dtype=float))
    return detect_inflated(enc, xs)


def detect_inflated(encoder: FeatureEncoder, values, eps_var: float = EPS_VAR) -> FeatureEncoder:
    """Flag near-zero-variance components whose training values are all identical."""
    x = np.asarray(values, dtype=float)
    x = x[~np.isnan(x)]
    z = encoder.assign(x)
    comps = []
    for k, c in enumerate(encoder.components):
        c = replace(c)
        if c.sigma ** 2 < eps_var:
            members = x[z == k]
            if members.size and np.all(members == members[0]):
                c.inflated, c.value, c.sigma, c.mu = True, float(members[0]), 0.0, float(members[0])
            elif members.size:
                c.sigma = float(members.std())
        comps.append(c)
    return replace(encoder, components=comps)


def _kmeans_pp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = [x[rng.integers(x.size)]]
    d2 = (x - centers[0]) ** 2
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            break
        c = x[rng.choice(x.size, p=d2 / total)]
        centers.append(c)
        d2 = np.minimum(d2, (x - c) ** 2)
    return np.asarray(centers)


def _log_joint(x, w, mu, var):
    return np.log(np.maximum(w, 1e-300)) - 0.5 * np.log(2 * np.pi * var) - 0.5 * (x[:, None] - mu) ** 2 / var


def _em(x, w, mu, var, max_iter=EM_MAX_ITER, tol=EM_TOL):
    prev = -np.inf
    converged = False
    for _ in range(max_iter):
        lj = _log_joint(x, w, mu, var)
        norm = logsumexp(lj, axis=1)
        ll = norm.mean()
        resp = np.exp(lj - norm[:, None])
        nk = resp.sum(axis=0) + 1e-12
        w = nk / x.size
        mu = resp.T @ x / nk
        var = (resp * (x[:, None] - mu) ** 2).sum(axis=0) / nk + EM_REG
        if abs(ll - prev) < tol:
            converged = True
            break
        prev = ll
    return w, mu, var, converged


def _mixture_loglik(x, w, mu, var) -> float:
    return float(logsumexp(_log_joint(x, w, mu, var), axis=1).sum())


def _bic(x, w, mu, var) -> float:
    k = w.size
    return -2.0 * _mixture_loglik(x, w, mu, var) + (3 * k - 1) * math.log(x.size)


def _merge_by_bic(x, w, mu, var, refine_iter: int = 30):
    """Greedily merge mean-adjacent components while BIC improves.

    Candidates are ranked by the BIC of the moment-matched merge; each is
    polished by a short EM run before being compared with the current fit.
    """
    order = np.argsort(mu, kind="stable")
    w, mu, var = w[order], mu[order], var[order]
    best = _bic(x, w, mu, var)
    while w.size > 1:
        cands = []
        for i in range(w.size - 1):
            wi, wj = w[i], w[i + 1]
            wm = wi + wj
            mm = (wi * mu[i] + wj * mu[i + 1]) / wm
            vm = (wi * (var[i] + mu[i] ** 2) + wj * (var[i + 1] + mu[i + 1] ** 2)) / wm - mm ** 2
            nw = np.concatenate([w[:i], [wm], w[i + 2:]])
            nmu = np.concatenate([mu[:i], [mm], mu[i + 2:]])
            nvar = np.concatenate([var[:i], [vm], var[i + 2:]])
            cands.append((_bic(x, nw, nmu, nvar), i, nw, nmu, nvar))
        cands.sort(key=lambda c: (c[0], c[1]))
        for _, _, nw, nmu, nvar in cands:
            nw, nmu, nvar, _ = _em(x, nw, nmu, nvar, max_iter=refine_iter)
            score = _bic(x, nw, nmu, nvar)
            if score < best:
                order = np.argsort(nmu, kind="stable")
                best, w, mu, var = score, nw[order], nmu[order], nvar[order]
                break
        else:
            break
    return w, mu, var


def fit_gmm_encoder(values, max_components: int = 30, seed: int = 0) -> FeatureEncoder:
    """Finite Gaussian mixture fitted by EM, then reduced to a hard clustering.

    k-means++ seeds the means. After EM, components below weight
    ``1/(10*max_components)`` are pruned, mean-adjacent components are merged
    while BIC improves (standing in for a sparse Dirichlet-process prior), and
    EM is re-run on the survivors. Values are hard-assigned by the weighted
    log-likelihood argmax and each cluster's mean/std is recomputed empirically.
    """
    x = np.asarray(values, dtype=float)
    x = x[~np.isnan(x)]
    if x.size < 2:
        raise EmptyInput("the mixture encoder needs at least 2 values")
    if max_components < 1:
        raise ValueError("max_components must be >= 1")
    rng = np.random.default_rng(seed)
    k = min(max_components, np.unique(x).size)
    mu = np.sort(_kmeans_pp(x, k, rng))
    k = mu.size
    near = np.argmin(np.abs(x[:, None] - mu[None, :]), axis=1)
    w = np.bincount(near, minlength=k) / x.size
    var = np.array([x[near == j].var() if np.any(near == j) else x.var() for j in range(k)]) + EM_REG
    w, mu, var, ok = _em(x, w, mu, var)

    keep = w >= 1.0 / (10 * max_components)
    if not keep.any():
        keep[np.argmax(w)] = True
    w, mu, var = w[keep] / w[keep].sum(), mu[keep], var[keep]
    w, mu, var = _merge_by_bic(x, w, mu, var)
    w, mu, var, ok = _em(x, w, mu, var)
    if not ok:
        warnings.warn("EM did not converge; keeping the last iterate", EMNotConverged, stacklevel=2)

    z = np.argmax(_log_joint(x, w, mu, var), axis=1)
    comps = []
    for j in range(w.size):
        members = x[z == j]
        if members.size:
            comps.append(Component(float(members.mean()), float(members.std()), members.size / x.size))
    comps.sort(key=lambda c: c.mu)
    enc = detect_inflated(FeatureEncoder(GMM, comps), x)
    live = [c for c in enc.components if not c.inflated]
    total = sum(c.weight for c in live)
    for c in live:
        c.weight /= total
    return enc


@dataclass
class EncoderSet:
    """One encoder per numerical feature plus the resulting low-resolution layout."""

    encoders: list[FeatureEncoder]
    cat_cardinalities: list[int]

    @property
    def num_cardinalities(self) -> list[int]:
        return [e.n_categories for e in self.encoders]

    @property
    def low_cardinalities(self) -> list[int]:
        return list(self.cat_cardinalities) + self.num_cardinalities

    def encode(self, num: np.ndarray, missing: np.ndarray) -> np.ndarray:
        z = np.zeros(num.shape, dtype=np.int64)
        for i, enc in enumerate(self.encoders):
            col = np.where(missing[:, i], np.nan, num[:, i])
            z[:, i] = enc.encode(col)
        return z

    def low_resolution(self, ds: Dataset) -> np.ndarray:
        """x_low = (x_cat, z) for a preprocessed dataset."""
        return np.hstack([ds.cat, self.encode(ds.num, ds.missing)])

    def special_mask(self, z: np.ndarray) -> np.ndarray:
        out = np.zeros(z.shape, dtype=bool)
        for i, enc in enumerate(self.encoders):
            out[:, i] = enc.special_mask()[z[:, i]]
        return out

    def source(self, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        mu = np.zeros(z.shape)
        sd = np.zeros(z.shape)
        for i, enc in enumerate(self.encoders):
            m, s = enc.source_table()
            mu[:, i], sd[:, i] = m[z[:, i]], s[z[:, i]]
        return mu, sd

    def to_dict(self) -> dict:
        return {
            "cat_cardinalities": list(self.cat_cardinalities),
            "encoders": [e.to_dict() for e in self.encoders],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EncoderSet":
        return cls([FeatureEncoder.from_dict(e) for e in d["encoders"]], list(d["cat_cardinalities"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()


def fit_encoders(
    ds: Dataset,
    raw: Dataset | None = None,
    kind: str = DT,
    max_depth: int = 8,
    max_components: int = 30,
    min_leaf: int = MIN_LEAF,
    seed: int = 0,
) -> EncoderSet:
    """Fit one encoder per numerical column of a preprocessed dataset.

    ``raw`` (same rows, original scale) lets inflated components remember their
    exact original value for emission.
    """
    encoders = []
    for i, _ in enumerate(ds.schema.num_columns):
        obs = ~ds.missing[:, i]
        x = ds.num[obs, i]
        if kind == DT:
            enc = fit_dt_encoder(x, max_depth=max_depth, min_leaf=min_leaf)
        elif kind == GMM:
            enc = fit_gmm_encoder(x, max_components=max_components, seed=seed + i)
        else:
            raise ValueError(f"unknown encoder kind {kind!r}")
        enc.has_missing = bool((~obs).any())
        if raw is not None:
            z = enc.encode(x)
            rx = raw.num[obs, i]
            for k in enc.inflated_categories:
                enc.components[k].raw_value = float(rx[z == k][0])
        encoders.append(enc)
    return EncoderSet(encoders, list(ds.schema.cardinalities))


def reconstruction_error(enc: FeatureEncoder, x: Sequence[float]) -> float:
    """Mean squared distance of values to their component means."""
    x = np.asarray(x, dtype=float)
    mu = np.array([c.mu for c in enc.components])
    return float(np.mean((x - mu[enc.assign(x)]) ** 2))
