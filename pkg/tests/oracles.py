"""Independent slow re-implementations used as test oracles.

These deliberately avoid the package's code paths: scalar loops, mpmath, or
brute-force enumeration.
"""
from __future__ import annotations

import math

import mpmath

mpmath.mp.dps = 40


def normal_quantile(u: float) -> float:
    return float(mpmath.sqrt(2) * mpmath.erfinv(2 * mpmath.mpf(u) - 1))


def plotting_positions(train: list[float]) -> dict[float, float]:
    """Mean 1-based rank / (n + 1) per distinct value."""
    xs = sorted(train)
    n = len(xs)
    out = {}
    for v in set(xs):
        ranks = [i + 1 for i, x in enumerate(xs) if x == v]
        out[v] = sum(ranks) / len(ranks) / (n + 1)
    return out


def quantile_transform(train: list[float], x: float) -> float:
    pos = plotting_positions(train)
    zs = [normal_quantile(pos[v]) for v in train]
    mean = sum(zs) / len(zs)
    std = math.sqrt(sum((z - mean) ** 2 for z in zs) / len(zs))
    return (normal_quantile(pos[x]) - mean) / std


def ks_bruteforce(a, b) -> float:
    best = 0.0
    for p in list(a) + list(b):
        fa = sum(1 for v in a if v <= p) / len(a)
        fb = sum(1 for v in b if v <= p) / len(b)
        best = max(best, abs(fa - fb))
    return best


def auc_pairwise(labels, scores) -> float:
    pos = [s for y, s in zip(labels, scores) if y]
    neg = [s for y, s in zip(labels, scores) if not y]
    if not pos or not neg:
        return 0.5
    total = 0.0
    for p in pos:
        for q in neg:
            total += 1.0 if p > q else 0.5 if p == q else 0.0
    return total / (len(pos) * len(neg))


def silu(x: float) -> float:
    return x / (1.0 + math.exp(-x))


def mlp_scalar(weights, biases, x):
    """Forward pass with explicit loops; weights[k][i][j] maps input i to output j."""
    h = list(x)
    for k, (w, b) in enumerate(zip(weights, biases)):
        out = []
        for j in range(len(b)):
            acc = b[j]
            for i in range(len(h)):
                acc += h[i] * w[i][j]
            out.append(acc)
        h = out if k == len(weights) - 1 else [silu(v) for v in out]
    return h


def quintic_scalar(a: float, b: float, d: float, t: float) -> tuple[float, float]:
    """gamma and gamma_dot by integrating (a s^2 + b s + d)^2 symbolically with mpmath."""
    a, b, d, t = (mpmath.mpf(v) for v in (a, b, d, t))

    def f(s):
        return mpmath.quad(lambda u: (a * u * u + b * u + d) ** 2, [0, s])

    f1 = f(1)
    return float(f(t) / f1), float((a * t * t + b * t + d) ** 2 / f1)


def jsd_scalar(p, q) -> float:
    out = 0.0
    for pi, qi in zip(p, q):
        m = 0.5 * (pi + qi)
        if pi > 0:
            out += 0.5 * pi * math.log(pi / m)
        if qi > 0:
            out += 0.5 * qi * math.log(qi / m)
    return out


def log_softmax_scalar(logits):
    m = max(logits)
    s = sum(math.exp(v - m) for v in logits)
    return [v - m - math.log(s) for v in logits]
