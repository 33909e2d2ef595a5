"""Small numpy MLP with hand-written backprop, Adam, and sinusoidal time features."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import expit

from .errors import NonFiniteGradient, ShapeMismatch

PARAM_FORMAT = "cascadeflow-params"
PARAM_VERSION = 1
TIME_BASE = 10000.0
TIME_SCALE = 100.0


def silu(x: np.ndarray) -> np.ndarray:
    return x * expit(x)


def silu_grad(x: np.ndarray) -> np.ndarray:
    s = expit(x)
    return s * (1.0 + x * (1.0 - s))


class Mlp:
    """Affine layers with SiLU between them and an identity output.

    ``sizes`` lists the widths from input to output, so ``Mlp([4, 8, 2])`` has one
    hidden layer. Weights are stored as (fan_in, fan_out).
    """

    def __init__(self, sizes: Sequence[int], rng: np.random.Generator, zero_last: bool = False):
        if len(sizes) < 2:
            raise ValueError("an Mlp needs at least an input and an output width")
        self.sizes = tuple(int(s) for s in sizes)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for k, (fan_in, fan_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            if zero_last and k == len(self.sizes) - 2:
                w = np.zeros((fan_in, fan_out))
            else:
                bound = np.sqrt(6.0 / fan_in)
                w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
            self.weights.append(w)
            self.biases.append(np.zeros(fan_out))

    @property
    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def n_params(self) -> int:
        return sum(p.size for p in self.params)

    def forward(self, x: np.ndarray, keep: bool = False):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.sizes[0]:
            raise ShapeMismatch(f"expected input width {self.sizes[0]}, got {x.shape[-1]}")
        squeeze = x.ndim == 1
        h = x[None, :] if squeeze else x
        cache = []
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            pre = h @ w + b
            cache.append((h, pre))
            h = pre if k == last else silu(pre)
        out = h[0] if squeeze else h
        return (out, cache) if keep else out

    def backward(self, cache, grad_out: np.ndarray):
        """Return (parameter grads in ``params`` order, input grad)."""
        g = np.asarray(grad_out, dtype=float)
        if g.ndim == 1:
            g = g[None, :]
        if g.shape[-1] != self.sizes[-1] or g.shape[0] != cache[0][0].shape[0]:
            raise ShapeMismatch("upstream gradient does not match the forward batch")
        grads: list[np.ndarray] = []
        last = len(self.weights) - 1
        for k in range(last, -1, -1):
            h, pre = cache[k]
            if k != last:
                g = g * silu_grad(pre)
            grads = [h.T @ g, g.sum(axis=0)] + grads
            g = g @ self.weights[k].T
        return grads, g

    def state(self, prefix: str) -> dict[str, np.ndarray]:
        out = {}
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"{prefix}.{k}.w"] = w
            out[f"{prefix}.{k}.b"] = b
        return out

    def load_state(self, prefix: str, arrays: dict[str, np.ndarray]) -> None:
        for k in range(len(self.weights)):
            self.weights[k][...] = arrays[f"{prefix}.{k}.w"]
            self.biases[k][...] = arrays[f"{prefix}.{k}.b"]


class Adam:
    def __init__(self, params: Sequence[np.ndarray], lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: Sequence[np.ndarray], grads: Sequence[np.ndarray]) -> None:
        """Update ``params`` in place."""
        for g in grads:
            if not np.all(np.isfinite(g)):
                raise NonFiniteGradient("gradient contains NaN or inf")
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class Ema:
    """Exponential moving average of parameters, swapped in for sampling."""

    def __init__(self, params: Sequence[np.ndarray], decay: float = 0.995):
        self.decay = decay
        self.shadow = [p.copy() for p in params]

    def update(self, params: Sequence[np.ndarray]) -> None:
        for s, p in zip(self.shadow, params):
            s *= self.decay
            s += (1.0 - self.decay) * p

    def copy_to(self, params: Sequence[np.ndarray]) -> None:
        for s, p in zip(self.shadow, params):
            p[...] = s


def time_embedding(t, dim: int) -> np.ndarray:
    """Sin/cos features of ``TIME_SCALE * t`` at geometrically spaced frequencies."""
    if dim % 2:
        raise ValueError("time embedding dimension must be even")
    t = np.atleast_1d(np.asarray(t, dtype=float))
    half = dim // 2
    freqs = TIME_SCALE * TIME_BASE ** (-np.arange(half) / half)
    arg = t[:, None] * freqs[None, :]
    return np.concatenate([np.sin(arg), np.cos(arg)], axis=1)


def save_arrays(stem: str | Path, arrays: dict[str, np.ndarray]) -> None:
    """Write ``stem.bin`` (little-endian float64, concatenated) and ``stem.json``."""
    stem = Path(stem)
    manifest = {"format": PARAM_FORMAT, "version": PARAM_VERSION, "arrays": []}
    offset = 0
    chunks = []
    for name, arr in arrays.items():
        a = np.array(arr, dtype="<f8", order="C")  # keeps 0-d shapes
        manifest["arrays"].append({"name": name, "shape": list(a.shape), "offset": offset})
        offset += a.size
        chunks.append(a.tobytes())
    stem.with_suffix(".bin").write_bytes(b"".join(chunks))
    stem.with_suffix(".json").write_text(json.dumps(manifest, indent=1), encoding="utf-8")


def load_arrays(stem: str | Path) -> dict[str, np.ndarray]:
    stem = Path(stem)
    manifest = json.loads(stem.with_suffix(".json").read_text(encoding="utf-8"))
    if manifest.get("format") != PARAM_FORMAT or manifest.get("version") != PARAM_VERSION:
        raise ValueError(f"{stem}: unsupported parameter file format")
    flat = np.frombuffer(stem.with_suffix(".bin").read_bytes(), dtype="<f8")
    out = {}
    for entry in manifest["arrays"]:
        size = int(np.prod(entry["shape"], dtype=np.int64))
        out[entry["name"]] = flat[entry["offset"]:entry["offset"] + size].reshape(entry["shape"]).copy()
    return out
