"""Categorical generator for the low-resolution row (x_cat, z).

Each column's categories live on the unit sphere of a small embedding space.
Training corrupts the true embeddings with Gaussian noise of scale sigma(t) and
asks an MLP for per-column class probabilities (cross-entropy). Sampling starts
from wide noise and follows the probability-flow ODE toward the
probability-weighted mean embedding ("score interpolation"), then takes the
argmax class.
"""
from __future__ import annotations

import numpy as np
from scipy.special import log_softmax, softmax

from .errors import ShapeMismatch
from .nn import Mlp, time_embedding

SIGMA_MIN = 0.02
SIGMA_MAX = 10.0


def sigma(t) -> np.ndarray:
    """Geometric noise level: SIGMA_MAX at t=0 down to SIGMA_MIN at t=1."""
    t = np.asarray(t, dtype=float)
    return SIGMA_MAX ** (1.0 - t) * SIGMA_MIN ** t


def _normalize_rows(e: np.ndarray) -> np.ndarray:
    return e / np.linalg.norm(e, axis=1, keepdims=True)


class LowResModel:
    def __init__(self, cardinalities, rng: np.random.Generator, emb_dim: int = 16,
                 time_dim: int = 32, hidden=(256, 256, 256)):
        self.cardinalities = [int(c) for c in cardinalities]
        self.emb_dim = emb_dim
        self.time_dim = time_dim
        self.hidden = tuple(hidden)
        self.embeddings = [_normalize_rows(rng.standard_normal((c, emb_dim))) for c in self.cardinalities]
        width = len(self.cardinalities) * emb_dim + time_dim
        self.trunk = Mlp([width, *self.hidden, sum(self.cardinalities)], rng)
        self._offsets = np.concatenate([[0], np.cumsum(self.cardinalities)])

    @property
    def n_columns(self) -> int:
        return len(self.cardinalities)

    @property
    def params(self) -> list[np.ndarray]:
        return self.trunk.params + self.embeddings

    def renormalize(self) -> None:
        for e in self.embeddings:
            e[...] = _normalize_rows(e)

    def _input(self, x: np.ndarray, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        s = sigma(t)
        c_in = 1.0 / np.sqrt(s ** 2 + 1.0 / self.emb_dim)
        flat = x.reshape(x.shape[0], -1) * c_in[:, None]
        return np.hstack([flat, time_embedding(t, self.time_dim)]), c_in

    def logits(self, x: np.ndarray, t, keep: bool = False):
        """Per-column logits for noisy embeddings ``x`` of shape (n, columns, emb_dim)."""
        t = np.broadcast_to(np.asarray(t, dtype=float), (x.shape[0],))
        inp, c_in = self._input(x, t)
        out, cache = self.trunk.forward(inp, keep=True)
        cols = [out[:, a:b] for a, b in zip(self._offsets[:-1], self._offsets[1:])]
        return (cols, (cache, c_in)) if keep else cols

    def probabilities(self, x: np.ndarray, t) -> list[np.ndarray]:
        return [softmax(lg, axis=1) for lg in self.logits(x, t)]

    def noisy(self, cats: np.ndarray, t: np.ndarray, noise: np.ndarray) -> np.ndarray:
        clean = np.stack([e[cats[:, j]] for j, e in enumerate(self.embeddings)], axis=1)
        return clean + sigma(t)[:, None, None] * noise

    def loss_and_grads(self, cats: np.ndarray, t: np.ndarray, noise: np.ndarray):
        """Mean per-column cross-entropy and gradients aligned with ``params``.

        Embedding gradients flow through the clean term only.
        """
        cats = np.asarray(cats)
        n = cats.shape[0]
        if cats.shape[1] != self.n_columns or noise.shape != (n, self.n_columns, self.emb_dim):
            raise ShapeMismatch("batch does not match the model's column layout")
        x = self.noisy(cats, t, noise)
        cols, (cache, c_in) = self.logits(x, t, keep=True)
        loss = 0.0
        grad_out = []
        rows = np.arange(n)
        scale = 1.0 / (n * self.n_columns)
        for j, lg in enumerate(cols):
            logp = log_softmax(lg, axis=1)
            loss -= logp[rows, cats[:, j]].sum()
            g = np.exp(logp)
            g[rows, cats[:, j]] -= 1.0
            grad_out.append(g * scale)
        loss *= scale
        trunk_grads, g_in = self.trunk.backward(cache, np.hstack(grad_out))
        k = self.n_columns * self.emb_dim
        g_x = (g_in[:, :k] * c_in[:, None]).reshape(n, self.n_columns, self.emb_dim)
        emb_grads = []
        for j, e in enumerate(self.embeddings):
            ge = np.zeros_like(e)
            np.add.at(ge, cats[:, j], g_x[:, j, :])
            emb_grads.append(ge)
        return float(loss), trunk_grads + emb_grads

    def sample(self, n: int, steps: int = 200, seed: int = 0, check: bool = False,
               chunk: int = 4096) -> np.ndarray:
        """Euler integration of the probability-flow ODE in sigma, then argmax classes.

        With u = (mu_t - x) / sigma(t)^2, mu_t the probability-weighted mean of
        the (cached, unit-norm) category embeddings, each step on the uniform
        t-grid moves x by (sigma(t_k) - sigma(t_k+1)) * sigma(t_k) * u, i.e. a
        contraction toward mu_t by the factor 1 - sigma(t_k+1)/sigma(t_k). The
        final class read-out is at t = 1 - 1/steps.
        """
        if steps < 1:
            raise ValueError("steps must be >= 1")
        rng = np.random.default_rng(seed)
        x_all = sigma(0.0) * rng.standard_normal((n, self.n_columns, self.emb_dim))
        table = [_normalize_rows(e) for e in self.embeddings]
        out = np.zeros((n, self.n_columns), dtype=np.int64)
        h = 1.0 / steps
        for a in range(0, n, chunk):
            x = x_all[a:a + chunk]
            for k in range(steps):
                probs = self.probabilities(x, k * h)
                mu = np.stack([p @ e for p, e in zip(probs, table)], axis=1)
                if check:
                    for p in probs:
                        assert np.allclose(p.sum(axis=1), 1.0, atol=1e-6)
                    assert np.all(np.linalg.norm(mu, axis=2) <= 1.0 + 1e-6)
                s_now, s_next = sigma(k * h), sigma((k + 1) * h)
                x = x + (s_now - s_next) * s_now * (mu - x) / s_now ** 2
            probs = self.probabilities(x, 1.0 - h)
            out[a:a + chunk] = np.stack([p.argmax(axis=1) for p in probs], axis=1)
        return out

    def state(self) -> dict[str, np.ndarray]:
        out = self.trunk.state("trunk")
        for j, e in enumerate(self.embeddings):
            out[f"emb.{j}"] = e
        return out

    def load_state(self, arrays: dict[str, np.ndarray]) -> None:
        self.trunk.load_state("trunk", arrays)
        for j, e in enumerate(self.embeddings):
            e[...] = arrays[f"emb.{j}"]

    def config(self) -> dict:
        return {
            "cardinalities": self.cardinalities,
            "emb_dim": self.emb_dim,
            "time_dim": self.time_dim,
            "hidden": list(self.hidden),
        }
