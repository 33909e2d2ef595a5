"""Small deterministic histogram gradient boosting (logistic or squared loss)."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .. import kernels
from ..errors import EmptyTrainingSet
from .auc import roc_auc

MAX_BINS = 64
MISSING_BIN = MAX_BINS
N_BINS = MAX_BINS + 1
LOGISTIC = "logistic"
SQUARED = "squared"


@dataclass
class Binner:
    edges: list[np.ndarray]  # per feature, increasing cut points (len <= MAX_BINS - 1)

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        out = np.full(X.shape, MISSING_BIN, dtype=np.uint8)
        for f, e in enumerate(self.edges):
            col = X[:, f]
            obs = ~np.isnan(col)
            out[obs, f] = np.searchsorted(e, col[obs], side="right")
        return out


def fit_binner(X: np.ndarray, max_bins: int = MAX_BINS) -> Binner:
    """Midpoints between distinct values when few, else quantile cut points."""
    edges = []
    for f in range(X.shape[1]):
        col = X[:, f]
        u = np.unique(col[~np.isnan(col)])
        if u.size <= max_bins:
            e = (u[:-1] + u[1:]) / 2.0
        else:
            q = np.quantile(col[~np.isnan(col)], np.arange(1, max_bins) / max_bins)
            e = np.unique(q)
        edges.append(e)
    return Binner(edges)


@dataclass
class Tree:
    feature: np.ndarray  # -1 marks a leaf
    threshold: np.ndarray  # go left when bin <= threshold
    missing_left: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    depth: int

    def predict_binned(self, B: np.ndarray) -> np.ndarray:
        node = np.zeros(B.shape[0], dtype=np.int64)
        rows = np.arange(B.shape[0])
        for _ in range(self.depth):
            feat = self.feature[node]
            inner = feat >= 0
            if not inner.any():
                break
            b = B[rows, np.maximum(feat, 0)]
            go_left = np.where(b == MISSING_BIN, self.missing_left[node], b <= self.threshold[node])
            node = np.where(inner, np.where(go_left, self.left[node], self.right[node]), node)
        return self.value[node]


@dataclass
class _Node:
    rows: np.ndarray
    hist: np.ndarray
    depth: int
    index: int


def _best_split(hist: np.ndarray, lam: float, min_leaf: int, min_hess: float):
    """(gain, feature, threshold bin, missing goes left) or None."""
    G = hist[0, :, 0].sum()
    H = hist[0, :, 1].sum()
    N = hist[0, :, 2].sum()
    parent = G * G / (H + lam)
    cum = np.cumsum(hist[:, :MAX_BINS - 1, :], axis=1)  # left stats for thresholds 0..62
    miss = hist[:, MISSING_BIN, :][:, None, :]
    best = None
    for miss_left in (False, True):
        left = cum + miss if miss_left else cum
        gl, hl, nl = left[..., 0], left[..., 1], left[..., 2]
        gr, hr, nr = G - gl, H - hl, N - nl
        ok = (nl >= min_leaf) & (nr >= min_leaf) & (hl >= min_hess) & (hr >= min_hess)
        gain = np.where(ok, gl * gl / (hl + lam) + gr * gr / (hr + lam) - parent, -np.inf)
        k = int(np.argmax(gain))
        f, b = divmod(k, gain.shape[1])
        g = gain[f, b]
        if np.isfinite(g) and g > 1e-12 and (best is None or g > best[0]):
            best = (float(g), f, b, miss_left)
    return best


@dataclass
class Gbdt:
    loss: str = LOGISTIC
    n_iter: int = 500
    learning_rate: float = 0.1
    max_depth: int = 5
    min_leaf: int = 20
    l2: float = 1.0
    min_hess: float = 1e-3
    binner: Binner | None = None
    base: float = 0.0
    trees: list[Tree] = field(default_factory=list)
    eval_auc: list[float] = field(default_factory=list)
    train_loss: list[float] = field(default_factory=list)

    def fit(self, X, y, eval_X=None, eval_y=None) -> "Gbdt":
        """Fit on rows of ``X``; NaN cells route to the child chosen by gain.

        With an eval set and logistic loss, ``eval_auc`` records the eval AUC
        after every iteration.
        """
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if X.shape[0] == 0:
            raise EmptyTrainingSet("no training rows")
        self.binner = fit_binner(X)
        B = self.binner.transform(X)
        n = X.shape[0]
        if self.loss == LOGISTIC:
            p = np.clip(y.mean(), 1e-12, 1 - 1e-12)
            self.base = float(np.log(p / (1 - p)))
        else:
            self.base = float(y.mean())
        raw = np.full(n, self.base)
        self.trees, self.eval_auc, self.train_loss = [], [], []
        EB = ev = None
        if eval_X is not None:
            EB = self.binner.transform(np.asarray(eval_X, dtype=float))
            ev = np.full(EB.shape[0], self.base)
        all_rows = np.arange(n, dtype=np.int64)
        for _ in range(self.n_iter):
            if self.loss == LOGISTIC:
                prob = expit(raw)
                grad, hess = prob - y, prob * (1 - prob)
            else:
                grad, hess = raw - y, np.ones(n)
            tree, leaf_of = self._grow(B, all_rows, grad, hess)
            self.trees.append(tree)
            raw += tree.value[leaf_of]
            self.train_loss.append(self._loss(raw, y))
            if EB is not None:
                ev += tree.predict_binned(EB)
                if self.loss == LOGISTIC:
                    self.eval_auc.append(roc_auc(eval_y, ev))
        return self

    def _loss(self, raw, y) -> float:
        if self.loss == LOGISTIC:
            return float(np.mean(np.logaddexp(0.0, raw) - y * raw))
        return float(np.mean((raw - y) ** 2))

    def _grow(self, B, rows, grad, hess):
        feature, threshold, miss_left, left, right, value = [], [], [], [], [], []

        def new_node():
            for lst, v in ((feature, -1), (threshold, 0), (miss_left, False), (left, -1), (right, -1), (value, 0.0)):
                lst.append(v)
            return len(feature) - 1

        leaf_of = np.zeros(B.shape[0], dtype=np.int64)
        root = _Node(rows, kernels.build_histogram(B, rows, grad, hess, N_BINS), 0, new_node())
        stack = [root]
        while stack:
            node = stack.pop()
            split = None
            if node.depth < self.max_depth and node.rows.size >= 2 * self.min_leaf:
                split = _best_split(node.hist, self.l2, self.min_leaf, self.min_hess)
            if split is None:
                G = node.hist[0, :, 0].sum()
                H = node.hist[0, :, 1].sum()
                value[node.index] = -self.learning_rate * G / (H + self.l2)
                leaf_of[node.rows] = node.index
                continue
            _, f, b, ml = split
            col = B[node.rows, f]
            go_left = np.where(col == MISSING_BIN, ml, col <= b)
            lr_, rr_ = node.rows[go_left], node.rows[~go_left]
            small, large = (lr_, rr_) if lr_.size <= rr_.size else (rr_, lr_)
            h_small = kernels.build_histogram(B, small, grad, hess, N_BINS)
            h_large = node.hist - h_small
            hl, hr = (h_small, h_large) if small is lr_ else (h_large, h_small)
            li, ri = new_node(), new_node()
            feature[node.index], threshold[node.index], miss_left[node.index] = f, b, ml
            left[node.index], right[node.index] = li, ri
            stack.append(_Node(rr_, hr, node.depth + 1, ri))
            stack.append(_Node(lr_, hl, node.depth + 1, li))
        tree = Tree(np.array(feature), np.array(threshold), np.array(miss_left, dtype=bool),
                    np.array(left), np.array(right), np.array(value), self.max_depth)
        return tree, leaf_of

    def decision_function(self, X) -> np.ndarray:
        B = self.binner.transform(np.asarray(X, dtype=float))
        raw = np.full(B.shape[0], self.base)
        for tree in self.trees:
            raw += tree.predict_binned(B)
        return raw

    def predict(self, X) -> np.ndarray:
        """Probability of label 1 (logistic) or the regression value (squared)."""
        raw = self.decision_function(X)
        return expit(raw) if self.loss == LOGISTIC else raw


def gbdt_fit(X, y, loss: str = LOGISTIC, seed: int = 0, **kw) -> Gbdt:
    """Fit a booster. Training is deterministic, so ``seed`` only fixes the call signature."""
    del seed
    return Gbdt(loss=loss, **kw).fit(X, y)


def gbdt_predict(model: Gbdt, X) -> np.ndarray:
    return model.predict(X)
