"""Compact gradient-boosted decision trees.

Each round fits one depth-limited regression tree per output to the
negative gradient. Splits maximise the reduction in squared error of that
gradient; rows with a missing value follow whichever side scores better.
Leaf values are the mean residual for squared loss and a Newton step
(sum of residuals over sum of hessians) otherwise. A leaf step that would
raise its rows' loss is halved until it does not, so training loss never
increases from one round to the next.

For up to 10,000 training rows every distinct value is a split candidate;
beyond that, candidates are capped at 64 quantiles per feature.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .losses import LogisticLoss, SoftmaxLoss, SquaredLoss

EXACT_SPLIT_ROWS = 10_000
MAX_QUANTILE_CANDIDATES = 64


class LearnerError(ValueError):
    pass


@dataclass(frozen=True)
class LearnerParams:
    n_trees: int = 60
    max_depth: int = 3
    learning_rate: float = 0.15
    min_samples_leaf: int = 3
    loss: str = "squared"
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise LearnerError("n_trees must be >= 1")
        if self.max_depth < 1:
            raise LearnerError("max_depth must be >= 1")
        if not 0 < self.learning_rate <= 1:
            raise LearnerError("learning_rate must be in (0, 1]")
        if self.min_samples_leaf < 1:
            raise LearnerError("min_samples_leaf must be >= 1")
        if self.loss not in ("squared", "logistic"):
            raise LearnerError(f"unknown loss {self.loss!r}")


@dataclass(frozen=True)
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    missing_left: np.ndarray
    value: np.ndarray
    gain: np.ndarray

    @property
    def is_leaf(self) -> np.ndarray:
        return self.feature < 0

    @property
    def n_splits(self) -> int:
        return int((self.feature >= 0).sum())

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index for each row."""
        node = np.zeros(len(X), dtype=np.intp)
        rows = np.arange(len(X))
        while True:
            internal = self.feature[node] >= 0
            if not internal.any():
                return node
            at = node[internal]
            x = X[rows[internal], self.feature[at]]
            go_left = np.where(np.isnan(x), self.missing_left[at], x <= self.threshold[at])
            node[internal] = np.where(go_left, self.left[at], self.right[at])

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]


@dataclass(frozen=True)
class TreeEnsembleModel:
    """Scores are ``base_score + learning_rate * sum(tree outputs)`` per output column."""

    trees: tuple[tuple[Tree, ...], ...]  # [round][output]
    base_score: np.ndarray
    learning_rate: float
    loss: str
    feature_names: tuple[str, ...]
    classes: tuple | None = None
    train_loss: tuple[float, ...] = field(default=(), compare=False)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    @property
    def n_outputs(self) -> int:
        return len(self.base_score)

    @property
    def is_classifier(self) -> bool:
        return self.classes is not None


# -- binning -------------------------------------------------------------


def _candidate_edges(column: np.ndarray, n_rows: int) -> np.ndarray:
    present = column[~np.isnan(column)]
    if present.size == 0:
        return np.empty(0)
    uniq = np.unique(present)
    if n_rows > EXACT_SPLIT_ROWS and uniq.size > MAX_QUANTILE_CANDIDATES:
        qs = np.quantile(present, np.linspace(0, 1, MAX_QUANTILE_CANDIDATES + 2)[1:-1])
        edges = np.unique(qs)
        return edges[edges < uniq[-1]]
    lo, hi = uniq[:-1], uniq[1:]
    mid = lo + (hi - lo) / 2
    return np.where((mid >= lo) & (mid < hi), mid, lo)


@dataclass
class _Binned:
    codes: np.ndarray  # (n, p), missing = missing_code
    edges: list[np.ndarray]
    n_edges: np.ndarray
    missing_code: int

    @property
    def width(self) -> int:
        return self.missing_code + 1


def _bin(X: np.ndarray) -> _Binned:
    n, p = X.shape
    edges = [_candidate_edges(X[:, j], n) for j in range(p)]
    n_edges = np.array([len(e) for e in edges], dtype=np.intp)
    missing_code = int(n_edges.max(initial=0)) + 1
    codes = np.empty((n, p), dtype=np.intp)
    for j in range(p):
        col = X[:, j]
        c = np.searchsorted(edges[j], col, side="left")
        c[np.isnan(col)] = missing_code
        codes[:, j] = c
    return _Binned(codes, edges, n_edges, missing_code)


# -- tree growth ---------------------------------------------------------


def _best_split(binned: _Binned, rows: np.ndarray, r: np.ndarray, min_leaf: int):
    """Best (gain, feature, bin, missing_left) for the rows, or None."""
    p = binned.codes.shape[1]
    W = binned.width
    M = binned.missing_code
    if M < 2:
        return None
    flat = (binned.codes[rows] + np.arange(p) * W).ravel()
    rr = r[rows]
    G = np.bincount(flat, weights=np.repeat(rr, p), minlength=p * W).reshape(p, W)
    C = np.bincount(flat, minlength=p * W).reshape(p, W).astype(float)
    g_miss, c_miss = G[:, M], C[:, M]
    g_left = np.cumsum(G[:, : M - 1], axis=1)
    c_left = np.cumsum(C[:, : M - 1], axis=1)
    g_tot, c_tot = rr.sum(), float(len(rows))
    parent = g_tot * g_tot / c_tot

    valid_bin = np.arange(M - 1)[None, :] < binned.n_edges[:, None]
    best = None
    for option, (gl, cl) in enumerate(
        ((g_left, c_left), (g_left + g_miss[:, None], c_left + c_miss[:, None]))
    ):
        gr, cr = g_tot - gl, c_tot - cl
        ok = valid_bin & (cl >= min_leaf) & (cr >= min_leaf)
        with np.errstate(divide="ignore", invalid="ignore"):
            gain = np.where(ok, gl * gl / cl + gr * gr / cr - parent, -np.inf)
        k = int(np.argmax(gain))
        value = gain.flat[k]
        if np.isfinite(value) and (best is None or value > best[0]):
            j, b = divmod(k, M - 1)
            best = (float(value), j, b, option == 1, c_miss[j])
    return best


class _TreeBuilder:
    def __init__(self, binned, r, leaf_value, max_depth, min_leaf):
        self.binned = binned
        self.r = r
        self.leaf_value = leaf_value
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.feature, self.threshold, self.left, self.right = [], [], [], []
        self.missing_left, self.value, self.gain = [], [], []
        self.leaf_rows: dict[int, np.ndarray] = {}

    def _new_node(self) -> int:
        for lst, v in ((self.feature, -1), (self.threshold, np.nan), (self.left, -1),
                       (self.right, -1), (self.missing_left, False), (self.value, 0.0),
                       (self.gain, 0.0)):
            lst.append(v)
        return len(self.feature) - 1

    def grow(self, rows: np.ndarray, depth: int) -> int:
        node = self._new_node()
        split = None
        if depth < self.max_depth and len(rows) >= 2 * self.min_leaf:
            rr = self.r[rows]
            sq = float(rr @ rr)
            sse = sq - rr.sum() ** 2 / len(rows)
            tol = 1e-12 * max(1.0, sq)
            if sse > tol:
                split = _best_split(self.binned, rows, self.r, self.min_leaf)
                if split is not None and split[0] < -tol:
                    split = None
        if split is None:
            self.value[node] = self.leaf_value(rows)
            self.leaf_rows[node] = rows
            return node
        gain, j, b, miss_left, c_miss = split
        codes = self.binned.codes[rows, j]
        is_missing = codes == self.binned.missing_code
        go_left = np.where(is_missing, miss_left, codes <= b)
        left_rows, right_rows = rows[go_left], rows[~go_left]
        if c_miss == 0:
            # no missing rows seen here: send future missing values to the larger child
            miss_left = len(left_rows) >= len(right_rows)
        self.feature[node] = j
        self.threshold[node] = float(self.binned.edges[j][b])
        self.missing_left[node] = bool(miss_left)
        self.gain[node] = max(gain, 0.0)
        self.left[node] = self.grow(left_rows, depth + 1)
        self.right[node] = self.grow(right_rows, depth + 1)
        return node

    def tree(self) -> Tree:
        return Tree(
            feature=np.array(self.feature, dtype=np.intp),
            threshold=np.array(self.threshold, dtype=float),
            left=np.array(self.left, dtype=np.intp),
            right=np.array(self.right, dtype=np.intp),
            missing_left=np.array(self.missing_left, dtype=bool),
            value=np.array(self.value, dtype=float),
            gain=np.array(self.gain, dtype=float),
        )


# -- boosting ------------------------------------------------------------


def _encode_target(y, params: LearnerParams, classes):
    if params.loss == "squared":
        yv = np.asarray(y, dtype=float)
        if not np.isfinite(yv).all():
            raise LearnerError("regression target must be finite")
        return yv, SquaredLoss(), None
    labels = np.asarray(y, dtype=object)
    if classes is None:
        classes = sorted(set(labels.tolist()))
    classes = tuple(classes)
    index = {c: i for i, c in enumerate(classes)}
    try:
        codes = np.array([index[v] for v in labels], dtype=np.intp)
    except KeyError as exc:
        raise LearnerError(f"label {exc.args[0]!r} not among classes") from None
    if len(np.unique(codes)) < 2:
        raise LearnerError("classification needs at least two classes in the training rows")
    if len(classes) == 2:
        return codes.astype(float), LogisticLoss(), classes
    onehot = np.zeros((len(codes), len(classes)))
    onehot[np.arange(len(codes)), codes] = 1.0
    return onehot, SoftmaxLoss(len(classes)), classes


def _as_matrix(F: np.ndarray, n_out: int) -> np.ndarray:
    return F.reshape(-1, n_out)


def train(
    X: np.ndarray,
    y: Sequence,
    params: LearnerParams,
    feature_names: Sequence[str] | None = None,
    classes: Sequence | None = None,
) -> TreeEnsembleModel:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] == 0:
        raise LearnerError("feature matrix needs at least one column")
    n, p = X.shape
    if n < 2:
        raise LearnerError("need at least two rows")
    if len(y) != n:
        raise LearnerError(f"target has {len(y)} rows, features have {n}")
    names = tuple(feature_names) if feature_names is not None else tuple(f"f{j}" for j in range(p))
    if len(names) != p:
        raise LearnerError("feature_names length does not match column count")

    target, loss, classes = _encode_target(y, params, classes)
    multi = isinstance(loss, SoftmaxLoss)
    n_out = loss.n_classes if multi else 1
    base = loss.init_score(target)
    F = np.tile(base, (n, 1)) if multi else np.full(n, base[0])

    binned = _bin(X)
    lr = params.learning_rate
    all_rows = np.arange(n)
    rounds, history = [], [loss.value(target, F)]
    for _ in range(params.n_trees):
        grad = _as_matrix(loss.gradient(target, F), n_out)
        hess = _as_matrix(loss.hessian(target, F), n_out)
        round_trees = []
        for k in range(n_out):
            r, h = -grad[:, k], hess[:, k]
            if isinstance(loss, SquaredLoss):
                def leaf_value(rows, r=r):
                    return float(r[rows].mean())
            else:
                scale = (n_out - 1) / n_out if multi else 1.0
                def leaf_value(rows, r=r, h=h, scale=scale):
                    return float(scale * r[rows].sum() / (h[rows].sum() + 1e-12))
            builder = _TreeBuilder(binned, r, leaf_value, params.max_depth, params.min_samples_leaf)
            builder.grow(all_rows, 0)
            _safeguard_leaves(builder, loss, target, F, k, lr, multi)
            tree = builder.tree()
            for leaf, rows in builder.leaf_rows.items():
                if multi:
                    F[rows, k] += lr * tree.value[leaf]
                else:
                    F[rows] += lr * tree.value[leaf]
            round_trees.append(tree)
        rounds.append(tuple(round_trees))
        history.append(loss.value(target, F))

    return TreeEnsembleModel(
        trees=tuple(rounds),
        base_score=np.asarray(base, dtype=float),
        learning_rate=lr,
        loss=loss.name,
        feature_names=names,
        classes=classes,
        train_loss=tuple(history),
    )


def _safeguard_leaves(builder, loss, target, F, k, lr, multi):
    if isinstance(loss, SquaredLoss):
        return
    for leaf, rows in builder.leaf_rows.items():
        step = builder.value[leaf]
        y_rows = target[rows]
        F_rows = F[rows]
        before = loss.per_sample(y_rows, F_rows).sum()
        for _ in range(30):
            trial = F_rows.copy()
            if multi:
                trial[:, k] += lr * step
            else:
                trial += lr * step
            if loss.per_sample(y_rows, trial).sum() <= before:
                break
            step *= 0.5
        else:
            step = 0.0
        builder.value[leaf] = step


def raw_scores(model: TreeEnsembleModel, X: np.ndarray) -> np.ndarray:
    """(n, n_outputs) scores before the link function."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise LearnerError(
            f"model expects {model.n_features} columns, got {X.shape[1] if X.ndim == 2 else X.shape}"
        )
    F = np.tile(model.base_score, (len(X), 1))
    for round_trees in model.trees:
        for k, tree in enumerate(round_trees):
            F[:, k] += model.learning_rate * tree.predict(X)
    return F


def predict(model: TreeEnsembleModel, X: np.ndarray, feature_names: Sequence[str] | None = None):
    """Class labels (argmax, ties to the lowest class index) or regression values."""
    if feature_names is not None and tuple(feature_names) != model.feature_names:
        raise LearnerError("feature columns differ from the ones the model was trained on")
    F = raw_scores(model, X)
    if not model.is_classifier:
        return F[:, 0]
    if F.shape[1] == 1:
        F = np.column_stack([np.zeros(len(F)), F[:, 0]])
    idx = np.argmax(F, axis=1)
    return np.array([model.classes[i] for i in idx], dtype=object)


def gain_importance(model: TreeEnsembleModel) -> dict[str, float]:
    """Share of total split gain per feature; all zero when nothing was split."""
    totals = np.zeros(model.n_features)
    for round_trees in model.trees:
        for tree in round_trees:
            internal = tree.feature >= 0
            np.add.at(totals, tree.feature[internal], tree.gain[internal])
    s = totals.sum()
    shares = totals / s if s > 0 else totals
    return {name: float(v) for name, v in zip(model.feature_names, shares)}
