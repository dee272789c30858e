"""Cross-validated evaluation and the diagnostics the Tester reads.

Everything here is seeded and single-threaded, so two calls with the same
inputs produce bitwise-identical reports.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..dataset import FoldPlan
from ..rng import numpy_rng
from .gbdt import LearnerError, LearnerParams, TreeEnsembleModel, gain_importance, predict, train
from .metrics import Metric

FLAG_ZERO_SCALE = "nrmse-unnormalized"


@dataclass(frozen=True)
class EvalReport:
    metric_name: str
    higher_is_better: bool
    per_fold_metrics: tuple[float, ...]
    mean: float
    std: float
    feature_names: tuple[str, ...]
    gain_importance: dict[str, float]
    permutation_importance: dict[str, float] = field(default_factory=dict)
    correlation: np.ndarray | None = None
    robustness_delta: float | None = None
    flags: tuple[str, ...] = ()

    def __eq__(self, other):
        if not isinstance(other, EvalReport):
            return NotImplemented
        same_corr = (
            (self.correlation is None and other.correlation is None)
            or (self.correlation is not None and other.correlation is not None
                and np.array_equal(self.correlation, other.correlation, equal_nan=True))
        )
        return same_corr and all(
            getattr(self, f) == getattr(other, f)
            for f in ("metric_name", "higher_is_better", "per_fold_metrics", "mean", "std",
                      "feature_names", "gain_importance", "permutation_importance",
                      "robustness_delta", "flags")
        )


@dataclass(frozen=True)
class FoldFit:
    models: tuple[TreeEnsembleModel, ...]
    scores: tuple[float, ...]
    flags: tuple[str, ...]


def _check_compat(params: LearnerParams, metric: Metric) -> None:
    want = "logistic" if metric.name == "accuracy" else "squared"
    if params.loss != want:
        raise LearnerError(f"metric {metric.name} needs {want} loss, params use {params.loss}")


def _classes(y, params: LearnerParams):
    if params.loss == "squared":
        return None
    return tuple(sorted(set(np.asarray(y, dtype=object).tolist())))


def fit_folds(X, y, foldplan: FoldPlan, params: LearnerParams, metric: Metric,
              feature_names: Sequence[str] | None = None) -> FoldFit:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=object if params.loss == "logistic" else float)
    if foldplan.n_rows != len(X) or len(y) != len(X):
        raise LearnerError("fold plan, features and target disagree on row count")
    _check_compat(params, metric)
    classes = _classes(y, params)
    models, scores, flags = [], [], set()
    for fold, (tr, va) in enumerate(foldplan):
        try:
            model = train(X[tr], y[tr], params, feature_names, classes)
        except LearnerError as exc:
            raise LearnerError(f"fold {fold}: {exc}") from exc
        value, degenerate = metric.score(predict(model, X[va]), y[va])
        if degenerate:
            flags.add(FLAG_ZERO_SCALE)
        models.append(model)
        scores.append(float(value))
    return FoldFit(tuple(models), tuple(scores), tuple(sorted(flags)))


def _summary(scores: Sequence[float]) -> tuple[float, float]:
    arr = np.asarray(scores, dtype=float)
    return float(arr.mean()), float(arr.std())


def _mean_gain(models: Sequence[TreeEnsembleModel], names: Sequence[str]) -> dict[str, float]:
    out = {n: 0.0 for n in names}
    for m in models:
        for n, v in gain_importance(m).items():
            out[n] += v / len(models)
    return out


def cross_validate(X, y, foldplan: FoldPlan, params: LearnerParams, metric: Metric,
                   feature_names: Sequence[str] | None = None) -> EvalReport:
    X = np.asarray(X, dtype=float)
    names = tuple(feature_names) if feature_names is not None else tuple(f"f{j}" for j in range(X.shape[1]))
    fit = fit_folds(X, y, foldplan, params, metric, names)
    mean, std = _summary(fit.scores)
    return EvalReport(
        metric_name=metric.name,
        higher_is_better=metric.higher_is_better,
        per_fold_metrics=fit.scores,
        mean=mean,
        std=std,
        feature_names=names,
        gain_importance=_mean_gain(fit.models, names),
        flags=fit.flags,
    )


def permutation_importance(X, y, foldplan: FoldPlan, params: LearnerParams, metric: Metric,
                           seed: int, feature_names: Sequence[str] | None = None,
                           fit: FoldFit | None = None) -> dict[str, float]:
    """Mean degradation over folds when one column is shuffled inside the validation fold."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=object if params.loss == "logistic" else float)
    names = tuple(feature_names) if feature_names is not None else tuple(f"f{j}" for j in range(X.shape[1]))
    if fit is None:
        fit = fit_folds(X, y, foldplan, params, metric, names)
    out = {}
    for j, name in enumerate(names):
        total = 0.0
        for fold, (model, base) in enumerate(zip(fit.models, fit.scores)):
            va = foldplan.folds[fold]
            Xv = X[va].copy()
            Xv[:, j] = numpy_rng(seed, f"perm:{j}", fold).permutation(Xv[:, j])
            value, _ = metric.score(predict(model, Xv), y[va])
            total += metric.degradation(base, float(value))
        out[name] = total / len(fit.models)
    return out


def correlation_matrix(X) -> np.ndarray:
    """Pearson coefficients with pairwise deletion; NaN where a side has no variance."""
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    if n < 2:
        raise LearnerError("correlation needs at least two rows")
    out = np.full((p, p), np.nan)
    missing = np.isnan(X)
    if not missing.any():
        centered = X - X.mean(axis=0)
        ss = np.sqrt((centered ** 2).sum(axis=0))
        with np.errstate(divide="ignore", invalid="ignore"):
            corr = (centered.T @ centered) / np.outer(ss, ss)
        ok = ss > 0
        out[np.ix_(ok, ok)] = np.clip(corr[np.ix_(ok, ok)], -1.0, 1.0)
        np.fill_diagonal(out, np.where(ok, 1.0, np.nan))
        return out
    for i in range(p):
        for j in range(i, p):
            both = ~(missing[:, i] | missing[:, j])
            rho = _pearson_or_nan(X[both, i], X[both, j])
            if i == j and not np.isnan(rho):
                rho = 1.0
            out[i, j] = out[j, i] = rho
    return out


def _pearson_or_nan(a: np.ndarray, b: np.ndarray) -> float:
    if len(a) < 2:
        return float("nan")
    ca, cb = a - a.mean(), b - b.mean()
    denom = np.sqrt((ca @ ca) * (cb @ cb))
    if denom == 0:
        return float("nan")
    return float(np.clip((ca @ cb) / denom, -1.0, 1.0))


def is_binary_column(col: np.ndarray) -> bool:
    present = col[~np.isnan(col)]
    return bool(np.isin(present, (0.0, 1.0)).all())


def add_noise(X, sigma: float, seed: int) -> np.ndarray:
    """Gaussian noise with std ``sigma * column std``; 0/1 flag columns and missing cells untouched."""
    X = np.asarray(X, dtype=float)
    noisy = X.copy()
    rng = numpy_rng(seed, "noise")
    for j in range(X.shape[1]):
        col = X[:, j]
        draws = rng.standard_normal(len(col))
        if sigma == 0 or is_binary_column(col):
            continue
        scale = sigma * float(np.nanstd(col)) if (~np.isnan(col)).any() else 0.0
        noisy[:, j] = col + draws * scale
    return noisy


def noise_robustness(X, y, foldplan: FoldPlan, params: LearnerParams, metric: Metric,
                     sigma: float, seed: int, feature_names: Sequence[str] | None = None,
                     clean_mean: float | None = None) -> float:
    """Noisy CV mean minus clean CV mean."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if clean_mean is None:
        clean_mean = _summary(fit_folds(X, y, foldplan, params, metric, feature_names).scores)[0]
    noisy = add_noise(X, sigma, seed)
    noisy_mean = _summary(fit_folds(noisy, y, foldplan, params, metric, feature_names).scores)[0]
    return noisy_mean - clean_mean


def full_report(X, y, foldplan: FoldPlan, params: LearnerParams, metric: Metric, seed: int,
                feature_names: Sequence[str] | None = None, sigma: float | None = 0.01) -> EvalReport:
    """CV metrics plus gain and permutation importance, correlations and (optionally) robustness."""
    X = np.asarray(X, dtype=float)
    names = tuple(feature_names) if feature_names is not None else tuple(f"f{j}" for j in range(X.shape[1]))
    fit = fit_folds(X, y, foldplan, params, metric, names)
    mean, std = _summary(fit.scores)
    perm = permutation_importance(X, y, foldplan, params, metric, seed, names, fit)
    delta = None
    if sigma is not None:
        delta = noise_robustness(X, y, foldplan, params, metric, sigma, seed, names, mean)
    return EvalReport(
        metric_name=metric.name,
        higher_is_better=metric.higher_is_better,
        per_fold_metrics=fit.scores,
        mean=mean,
        std=std,
        feature_names=names,
        gain_importance=_mean_gain(fit.models, names),
        permutation_importance=perm,
        correlation=correlation_matrix(X),
        robustness_delta=delta,
        flags=fit.flags,
    )
