"""Evaluation metrics. Each carries its direction so callers never guess."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

NORMALIZERS = ("std", "range", "mean")


def accuracy(pred_labels: Sequence, true_labels: Sequence) -> float:
    if len(pred_labels) != len(true_labels) or len(true_labels) == 0:
        raise ValueError("accuracy needs two equal, non-empty label sequences")
    hits = sum(1 for p, t in zip(pred_labels, true_labels) if p == t)
    return hits / len(true_labels)


def rmse(preds, y) -> float:
    preds, y = np.asarray(preds, float), np.asarray(y, float)
    return float(np.sqrt(np.mean((preds - y) ** 2)))


def nrmse_with_flag(preds, y, normalizer: str = "std") -> tuple[float, bool]:
    """(value, degenerate). Degenerate means the normalizer was 0 and RMSE is returned raw."""
    preds, y = np.asarray(preds, float), np.asarray(y, float)
    if len(preds) != len(y) or len(y) == 0:
        raise ValueError("nrmse needs two equal, non-empty vectors")
    if normalizer == "std":
        scale = float(y.std())
    elif normalizer == "range":
        scale = float(y.max() - y.min())
    elif normalizer == "mean":
        scale = float(abs(y.mean()))
    else:
        raise ValueError(f"unknown normalizer {normalizer!r}; choose from {NORMALIZERS}")
    err = rmse(preds, y)
    if scale == 0:
        return err, True
    return err / scale, False


def nrmse(preds, y, normalizer: str = "std") -> float:
    return nrmse_with_flag(preds, y, normalizer)[0]


@dataclass(frozen=True)
class Metric:
    name: str
    higher_is_better: bool
    normalizer: str = "std"

    def score(self, preds, y) -> tuple[float, bool]:
        if self.name == "accuracy":
            return accuracy(list(preds), list(y)), False
        return nrmse_with_flag(preds, y, self.normalizer)

    def degradation(self, baseline: float, perturbed: float) -> float:
        """Positive when ``perturbed`` is worse than ``baseline``."""
        return baseline - perturbed if self.higher_is_better else perturbed - baseline

    def better(self, a: float, b: float) -> bool:
        return a > b if self.higher_is_better else a < b


ACCURACY = Metric("accuracy", higher_is_better=True)
NRMSE = Metric("nrmse", higher_is_better=False)


def metric_for(name: str, normalizer: str = "std") -> Metric:
    if name == "accuracy":
        return ACCURACY
    if name == "nrmse":
        return Metric("nrmse", False, normalizer)
    raise ValueError(f"unknown metric {name!r}")
