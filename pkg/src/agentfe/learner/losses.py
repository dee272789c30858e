"""Per-sample losses and their derivatives with respect to the raw score.

``y`` is a float vector for squared loss, a 0/1 vector for binary
logistic loss and a one-hot matrix for softmax; ``F`` has the matching
shape. ``value`` is the mean loss over rows.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit, log_softmax, softmax


class SquaredLoss:
    name = "squared"

    def init_score(self, y: np.ndarray) -> np.ndarray:
        return np.array([y.mean()])

    def per_sample(self, y, F):
        return 0.5 * (y - F) ** 2

    def value(self, y, F) -> float:
        return float(self.per_sample(y, F).mean())

    def gradient(self, y, F):
        return F - y

    def hessian(self, y, F):
        return np.ones_like(F)


class LogisticLoss:
    """Binary log-loss on the logit scale."""

    name = "logistic"

    def init_score(self, y: np.ndarray) -> np.ndarray:
        p = np.clip(y.mean(), 1e-6, 1 - 1e-6)
        return np.array([np.log(p / (1 - p))])

    def per_sample(self, y, F):
        return np.logaddexp(0.0, F) - y * F

    def value(self, y, F) -> float:
        return float(self.per_sample(y, F).mean())

    def gradient(self, y, F):
        return expit(F) - y

    def hessian(self, y, F):
        p = expit(F)
        return p * (1 - p)


class SoftmaxLoss:
    """Multiclass cross-entropy over one score column per class."""

    name = "softmax"

    def __init__(self, n_classes: int):
        self.n_classes = n_classes

    def init_score(self, y: np.ndarray) -> np.ndarray:
        prior = np.clip(y.mean(axis=0), 1e-6, None)
        return np.log(prior / prior.sum())

    def per_sample(self, y, F):
        return -(y * log_softmax(F, axis=1)).sum(axis=1)

    def value(self, y, F) -> float:
        return float(self.per_sample(y, F).mean())

    def gradient(self, y, F):
        return softmax(F, axis=1) - y

    def hessian(self, y, F):
        p = softmax(F, axis=1)
        return p * (1 - p)
