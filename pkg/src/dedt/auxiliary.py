"""Long-memory auxiliary classifier.

A linear max-margin model on HOG features, batch retrained on every sample
seen since its previous training.  It labels the samples the committee is
unsure about.
"""
from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field

import numba
import numpy as np

log = logging.getLogger(__name__)


class UninitializedAuxiliaryError(RuntimeError):
    """The auxiliary model was queried before its first training."""


@numba.njit(cache=True)
def _hinge_sgd(X, y, lam, epochs):
    # Pegasos single-sample steps in a fixed order, projected onto the ball
    # of radius 1/sqrt(lam); returns the mean iterate over the second half
    # of the run.  X carries a trailing column of ones for the bias.
    n, d = X.shape
    w = np.zeros(d)
    avg = np.zeros(d)
    radius = 1.0 / np.sqrt(lam)
    total = epochs * n
    it = 0
    count = 0
    for _ in range(epochs):
        for i in range(n):
            it += 1
            eta = 1.0 / (lam * it)
            margin = 0.0
            for j in range(d):
                margin += w[j] * X[i, j]
            margin *= y[i]
            shrink = 1.0 - eta * lam
            for j in range(d):
                w[j] *= shrink
            if margin < 1.0:
                for j in range(d):
                    w[j] += eta * y[i] * X[i, j]
            norm = 0.0
            for j in range(d):
                norm += w[j] * w[j]
            norm = np.sqrt(norm)
            if norm > radius:
                for j in range(d):
                    w[j] *= radius / norm
            if it > total // 2:
                count += 1
                for j in range(d):
                    avg[j] += w[j]
    return avg / count


def train_hinge(features, labels, lam: float = 1e-3, epochs: int = 50) -> np.ndarray:
    """Minimise lam/2 |w|^2 + mean hinge loss; returns weights with bias last."""
    X = np.ascontiguousarray(
        np.column_stack([np.asarray(features, dtype=np.float64), np.ones(len(labels))])
    )
    y = np.ascontiguousarray(labels, dtype=np.float64)
    return _hinge_sgd(X, y, float(lam), int(epochs))


@dataclass
class AuxiliaryModel:
    dim: int
    lam: float = 1e-3
    epochs: int = 50
    weights: np.ndarray | None = None
    last_trained: int | None = None
    window_features: list = field(default_factory=list)
    window_labels: list = field(default_factory=list)
    window_times: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)

    @property
    def trained(self) -> bool:
        return self.weights is not None

    def decision(self, features) -> np.ndarray:
        if self.weights is None:
            raise UninitializedAuxiliaryError("auxiliary classifier has not been trained")
        features = np.atleast_2d(features)
        return features @ self.weights[:-1] + self.weights[-1]

    def label(self, features) -> np.ndarray:
        return np.where(self.decision(features) >= 0, 1, -1).astype(np.int8)

    def observe(self, features, labels, t: int) -> None:
        """Buffer one frame's labelled samples for the next batch update."""
        if self.last_trained is not None and t <= self.last_trained:
            raise ValueError(f"frame {t} is not newer than last training at {self.last_trained}")
        self.window_features.append(np.asarray(features, dtype=np.float64))
        self.window_labels.append(np.asarray(labels, dtype=np.float64))
        self.window_times.append(int(t))

    def window_size(self) -> int:
        return sum(len(l) for l in self.window_labels)

    def fit(self, features, labels, t: int) -> bool:
        """Train on exactly this data.  Returns False (weights kept) if single-class."""
        labels = np.asarray(labels, dtype=np.float64)
        if len(labels) == 0 or np.all(labels == labels[0]):
            msg = f"frame {t}: auxiliary window holds a single class; weights kept"
            log.warning(msg)
            self.diagnostics.append(msg)
            self.last_trained = t
            return False
        self.weights = train_hinge(features, labels, self.lam, self.epochs)
        self.last_trained = t
        return True

    def retrain_on_window(self, t: int) -> bool:
        """Batch update on everything buffered since the last training; clears the window."""
        if not self.window_labels:
            msg = f"frame {t}: empty auxiliary window; weights kept"
            log.warning(msg)
            self.diagnostics.append(msg)
            self.last_trained = t
            return False
        X = np.concatenate(self.window_features)
        y = np.concatenate(self.window_labels)
        self.window_features, self.window_labels, self.window_times = [], [], []
        return self.fit(X, y, t)

    def fingerprint(self) -> str:
        if self.weights is None:
            return "untrained"
        return hashlib.sha1(self.weights.tobytes()).hexdigest()[:12]


def aux_label(model: AuxiliaryModel, f) -> int:
    return int(model.label(np.atleast_2d(f))[0])


def aux_batch_update(model: AuxiliaryModel, t: int, delta: int) -> bool:
    """Retrain on the buffered window iff t is a multiple of delta."""
    if t % delta:
        return False
    return model.retrain_on_window(t)
