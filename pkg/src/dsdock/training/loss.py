"""Exponentially weighted squared error and label standardization."""

from __future__ import annotations

import numpy as np

from .. import diffcore as dc
from ..gnn.model import EmptyBatch


class DegenerateLabels(ValueError):
    pass


def _as_column(y) -> np.ndarray:
    return np.asarray(y, dtype=np.float64).reshape(-1, 1)


def sample_weights(y_std, alpha: float) -> np.ndarray:
    """``exp(-alpha * y)`` per standardized label; all ones when alpha is 0."""
    if alpha < 0:
        raise ValueError(f"alpha must be non-negative, got {alpha}")
    return np.exp(-alpha * np.asarray(y_std, dtype=np.float64))


def wmse_loss(z, y_std, alpha: float) -> dc.Tensor:
    """Mean over the batch of ``exp(-alpha * y) * (z - y)**2``.

    ``z`` may be a tensor of shape (n, 1) or (n,) or a plain array; labels
    must already be standardized. Lower (better) labels get larger weight.
    """
    z = dc.as_tensor(z)
    y = _as_column(y_std)
    if z.data.size == 0 or y.size == 0:
        raise EmptyBatch("wmse_loss on an empty batch")
    if z.data.ndim == 1:
        z = dc.reshape(z, (-1, 1))
    if z.shape != y.shape:
        raise dc.ShapeMismatch(f"predictions {z.shape} vs labels {y.shape}")
    r = z - y
    sq = r * r
    if alpha != 0:
        sq = dc.mul(sq, dc.Tensor(sample_weights(y, alpha)))
    return dc.mean(sq)


def wmse(z, y_std, alpha: float) -> float:
    """Plain-float version of :func:`wmse_loss` for evaluation."""
    z = np.asarray(z, dtype=np.float64).reshape(-1)
    y = np.asarray(y_std, dtype=np.float64).reshape(-1)
    if z.size == 0:
        raise EmptyBatch("wmse on an empty batch")
    return float(np.mean(sample_weights(y, alpha) * (z - y) ** 2))


class LabelScaler:
    """Standardize labels with training-split statistics (population std)."""

    def __init__(self, mean: float, std: float):
        if not np.isfinite(mean) or not np.isfinite(std) or std <= 0:
            raise DegenerateLabels(f"invalid label statistics mean={mean} std={std}")
        self.mean = float(mean)
        self.std = float(std)

    @classmethod
    def fit(cls, labels) -> "LabelScaler":
        y = np.asarray(labels, dtype=np.float64).reshape(-1)
        if y.size < 2 or not np.all(np.isfinite(y)):
            raise DegenerateLabels("need at least two finite training labels")
        std = float(y.std())
        if std == 0.0:
            raise DegenerateLabels("training labels have zero spread")
        return cls(float(y.mean()), std)

    def transform(self, labels) -> np.ndarray:
        return (np.asarray(labels, dtype=np.float64) - self.mean) / self.std

    def inverse_transform(self, scores) -> np.ndarray:
        return np.asarray(scores, dtype=np.float64) * self.std + self.mean


def standardize_labels(train_labels) -> tuple[float, float]:
    """(mean, population std) of the training labels."""
    s = LabelScaler.fit(train_labels)
    return s.mean, s.std
