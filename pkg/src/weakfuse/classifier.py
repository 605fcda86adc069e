"""Noise-aware classifier trained with symmetric cross-entropy on pseudo labels."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericError
from .nn import LOG_FLOOR, Adam, Dense, Network, backward, safe_log

# log 0 substitute in the reverse term
RCE_LOG_ZERO = -4.0
DEFAULT_TRUNK = (64, 32)


def make_trunk(n_features, dims=DEFAULT_TRUNK, rng=None):
    return Network.mlp([n_features, *dims], hidden="relu", out="relu", rng=rng)


def make_classifier_head(trunk_dim, n_classes, rng=None):
    return Dense(trunk_dim, n_classes, "softmax", rng=rng)


def one_hot(labels, n_classes):
    labels = np.asarray(labels, dtype=np.int64)
    return (labels[..., None] == np.arange(n_classes)).astype(np.float64)


def _clamped_log_onehot(y):
    return np.where(y > 0, np.log(np.where(y > 0, y, 1.0)), RCE_LOG_ZERO)


def sce_loss(probs, pseudo_onehot, alpha=0.7, beta=0.3):
    """``alpha * CE + beta * RCE`` for one sample (or the batch mean)."""
    p = np.atleast_2d(probs)
    y = np.atleast_2d(pseudo_onehot)
    ce = -(y * safe_log(p)).sum(axis=1)
    rce = -(p * _clamped_log_onehot(y)).sum(axis=1)
    return float((alpha * ce + beta * rce).mean())


def sce_grad(probs, pseudo_onehot, alpha=0.7, beta=0.3):
    """Gradient of the batch-mean SCE loss with respect to ``probs``."""
    p = np.atleast_2d(probs)
    y = np.atleast_2d(pseudo_onehot)
    g_ce = np.where(p > LOG_FLOOR, -y / np.maximum(p, LOG_FLOOR), 0.0)
    g_rce = -_clamped_log_onehot(y)
    return (alpha * g_ce + beta * g_rce) / p.shape[0]


def classify(trunk, head, x):
    h, _ = trunk.run(x)
    p, _ = head.forward(h)
    return p


@dataclass
class TrainingSubset:
    """Frozen (indices, pseudo labels) pair used between refreshes."""

    indices: np.ndarray
    labels: np.ndarray
    n_classes: int
    epoch: int

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.indices.flags.writeable = False
        self.labels.flags.writeable = False

    @property
    def onehot(self):
        return one_hot(self.labels, self.n_classes)

    def __len__(self):
        return len(self.indices)


def refresh_subset(epoch, period, current, rebuild):
    """Return ``rebuild(epoch)`` on refresh epochs, else the frozen ``current``."""
    if period < 1:
        raise ConfigError(f"refresh period must be >= 1, got {period}")
    if current is None or epoch % period == 0:
        return rebuild(epoch)
    return current


def classifier_loss_and_grads(trunk, head, x, onehot, alpha=0.7, beta=0.3):
    h, tape = trunk.run(x)
    p, cache = head.forward(h)
    loss = sce_loss(p, onehot, alpha, beta)
    if not np.isfinite(loss):
        raise NumericError("classifier loss is not finite")
    gh, head_grads = head.backward(cache, sce_grad(p, onehot, alpha, beta))
    trunk_grads, _ = backward(trunk, gh, tape)
    return loss, trunk_grads + head_grads


def classifier_train_step(trunk, head, opt, x, onehot, alpha=0.7, beta=0.3):
    loss, grads = classifier_loss_and_grads(trunk, head, x, onehot, alpha, beta)
    opt.step(grads)
    return loss


def make_classifier_optimizer(trunk, head, lr=1.8e-4):
    return Adam(trunk.params() + head.params(), lr=lr)
