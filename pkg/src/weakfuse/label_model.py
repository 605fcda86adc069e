"""Sample-dependent label model over label-function votes.

Per sample, an accuracy network maps trunk features to one weight in (0, 1)
per label function; the class posterior is a softmax over the summed weights
of the functions voting for each class. The accuracy net is trained against
the classifier through a linear-softmax alignment head, plus an annealed
penalty pulling every weight to 0.5 (which makes early posteriors behave
like a majority vote).
"""
from __future__ import annotations

import numpy as np

from .errors import DomainError, NumericError, ShapeError
from .nn import LOG_FLOOR, Adam, Dense, Network, backward, safe_log, softmax

ABSTAIN = -1
DEFAULT_ACC_HIDDEN = (256, 128, 64)


def _check_votes(votes, n_classes):
    votes = np.asarray(votes)
    if not np.issubdtype(votes.dtype, np.integer):
        if not np.all(np.equal(np.mod(votes, 1), 0)):
            raise DomainError("votes must be integers")
        votes = votes.astype(np.int64)
    bad = (votes != ABSTAIN) & ((votes < 0) | (votes >= n_classes))
    if bad.any():
        v = votes[bad].flat[0]
        raise DomainError(f"vote {v} is not ABSTAIN and not a class index < {n_classes}")
    return votes


def potentials(votes_row, n_classes):
    """Indicator matrix (K, C): entry (k, y) is 1 iff function k voted y."""
    votes_row = _check_votes(np.atleast_1d(votes_row), n_classes)
    return (votes_row[..., None] == np.arange(n_classes)).astype(np.float64)


def non_abstained(votes):
    """Indices of rows with at least one non-abstain vote."""
    return np.flatnonzero((np.asarray(votes) != ABSTAIN).any(axis=1))


def posterior_from_potentials(phi, accuracies):
    """Batched posterior; ``phi`` is (B, K, C), ``accuracies`` (B, K)."""
    logits = np.einsum("bk,bkc->bc", accuracies, phi)
    return softmax(logits)


def label_posterior(votes_row, accuracies, n_classes):
    phi = potentials(votes_row, n_classes)
    acc = np.asarray(accuracies, dtype=np.float64)
    if acc.shape[-1] != phi.shape[-2]:
        raise ShapeError(f"{acc.shape[-1]} accuracies for {phi.shape[-2]} label functions")
    if phi.ndim == 2:
        return posterior_from_potentials(phi[None], acc[None])[0]
    return posterior_from_potentials(phi, acc)


def pseudo_label(dist):
    # np.argmax returns the first maximum: ties go to the lowest class
    return np.argmax(np.asarray(dist), axis=-1)


def majority_vote(votes, n_classes):
    votes = _check_votes(np.atleast_2d(votes), n_classes)
    counts = (votes[..., None] == np.arange(n_classes)).sum(axis=1)
    return np.argmax(counts, axis=1)


def entropy(dist):
    """Shannon entropy in nats along the last axis, with 0 log 0 = 0."""
    p = np.asarray(dist, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0)
    return -terms.sum(axis=-1)


def decay_weight(epoch, n_classes, delta=1.0):
    """Annealing factor ``C / (epoch * delta + 1)``, epochs counted from 0."""
    if delta <= 0:
        raise DomainError("delta must be positive")
    return n_classes / (epoch * delta + 1.0)


def decay_loss(accuracies, epoch, n_classes, delta=1.0):
    a = np.asarray(accuracies, dtype=np.float64)
    return float(decay_weight(epoch, n_classes, delta) * np.sum((a - 0.5) ** 2))


def alignment_loss(classifier_probs, lm_dist, head):
    """Cross-entropy of the head-mapped label posterior against classifier probs."""
    q, _ = head.forward(np.atleast_2d(lm_dist))
    p = np.atleast_2d(classifier_probs)
    return float(-(p * safe_log(q)).sum(axis=1).mean())


def make_alignment_head(n_classes):
    """Linear C→C layer with softmax, initialized to the identity map."""
    head = Dense(n_classes, n_classes, "softmax")
    head.W[...] = np.eye(n_classes)
    return head


class LabelModel:
    """Accuracy network plus alignment head."""

    def __init__(self, n_features, n_lfs, n_classes, hidden=DEFAULT_ACC_HIDDEN, rng=None):
        rng = np.random.default_rng(0) if rng is None else rng
        self.n_lfs = n_lfs
        self.n_classes = n_classes
        self.acc_net = Network.mlp([n_features, *hidden, n_lfs], out="sigmoid", rng=rng)
        self.align = make_alignment_head(n_classes)

    def params(self):
        return self.acc_net.params() + self.align.params()

    def accuracies(self, feats):
        out, _ = self.acc_net.run(feats)
        return out

    def posteriors(self, feats, votes):
        phi = potentials(votes, self.n_classes)
        return posterior_from_potentials(phi, self.accuracies(feats))

    def loss_and_grads(self, feats, votes, classifier_probs, epoch, delta=1.0, align_weight=1.0):
        """Mean ``align_weight * l_align + l_decay`` over the batch, with parameter grads.

        ``feats`` and ``classifier_probs`` are constants here.
        """
        feats = np.atleast_2d(feats)
        B = feats.shape[0]
        phi = potentials(votes, self.n_classes)
        A, acc_tape = self.acc_net.run(feats)
        L = posterior_from_potentials(phi, A)
        q, head_cache = self.align.forward(L)
        P = np.atleast_2d(classifier_probs)
        mu = decay_weight(epoch, self.n_classes, delta)

        align = -(P * safe_log(q)).sum(axis=1)
        decay = mu * ((A - 0.5) ** 2).sum(axis=1)
        loss = float((align_weight * align + decay).mean())
        if not np.isfinite(loss):
            raise NumericError("label-model loss is not finite")

        gq = np.where(q > LOG_FLOOR, -P / np.maximum(q, LOG_FLOOR), 0.0) * (align_weight / B)
        gL, head_grads = self.align.backward(head_cache, gq)
        glogits = L * (gL - (gL * L).sum(axis=1, keepdims=True))
        gA = np.einsum("bc,bkc->bk", glogits, phi) + 2.0 * mu * (A - 0.5) / B
        acc_grads, _ = backward(self.acc_net, gA, acc_tape)
        return loss, acc_grads + head_grads


def lm_train_step(model, opt, feats, votes, classifier_probs, epoch, delta=1.0, align_weight=1.0):
    """One Adam step on the label-model loss; returns the loss before the step."""
    loss, grads = model.loss_and_grads(feats, votes, classifier_probs, epoch, delta, align_weight)
    opt.step(grads)
    return loss


def make_lm_optimizer(model, lr=8e-5):
    return Adam(model.params(), lr=lr)
