import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from weakfuse.errors import DomainError
from weakfuse.label_model import (
    ABSTAIN,
    LabelModel,
    alignment_loss,
    decay_loss,
    decay_weight,
    entropy,
    label_posterior,
    lm_train_step,
    majority_vote,
    make_alignment_head,
    make_lm_optimizer,
    non_abstained,
    potentials,
    pseudo_label,
)

from conftest import central_diff, rel_error


@st.composite
def vote_rows(draw, max_k=8, max_c=5):
    C = draw(st.integers(2, max_c))
    K = draw(st.integers(1, max_k))
    row = draw(st.lists(st.integers(-1, C - 1), min_size=K, max_size=K))
    return np.array(row), C


def test_potentials_examples():
    assert_array_equal(potentials([1], 3), [[0, 1, 0]])
    assert_array_equal(potentials([ABSTAIN], 3), [[0, 0, 0]])
    assert_array_equal(potentials([0, ABSTAIN], 2), [[1, 0], [0, 0]])


def test_potentials_rejects_out_of_range_vote():
    with pytest.raises(DomainError):
        potentials([0, 3], 3)
    with pytest.raises(DomainError):
        potentials([-2], 3)


def test_all_abstain_is_uniform():
    assert_allclose(label_posterior([-1, -1, -1], [0.9, 0.2, 0.6], 4), [0.25] * 4)


def test_posterior_two_to_one_votes():
    # oracle: class 1 collects 2 * 0.5, class 0 collects 0.5
    p = label_posterior([1, 1, 0], [0.5, 0.5, 0.5], 2)
    assert p[1] == pytest.approx(1.0 / (1.0 + np.exp(-0.5)), abs=1e-12)
    assert p[1] == pytest.approx(0.62246, abs=1e-5)
    assert pseudo_label(p) == 1


def test_pseudo_label_ties_go_low():
    assert pseudo_label([0.1, 0.7, 0.2]) == 1
    assert pseudo_label([0.5, 0.5]) == 0


def test_entropy_examples():
    assert entropy([0.0, 1.0, 0.0]) == 0.0
    assert entropy([0.25] * 4) == pytest.approx(np.log(4))
    assert entropy([0.5, 0.5]) == pytest.approx(0.69315, abs=1e-5)


def test_decay_examples():
    assert decay_loss([0.5, 0.5, 0.5], 7, 10) == 0.0
    assert decay_loss([1.0, 1.0], 0, 10, 1.0) == pytest.approx(5.0)
    mus = [decay_weight(e, 4, 0.5) for e in range(20)]
    assert all(a > b for a, b in zip(mus, mus[1:]))
    with pytest.raises(DomainError):
        decay_weight(0, 4, 0.0)


def test_alignment_examples():
    head = make_alignment_head(3)
    # identity-initialized head keeps a confident posterior confident
    sharp = np.array([0.0, 60.0, 0.0])
    q, _ = head.forward(sharp)
    assert alignment_loss(q, sharp, head) == pytest.approx(0.0, abs=1e-12)
    head2 = make_alignment_head(2)
    assert alignment_loss([0.5, 0.5], [0.5, 0.5], head2) == pytest.approx(np.log(2))


def test_majority_vote_helper():
    votes = np.array([[0, 1, 1], [2, -1, -1], [-1, -1, -1], [0, 1, -1]])
    assert_array_equal(majority_vote(votes, 3), [1, 2, 0, 0])
    assert_array_equal(non_abstained(votes), [0, 1, 3])


@settings(max_examples=300, deadline=None)
@given(vr=vote_rows(), acc=st.floats(0.01, 0.99))
def test_posterior_normalized(vr, acc):
    row, C = vr
    accs = np.random.default_rng(len(row)).uniform(0.01, 0.99, size=len(row))
    for a in (accs, np.full(len(row), acc)):
        p = label_posterior(row, a, C)
        assert abs(p.sum() - 1.0) <= 1e-9
        assert np.all(p >= 0)


@settings(max_examples=300, deadline=None)
@given(vr=vote_rows(), a=st.floats(0.001, 1.0))
def test_constant_accuracy_reduces_to_majority_vote(vr, a):
    row, C = vr
    p = label_posterior(row, np.full(len(row), a), C)
    assert pseudo_label(p) == majority_vote(row[None], C)[0]


@settings(max_examples=300, deadline=None)
@given(vr=vote_rows(), seed=st.integers(0, 2**32 - 1), bump=st.floats(0.01, 0.5))
def test_vote_monotonicity(vr, seed, bump):
    row, C = vr
    assume((row != ABSTAIN).any())
    rng = np.random.default_rng(seed)
    acc = rng.uniform(0.05, 0.45, size=len(row))
    k = int(rng.choice(np.flatnonzero(row != ABSTAIN)))
    before = label_posterior(row, acc, C)[row[k]]
    acc[k] += bump
    after = label_posterior(row, acc, C)[row[k]]
    # strict unless the class already had all the mass to float precision
    assert after > before or before == 1.0


@settings(max_examples=200, deadline=None)
@given(vr=vote_rows(), a_new=st.floats(0.0, 1.0))
def test_abstaining_lf_is_neutral(vr, a_new):
    row, C = vr
    acc = np.linspace(0.2, 0.8, len(row))
    p = label_posterior(row, acc, C)
    q = label_posterior(np.append(row, ABSTAIN), np.append(acc, a_new), C)
    assert_array_equal(p, q)


def _small_model(seed, n_features=3, K=4, C=3):
    rng = np.random.default_rng(seed)
    lm = LabelModel(n_features, K, C, hidden=(8, 6), rng=rng)
    feats = rng.normal(size=(5, n_features))
    votes = rng.integers(-1, C, size=(5, K))
    cls = rng.dirichlet(np.ones(C), size=5)
    return lm, feats, votes, cls


@pytest.mark.parametrize("seed", range(4))
def test_lm_loss_gradient(seed):
    lm, feats, votes, cls = _small_model(seed)
    # move the head off the identity so its gradient is generic
    lm.align.W += np.random.default_rng(seed).normal(scale=0.3, size=lm.align.W.shape)
    _, grads = lm.loss_and_grads(feats, votes, cls, epoch=2, delta=0.5)
    num = central_diff(lambda: lm.loss_and_grads(feats, votes, cls, 2, 0.5)[0], lm.params())
    assert rel_error(grads, num) <= 1e-4


def test_alignment_function_matches_model_loss():
    lm, feats, votes, cls = _small_model(3)
    L = lm.posteriors(feats, votes)
    loss, _ = lm.loss_and_grads(feats, votes, cls, epoch=0, align_weight=1.0)
    A = lm.accuracies(feats)
    decay = np.mean([decay_loss(a, 0, 3) for a in A])
    assert loss == pytest.approx(alignment_loss(cls, L, lm.align) + decay, rel=1e-12)


def test_decay_only_training_drives_accuracies_to_half():
    rng = np.random.default_rng(0)
    lm = LabelModel(2, 6, 4, rng=rng)
    feats = rng.normal(size=(64, 2))
    votes = rng.integers(-1, 4, size=(64, 6))
    # push the sigmoid outputs away from 0.5 first
    lm.acc_net.layers[-1].b[:] = 2.0
    assert np.abs(lm.accuracies(feats) - 0.5).max() > 0.3
    opt = make_lm_optimizer(lm, lr=1e-3)
    cls = np.full((64, 4), 0.25)
    for _ in range(200):
        lm_train_step(lm, opt, feats, votes, cls, epoch=0, align_weight=0.0)
    assert np.abs(lm.accuracies(feats) - 0.5).max() < 0.05
    # after decay-only pretraining the label model is a majority vote wherever
    # the vote has a strict winner (near-equal weights may split exact ties)
    counts = np.sort((votes[..., None] == np.arange(4)).sum(axis=1), axis=1)
    strict = counts[:, -1] > counts[:, -2]
    pred = pseudo_label(lm.posteriors(feats, votes))
    assert_array_equal(pred[strict], majority_vote(votes, 4)[strict])


def test_lm_loss_decreases_on_fixed_batch():
    lm, feats, votes, cls = _small_model(11)
    opt = make_lm_optimizer(lm, lr=1e-3)
    losses = [lm_train_step(lm, opt, feats, votes, cls, epoch=1) for _ in range(10)]
    losses.append(lm.loss_and_grads(feats, votes, cls, 1)[0])
    assert losses[-1] < losses[0]


def test_fixed_point_has_vanishing_gradient():
    lm = LabelModel(2, 3, 2, hidden=(4,), rng=np.random.default_rng(0))
    for layer in lm.acc_net.layers:
        layer.W[...] = 0.0
        layer.b[...] = 0.0
    feats = np.ones((2, 2))
    votes = np.array([[0, 0, 0], [1, 1, 1]])
    q, _ = lm.align.forward(lm.posteriors(feats, votes))
    # zero weights give A = 0.5 exactly, and P = F(L) zeroes the head-logit gradient
    _, grads = lm.loss_and_grads(feats, votes, q, epoch=10**9)
    assert max(np.abs(g).max() for g in grads) < 1e-12


def test_lm_accuracies_in_unit_interval(rng):
    lm = LabelModel(3, 5, 2, rng=rng)
    A = lm.accuracies(rng.normal(size=(10, 3)) * 50)
    assert np.all((A >= 0) & (A <= 1))
