import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from weakfuse.errors import DomainError
from weakfuse.metrics import ari, classification_report, confusion_matrix, frechet2d

sklearn_metrics = pytest.importorskip("sklearn.metrics")
scipy_linalg = pytest.importorskip("scipy.linalg")


def test_perfect_prediction():
    r = classification_report([0, 1, 2, 1], [0, 1, 2, 1], 3)
    assert r.accuracy == 1.0
    assert r.macro_precision == r.macro_recall == r.macro_f1 == 1.0


def test_constant_predictor():
    r = classification_report([0, 0, 0, 0], [0, 1, 0, 1], 2)
    assert r.accuracy == 0.5
    assert r.recall[1] == 0.0
    assert r.precision[1] == 0.0  # nothing predicted as class 1


def test_three_class_hand_example():
    # gold rows, pred columns:
    # [[2, 1, 0],
    #  [0, 1, 1],
    #  [1, 0, 2]]
    gold = [0, 0, 0, 1, 1, 2, 2, 2]
    pred = [0, 0, 1, 1, 2, 0, 2, 2]
    r = classification_report(pred, gold, 3)
    prec = [2 / 3, 1 / 2, 2 / 3]
    rec = [2 / 3, 1 / 2, 2 / 3]
    f1 = [2 * p * q / (p + q) for p, q in zip(prec, rec)]
    assert_allclose(r.precision, prec)
    assert_allclose(r.recall, rec)
    assert r.macro_f1 == pytest.approx(np.mean(f1))
    assert r.accuracy == pytest.approx(5 / 8)
    assert confusion_matrix(pred, gold, 3).tolist() == [[2, 1, 0], [0, 1, 1], [1, 0, 2]]


def test_report_length_mismatch():
    with pytest.raises(DomainError):
        classification_report([0, 1], [0], 2)
    with pytest.raises(DomainError):
        classification_report([0, 3], [0, 1], 2)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 80), C=st.integers(2, 6))
def test_report_matches_sklearn(seed, n, C):
    rng = np.random.default_rng(seed)
    gold = rng.integers(0, C, n)
    pred = rng.integers(0, C, n)
    r = classification_report(pred, gold, C)
    labels = list(range(C))
    p, q, f, _ = sklearn_metrics.precision_recall_fscore_support(
        gold, pred, labels=labels, average=None, zero_division=0)
    assert_allclose(r.precision, p)
    assert_allclose(r.recall, q)
    assert_allclose(r.f1, f)
    assert r.macro_f1 == pytest.approx(np.mean(f))
    assert r.accuracy == pytest.approx(sklearn_metrics.accuracy_score(gold, pred))
    assert all(0.0 <= x <= 1.0 for x in r.precision + r.recall + r.f1)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 60), C=st.integers(2, 5))
def test_macro_f1_invariant_to_relabeling(seed, n, C):
    rng = np.random.default_rng(seed)
    gold = rng.integers(0, C, n)
    pred = rng.integers(0, C, n)
    perm = rng.permutation(C)
    a = classification_report(pred, gold, C).macro_f1
    b = classification_report(perm[pred], perm[gold], C).macro_f1
    assert a == pytest.approx(b, abs=1e-12)


def test_ari_examples():
    assert ari([0, 0, 1, 1], [1, 1, 0, 0]) == 1.0
    assert ari([0, 0, 1, 1], [0, 1, 0, 1]) == pytest.approx(-0.5)
    a = [3, 1, 1, 2, 3, 0]
    assert ari(a, a) == 1.0
    with pytest.raises(DomainError):
        ari([0, 1], [0])
    with pytest.raises(DomainError):
        ari([0], [0])


@settings(max_examples=150, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 80), ka=st.integers(1, 5), kb=st.integers(1, 5))
def test_ari_matches_sklearn_and_is_permutation_invariant(seed, n, ka, kb):
    rng = np.random.default_rng(seed)
    a = rng.integers(0, ka, n)
    b = rng.integers(0, kb, n)
    val = ari(a, b)
    assert val == pytest.approx(sklearn_metrics.adjusted_rand_score(a, b), abs=1e-12)
    assert ari(rng.permutation(ka)[a], b) == pytest.approx(val, abs=1e-12)
    assert ari(a, rng.permutation(kb)[b] + 7) == pytest.approx(val, abs=1e-12)


def _frechet_oracle(a, b):
    ma, mb = a.mean(0), b.mean(0)
    ca = np.atleast_2d(np.cov(a, rowvar=False))
    cb = np.atleast_2d(np.cov(b, rowvar=False))
    root = scipy_linalg.sqrtm(ca @ cb).real
    return float(((ma - mb) ** 2).sum() + np.trace(ca + cb - 2 * root))


def test_frechet_examples():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(50, 2))
    assert frechet2d(x, x) == pytest.approx(0.0, abs=1e-9)
    a = rng.normal(scale=1e-6, size=(100, 2))
    b = np.array([3.0, 4.0]) + rng.normal(scale=1e-6, size=(100, 2))
    assert frechet2d(a, b) == pytest.approx(25.0, abs=1e-6)
    big = 200_000
    d = frechet2d(rng.normal(size=(big, 2)), rng.normal(scale=2.0, size=(big, 2)))
    assert d == pytest.approx(2.0, abs=0.05)


def test_frechet_errors():
    with pytest.raises(DomainError):
        frechet2d(np.zeros((1, 2)), np.zeros((5, 2)))
    with pytest.raises(DomainError):
        frechet2d(np.zeros((5, 17)), np.zeros((5, 17)))


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), d=st.integers(1, 5))
def test_frechet_matches_oracle_and_is_symmetric(seed, d):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(40, d)) @ rng.normal(size=(d, d)) + rng.normal(size=d)
    b = rng.normal(size=(30, d)) * rng.uniform(0.5, 2, size=d)
    f = frechet2d(a, b)
    assert f >= 0.0
    assert f == pytest.approx(frechet2d(b, a), abs=1e-9)
    assert f == pytest.approx(max(_frechet_oracle(a, b), 0.0), rel=1e-6, abs=1e-8)
