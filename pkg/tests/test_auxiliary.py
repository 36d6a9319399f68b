import numpy as np
import pytest
from hypothesis import given, strategies as st

from dedt.auxiliary import (
    AuxiliaryModel, UninitializedAuxiliaryError, aux_batch_update, aux_label, train_hinge,
)


def model_with(w, b):
    m = AuxiliaryModel(len(w))
    m.weights = np.append(np.asarray(w, dtype=np.float64), b)
    m.last_trained = 1
    return m


def test_constant_classifiers_and_tie():
    f = np.random.default_rng(0).normal(size=(20, 3))
    assert set(model_with([0, 0, 0], 1.0).label(f)) == {1}
    assert set(model_with([0, 0, 0], -1.0).label(f)) == {-1}
    assert aux_label(model_with([1.0, -1.0, 0.0], 0.0), [2.0, 2.0, 5.0]) == 1


def test_uninitialized():
    with pytest.raises(UninitializedAuxiliaryError):
        aux_label(AuxiliaryModel(3), np.zeros(3))
    assert AuxiliaryModel(3).fingerprint() == "untrained"


def test_two_point_window():
    m = AuxiliaryModel(4)
    e1 = np.eye(4)[0]
    assert m.fit(np.stack([e1, -e1]), [1, -1], 1)
    assert aux_label(m, e1) == 1 and aux_label(m, -e1) == -1


def test_single_class_keeps_weights():
    m = AuxiliaryModel(2)
    m.fit(np.array([[1.0, 0], [-1, 0]]), [1, -1], 1)
    before = m.weights.copy()
    assert not m.fit(np.ones((5, 2)), [1] * 5, 10)
    assert np.array_equal(m.weights, before)
    assert m.diagnostics and m.last_trained == 10


def test_cadence_and_window():
    m = AuxiliaryModel(2)
    m.fit(np.array([[1.0, 0], [-1, 0]]), [1, -1], 1)
    before = m.weights.copy()
    for t in range(2, 8):
        m.observe(np.array([[0.0, 3], [0, -3]]), [1, -1], t)
    assert not aux_batch_update(m, 7, 10)
    assert np.array_equal(m.weights, before) and m.window_size() == 12
    assert aux_batch_update(m, 7, 7)
    assert m.last_trained == 7 and m.window_size() == 0
    assert aux_label(m, [0.0, 1.0]) == 1 and aux_label(m, [0.0, -1.0]) == -1
    with pytest.raises(ValueError):
        m.observe(np.zeros((1, 2)), [1], 7)


def test_deterministic_training():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(30, 5))
    y = np.where(X[:, 0] > 0, 1, -1)
    a, b = train_hinge(X, y), train_hinge(X, y)
    assert np.array_equal(a, b)
    m1, m2 = AuxiliaryModel(5), AuxiliaryModel(5)
    m1.fit(X, y, 1)
    m2.fit(X, y, 1)
    assert m1.fingerprint() == m2.fingerprint()


@st.composite
def separable(draw):
    n = draw(st.integers(2, 40))
    d = draw(st.integers(1, 16))
    seed = draw(st.integers(0, 2 ** 31))
    rng = np.random.default_rng(seed)
    w = rng.normal(size=d)
    w /= np.linalg.norm(w)
    X = rng.uniform(0, 1, size=(n, d))
    y = rng.choice([-1, 1], n)
    y[0], y[-1] = 1, -1
    # push every point at least 0.25 off the hyperplane through the centre
    proj = (X - 0.5) @ w
    X += ((0.25 + np.abs(proj)) * y - proj)[:, None] * w[None, :]
    return X, y


@given(separable())
def test_separable_window_fits_perfectly(data):
    X, y = data
    m = AuxiliaryModel(X.shape[1])
    assert m.fit(X, y, 1)
    assert np.array_equal(m.label(X), y)
