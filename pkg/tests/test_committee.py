import numpy as np
import pytest
from hypothesis import given, strategies as st

from dedt.committee import (
    Committee, CommitteeMember, average_pairwise, LabeledExemplar, UntrainedMemberError, ensemble_score,
    knn_select, member_score, q_average, q_average_votes, q_from_counts, q_statistic, sign,
    update_member,
)
from reference import brute_knn_score


def member_from(features, labels, k, capacity=None, t=1):
    m = CommitteeMember(k, capacity or max(len(labels), k), features.shape[1])
    return m.extend(features, labels, t)


def int_data(rng, n, d, hi=3):
    # small integers make every distance exact, so ties are frequent and deterministic
    return rng.integers(0, hi, (n, d)).astype(np.float64), rng.choice([-1, 1], n)


def test_sign_zero_positive():
    assert list(sign(np.array([-0.5, 0.0, 2.0]))) == [-1, 1, 1]


def test_member_validation():
    m = CommitteeMember(3, 10, 2)
    with pytest.raises(UntrainedMemberError):
        m.scores(np.zeros((1, 2)))
    with pytest.raises(ValueError):
        m.extend(np.zeros((2, 3)), [1, 1], 1)
    with pytest.raises(ValueError):
        m.extend(np.zeros((2, 2)), [1, 0], 1)
    with pytest.raises(ValueError):
        m.extend(np.zeros((0, 2)), [], 1)
    m2 = m.extend(np.zeros((3, 2)), [1, 1, -1], 5)
    with pytest.raises(ValueError):
        m2.extend(np.zeros((1, 2)), [1], 4)
    with pytest.raises(ValueError):
        CommitteeMember(4, 10, 2)


def test_extend_is_pure_and_fifo():
    m = member_from(np.arange(10.0)[:, None], [1] * 10, k=3, capacity=10)
    m2 = m.extend(np.array([[100.0], [101.0]]), [-1, -1], 2)
    assert len(m) == 10 and m.features[0, 0] == 0
    assert list(m2.features[:, 0]) == list(range(2, 10)) + [100, 101]
    assert list(m2.seq) == list(range(2, 12))
    big = m.extend(np.arange(30.0)[:, None] + 200, [1] * 30, 3)
    assert list(big.features[:, 0]) == list(range(220, 230))


def test_update_member_groups_by_time():
    m = CommitteeMember(1, 5, 1)
    batch = [LabeledExemplar(np.array([float(i)]), 1, t) for i, t in enumerate([1, 1, 2, 3, 3, 3])]
    out = update_member(m, batch)
    assert list(out.times) == [1, 2, 3, 3, 3]
    assert list(out.features[:, 0]) == [1, 2, 3, 4, 5]


@given(st.integers(0, 10 ** 6), st.integers(1, 60), st.integers(1, 8), st.sampled_from([1, 3, 5, 23]))
def test_member_score_matches_brute_force(seed, N, d, k):
    rng = np.random.default_rng(seed)
    N = max(N, k)
    X, y = int_data(rng, N, d)
    Q = rng.integers(0, 3, (10, d)).astype(np.float64)
    m = member_from(X, y, k)
    got = m.scores(Q)
    want = [brute_knn_score(m.features, m.labels, m.seq, q, k) for q in Q]
    assert np.array_equal(got, want)


@given(st.integers(0, 10 ** 6))
def test_member_score_continuous_high_dim(seed):
    rng = np.random.default_rng(seed)
    N = int(rng.integers(23, 500))
    X = rng.random((N, 324))
    y = rng.choice([-1, 1], N)
    Q = rng.random((5, 324))
    m = member_from(X, y, 23)
    want = [brute_knn_score(m.features, m.labels, m.seq, q, 23) for q in Q]
    assert np.array_equal(m.scores(Q), want)


@given(st.integers(0, 10 ** 6), st.integers(0, 40), st.integers(1, 40))
def test_neighbor_cache_exact_after_updates(seed, n_new, extra):
    rng = np.random.default_rng(seed)
    k, cap, d = 5, 30, 4
    X, y = int_data(rng, cap, d)
    m = member_from(X, y, k, capacity=cap)
    Q = rng.integers(0, 3, (12, d)).astype(np.float64)
    depth = n_new + extra
    cache = m.neighbor_cache(Q, None, depth)
    if n_new == 0:
        assert np.array_equal(cache.scores(), m.scores(Q))
        return
    A, yA = int_data(rng, n_new, d)
    m2 = m.extend(A, yA, 2)
    d_new = ((Q[:, None, :] - A[None]) ** 2).sum(axis=2)
    seq_new = np.arange(m.next_seq, m.next_seq + n_new)
    updated = cache.with_additions(d_new, yA.astype(float), seq_new, m.eviction_cutoff(n_new))
    assert np.array_equal(updated.scores(), m2.scores(Q))


@given(st.integers(0, 10 ** 6), st.integers(1, 6))
def test_knn_select_oracle(seed, k):
    rng = np.random.default_rng(seed)
    d2 = rng.integers(0, 4, (6, 10)).astype(float)
    order = np.tile(rng.permutation(10), (6, 1))
    sel = knn_select(d2, order, k)
    for r in range(6):
        best = sorted(range(10), key=lambda i: (d2[r, i], order[r, i]))[:k]
        assert set(np.flatnonzero(sel[r])) == set(best)


def test_committee_requires_shared_shape():
    with pytest.raises(ValueError):
        Committee([CommitteeMember(3, 10, 2)])
    with pytest.raises(ValueError):
        Committee([CommitteeMember(3, 10, 2), CommitteeMember(5, 10, 2)])


@given(st.integers(0, 10 ** 6))
def test_ensemble_score_matches_member_oracle(seed):
    rng = np.random.default_rng(seed)
    C = int(rng.integers(2, 8))
    members = []
    for _ in range(C):
        X, y = int_data(rng, int(rng.integers(3, 20)), 3)
        members.append(member_from(X, y, 3, capacity=20))
    com = Committee(members)
    f = rng.integers(0, 3, 3).astype(float)
    want = sum(1 if brute_knn_score(m.features, m.labels, m.seq, f, 3) >= 0 else -1 for m in members) / C
    got = ensemble_score(com, f)
    assert got == want
    assert round(got * C) == got * C  # on the lattice of C sign votes
    assert member_score(members[0], f) == brute_knn_score(members[0].features, members[0].labels,
                                                          members[0].seq, f, 3)


def test_q_statistic_examples():
    assert q_from_counts(5, 5, 0, 0) == 1
    assert q_from_counts(0, 0, 2, 3) == -1
    assert q_from_counts(3, 3, 1, 1) == pytest.approx(0.8, abs=1e-15)
    assert q_from_counts(4, 0, 0, 0) == 0.0


def _votes_for_counts(n_ff, n_bb, n_fb, n_bf):
    labels = np.ones(n_ff + n_bb + n_fb + n_bf, dtype=int)
    vi = np.array([1] * n_ff + [-1] * n_bb + [1] * n_fb + [-1] * n_bf)
    vj = np.array([1] * n_ff + [-1] * n_bb + [-1] * n_fb + [1] * n_bf)
    return vi, vj, labels


def test_q_statistic_counting():
    vi, vj, lab = _votes_for_counts(3, 3, 1, 1)
    assert q_statistic(vi, vj, lab) == pytest.approx(0.8)
    with pytest.raises(ValueError):
        q_statistic([], [], [])


@given(st.lists(st.sampled_from([-1, 1]), min_size=1, max_size=40), st.integers(0, 10 ** 6))
def test_q_symmetric_and_bounded(lab, seed):
    rng = np.random.default_rng(seed)
    lab = np.array(lab)
    vi = rng.choice([-1, 1], len(lab))
    vj = rng.choice([-1, 1], len(lab))
    q = q_statistic(vi, vj, lab)
    assert q == q_statistic(vj, vi, lab)
    assert -1 <= q <= 1


def test_q_average_examples():
    lab = np.array([1, 1, -1, -1, 1])
    v = np.array([1, -1, -1, 1, 1])
    assert q_average_votes(np.stack([v, v, v]), lab) == 1.0
    vi, vj, lab2 = _votes_for_counts(3, 3, 1, 1)
    assert q_average_votes(np.stack([vi, vj]), lab2) == pytest.approx(q_statistic(vi, vj, lab2))
    q = np.array([[1, 0.8, 0.8], [0.8, 1, -1], [0.8, -1, 1]])
    assert average_pairwise(q) == pytest.approx(0.2, abs=1e-15)
    rng = np.random.default_rng(0)
    V = rng.choice([-1, 1], (4, 30))
    L = rng.choice([-1, 1], 30)
    pairs = [q_statistic(V[i], V[j], L) for i in range(4) for j in range(i + 1, 4)]
    assert q_average_votes(V, L) == pytest.approx(np.mean(pairs), abs=1e-15)


def test_q_average_committee():
    rng = np.random.default_rng(2)
    X, y = int_data(rng, 20, 3)
    m = member_from(X, y, 3)
    com = Committee([m, m, m])
    Q = rng.integers(0, 3, (15, 3)).astype(float)
    labels = -com.votes(Q)[0]
    labels[:5] *= -1
    assert q_average(com, Q, labels) == 1.0
