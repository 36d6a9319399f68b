"""KNN committee: exemplar stores, member/ensemble scoring, Q-statistics.

A :class:`CommitteeMember` is treated as an immutable value: :meth:`extend`
returns a new member and never touches the arrays of the original, so
temporary committees can share stores freely.

Nearest neighbours are found by exact brute force over the store (BLAS
distance expansion).  Distance ties are resolved toward the exemplar that
was inserted first.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class UntrainedMemberError(RuntimeError):
    """A member was asked to score with fewer than k exemplars."""


@dataclass(frozen=True)
class LabeledExemplar:
    feature: np.ndarray
    label: int
    insert_time: int


def sign(x):
    """Sign with sign(0) := +1, returned as int8 in {-1, +1}."""
    return np.where(np.asarray(x) >= 0, 1, -1).astype(np.int8)


def sq_norms(x: np.ndarray) -> np.ndarray:
    return np.einsum("ij,ij->i", x, x)


def sq_distances(q, q_sq, e, e_sq):
    """Squared Euclidean distances between rows of q and rows of e."""
    d2 = q @ e.T
    d2 *= -2.0
    d2 += q_sq[:, None]
    d2 += e_sq[None, :]
    np.maximum(d2, 0.0, out=d2)
    return d2


def knn_vote(d2: np.ndarray, labels: np.ndarray, order: np.ndarray, k: int) -> np.ndarray:
    """Sum of labels over the k smallest entries of each row of ``d2``.

    ``labels`` and ``order`` are either 1-D (shared by every row) or the same
    shape as ``d2``.  Among equal distances the entry with the smaller
    ``order`` value wins.
    """
    n, N = d2.shape
    if N < k:
        raise UntrainedMemberError(f"member holds {N} exemplars, needs k={k}")
    shared = labels.ndim == 1
    if N == k:
        return np.broadcast_to(labels, d2.shape).sum(axis=1).astype(np.float64)
    kth = np.partition(d2, k - 1, axis=1)[:, k - 1:k]
    lt = d2 < kth
    le = d2 <= kth
    if shared:
        votes = le.astype(np.float64) @ labels
    else:
        votes = np.where(le, labels, 0.0).sum(axis=1)
    over = np.flatnonzero(le.sum(axis=1) > k)
    for r in over:
        lab = labels if shared else labels[r]
        ordr = order if shared else order[r]
        need = k - int(lt[r].sum())
        tied = np.flatnonzero(d2[r] == kth[r, 0])
        chosen = tied[np.argsort(ordr[tied], kind="stable")[:need]]
        votes[r] = lab[lt[r]].sum() + lab[chosen].sum()
    return votes


def knn_select(d2: np.ndarray, order: np.ndarray, k: int) -> np.ndarray:
    """Boolean mask of each row's k smallest entries, ties to the smaller ``order``."""
    n, N = d2.shape
    if N <= k:
        return np.ones(d2.shape, dtype=bool)
    kth = np.partition(d2, k - 1, axis=1)[:, k - 1:k]
    sel = d2 <= kth
    for r in np.flatnonzero(sel.sum(axis=1) > k):
        lt = d2[r] < kth[r, 0]
        tied = np.flatnonzero(d2[r] == kth[r, 0])
        chosen = tied[np.argsort(order[r, tied], kind="stable")[: k - int(lt.sum())]]
        sel[r] = lt
        sel[r, chosen] = True
    return sel


class CommitteeMember:
    """Bounded FIFO exemplar store with an exact k-nearest-neighbour scorer."""

    def __init__(self, k: int, capacity: int, dim: int):
        if k < 1 or k % 2 == 0:
            raise ValueError(f"k must be a positive odd number, got {k}")
        if capacity < k:
            raise ValueError("capacity must be at least k")
        self.k = k
        self.capacity = capacity
        self.dim = dim
        self.features = np.empty((0, dim))
        self.sqnorms = np.empty(0)
        self.labels = np.empty(0)
        self.times = np.empty(0, dtype=np.int64)
        self.seq = np.empty(0, dtype=np.int64)
        self.next_seq = 0

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def trained(self) -> bool:
        return len(self) >= self.k

    def _clone(self) -> "CommitteeMember":
        new = CommitteeMember.__new__(CommitteeMember)
        new.__dict__.update(self.__dict__)
        return new

    def eviction_cutoff(self, n_new: int) -> int:
        """Smallest surviving insertion number after appending ``n_new`` items."""
        evict = max(0, len(self) + n_new - self.capacity)
        if evict < len(self):
            return int(self.seq[evict])
        return self.next_seq + evict - len(self)

    def extend(self, features, labels, t: int, sqnorms=None) -> "CommitteeMember":
        """Return a new member with the batch appended, oldest evicted first."""
        features = np.atleast_2d(np.asarray(features, dtype=np.float64))
        labels = np.asarray(labels, dtype=np.float64).reshape(-1)
        if features.shape[1] != self.dim:
            raise ValueError(f"feature dimension {features.shape[1]} != member dimension {self.dim}")
        if len(features) != len(labels):
            raise ValueError("features and labels differ in length")
        if len(labels) == 0:
            raise ValueError("empty update batch")
        if not np.all(np.abs(labels) == 1):
            raise ValueError("labels must be +1 or -1")
        if len(self) and t < self.times[-1]:
            raise ValueError("insert times must be non-decreasing")
        if sqnorms is None:
            sqnorms = sq_norms(features)
        b = len(labels)
        new = self._clone()
        keep = max(0, len(self) + b - self.capacity)
        new.features = np.concatenate([self.features[keep:], features])[-self.capacity:]
        new.sqnorms = np.concatenate([self.sqnorms[keep:], sqnorms])[-self.capacity:]
        new.labels = np.concatenate([self.labels[keep:], labels])[-self.capacity:]
        new.times = np.concatenate([self.times[keep:], np.full(b, t, dtype=np.int64)])[-self.capacity:]
        new.seq = np.concatenate(
            [self.seq[keep:], np.arange(self.next_seq, self.next_seq + b, dtype=np.int64)]
        )[-self.capacity:]
        new.next_seq = self.next_seq + b
        return new

    def distances(self, queries, q_sq=None) -> np.ndarray:
        queries = np.atleast_2d(queries)
        if q_sq is None:
            q_sq = sq_norms(queries)
        return sq_distances(queries, q_sq, self.features, self.sqnorms)

    def scores(self, queries, q_sq=None, d2=None) -> np.ndarray:
        """(k_pos - k_neg) / k for each query row."""
        if not self.trained:
            raise UntrainedMemberError(f"member holds {len(self)} exemplars, needs k={self.k}")
        if d2 is None:
            d2 = self.distances(queries, q_sq)
        return knn_vote(d2, self.labels, self.seq, self.k) / self.k

    def neighbor_cache(self, queries=None, q_sq=None, depth: int = 0, d2=None) -> "NeighborCache":
        """Keep the ``k + depth`` nearest exemplars of each query.

        Good for rescoring the queries after up to ``depth`` evictions plus
        any number of additions.
        """
        if d2 is None:
            d2 = self.distances(queries, q_sq)
        n, N = d2.shape
        K = self.k + depth
        if K < N:
            idx = np.argpartition(d2, K - 1, axis=1)[:, :K]
            sub = np.take_along_axis(d2, idx, axis=1)
            edge = sub.max(axis=1, keepdims=True)
            if np.all((d2 <= edge).sum(axis=1) == K):
                return NeighborCache(sub, self.labels[idx], self.seq[idx], self.k)
        full = np.broadcast_to
        return NeighborCache(d2, full(self.labels, d2.shape), full(self.seq, d2.shape), self.k)

    def exemplars(self) -> list[LabeledExemplar]:
        return [
            LabeledExemplar(f.copy(), int(l), int(t))
            for f, l, t in zip(self.features, self.labels, self.times)
        ]

    def state_equal(self, other: "CommitteeMember") -> bool:
        return (
            self.k == other.k
            and self.capacity == other.capacity
            and self.next_seq == other.next_seq
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.seq, other.seq)
        )


@dataclass
class NeighborCache:
    """Candidate neighbour lists of a fixed query set against one store."""

    d2: np.ndarray
    labels: np.ndarray
    seq: np.ndarray
    k: int

    def with_additions(self, d2_new, labels_new, seq_new, min_seq: int) -> "NeighborCache":
        n = self.d2.shape[0]
        d2 = np.concatenate([self.d2, d2_new], axis=1)
        labels = np.concatenate([self.labels, np.broadcast_to(labels_new, (n, len(labels_new)))], axis=1)
        seq = np.concatenate([self.seq, np.broadcast_to(seq_new, (n, len(seq_new)))], axis=1)
        d2 = np.where(seq < min_seq, np.inf, d2)
        return NeighborCache(d2, labels, seq, self.k)

    def scores(self) -> np.ndarray:
        return knn_vote(self.d2, self.labels, self.seq, self.k) / self.k


class Committee:
    """C homogeneous KNN members sharing k, capacity and feature dimension."""

    def __init__(self, members: list[CommitteeMember]):
        if len(members) < 2:
            raise ValueError("a committee needs at least two members")
        first = members[0]
        for m in members[1:]:
            if (m.k, m.capacity, m.dim) != (first.k, first.capacity, first.dim):
                raise ValueError("committee members must share k, capacity and dimension")
        self.members = list(members)

    @classmethod
    def empty(cls, size: int, k: int, capacity: int, dim: int) -> "Committee":
        return cls([CommitteeMember(k, capacity, dim) for _ in range(size)])

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def __getitem__(self, i) -> CommitteeMember:
        return self.members[i]

    @property
    def k(self) -> int:
        return self.members[0].k

    @property
    def dim(self) -> int:
        return self.members[0].dim

    def replace(self, index: int, member: CommitteeMember) -> "Committee":
        members = list(self.members)
        members[index] = member
        return Committee(members)

    def member_scores(self, queries, q_sq=None) -> np.ndarray:
        """(C, n) matrix of member scores."""
        queries = np.atleast_2d(queries)
        if q_sq is None:
            q_sq = sq_norms(queries)
        return np.stack([m.scores(queries, q_sq) for m in self.members])

    def votes(self, queries, q_sq=None) -> np.ndarray:
        return sign(self.member_scores(queries, q_sq))

    def ensemble_score(self, queries, q_sq=None) -> np.ndarray:
        return ensemble_from_scores(self.member_scores(queries, q_sq))

    def state_equal(self, other: "Committee") -> bool:
        return len(self) == len(other) and all(
            a.state_equal(b) for a, b in zip(self.members, other.members)
        )


def ensemble_from_scores(member_scores: np.ndarray) -> np.ndarray:
    """Normalised majority vote (1/C) * sum_c sign(score_c)."""
    return sign(member_scores).sum(axis=0) / member_scores.shape[0]


def member_score(member: CommitteeMember, f) -> float:
    return float(member.scores(np.atleast_2d(f))[0])


def ensemble_score(committee: Committee, f) -> float:
    return float(committee.ensemble_score(np.atleast_2d(f))[0])


def update_member(member: CommitteeMember, batch: list[LabeledExemplar]) -> CommitteeMember:
    """Append exemplars one batch at a time, grouping runs of equal insert time."""
    if not batch:
        raise ValueError("empty update batch")
    for ex in batch:
        if np.asarray(ex.feature).shape != (member.dim,):
            raise ValueError(f"feature dimension mismatch: expected {member.dim}")
    out = member
    start = 0
    while start < len(batch):
        stop = start
        t = batch[start].insert_time
        while stop < len(batch) and batch[stop].insert_time == t:
            stop += 1
        chunk = batch[start:stop]
        out = out.extend(np.stack([e.feature for e in chunk]), [e.label for e in chunk], t)
        start = stop
    return out


def q_statistic(votes_i, votes_j, labels) -> float:
    """Yule's Q between two members, counting correct ("f") and wrong ("b") calls.

    Returns 0 when the denominator vanishes.
    """
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ValueError("Q-statistic needs a nonempty evaluation set")
    ci = np.asarray(votes_i) == labels
    cj = np.asarray(votes_j) == labels
    return q_from_counts(
        int(np.sum(ci & cj)), int(np.sum(~ci & ~cj)), int(np.sum(ci & ~cj)), int(np.sum(~ci & cj))
    )


def q_from_counts(n_ff: int, n_bb: int, n_fb: int, n_bf: int) -> float:
    num = n_ff * n_bb - n_fb * n_bf
    den = n_ff * n_bb + n_fb * n_bf
    return num / den if den else 0.0


def q_average_votes(votes: np.ndarray, labels) -> float:
    """Mean pairwise Q over a (C, n) vote matrix."""
    C = votes.shape[0]
    if C < 2:
        raise ValueError("Q average needs at least two members")
    correct = (votes == np.asarray(labels)[None, :]).astype(np.int64)
    wrong = 1 - correct
    n_ff = correct @ correct.T
    n_bb = wrong @ wrong.T
    n_fb = correct @ wrong.T
    num = n_ff * n_bb - n_fb * n_fb.T
    den = n_ff * n_bb + n_fb * n_fb.T
    return average_pairwise(np.divide(num, den, out=np.zeros(num.shape), where=den != 0))


def average_pairwise(q: np.ndarray) -> float:
    """2 / (C (C - 1)) * sum over i < j of a symmetric (C, C) matrix."""
    iu = np.triu_indices(q.shape[0], 1)
    return float(q[iu].mean())


def q_average(committee: Committee, features, labels) -> float:
    return q_average_votes(committee.votes(features), labels)
