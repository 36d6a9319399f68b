"""Diversifying committee update.

Each frame the committee is (1) bagged on random subsets of the uncertain
samples, then (2-5) every member is offered a set of artificial exemplars,
drawn from a per-dimension Gaussian fit of the frame's features and labelled
against the temporary committee's opinion.  A member keeps its artificial set
only if the committee's prediction error on the frame's samples drops below
the error of the committee before the update.

The accept/reject decision depends on an artificial exemplar's label only if
that exemplar lands among some real sample's k nearest neighbours.  Labels for
the rest are computed after the decision, and only for accepted sets.  The
random stream is consumed in the same way either way, so the result equals the
straightforward computation.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .committee import (
    Committee,
    CommitteeMember,
    NeighborCache,
    knn_select,
    sign,
    sq_distances,
    sq_norms,
)

STD_FLOOR = 1e-8


class InsufficientDataError(ValueError):
    pass


@dataclass
class EmpiricalModel:
    mean: np.ndarray
    std: np.ndarray


def fit_empirical(features) -> EmpiricalModel:
    """Per-dimension mean and population standard deviation (floored)."""
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if len(features) < 2:
        raise InsufficientDataError("need at least two feature vectors to fit the empirical model")
    return EmpiricalModel(features.mean(axis=0), np.maximum(features.std(axis=0), STD_FLOOR))


def draw_artificial(model: EmpiricalModel, m_prime: int, rng: np.random.Generator) -> np.ndarray:
    if m_prime < 1:
        raise ValueError("m_prime must be positive")
    z = rng.standard_normal((m_prime, len(model.mean)))
    return np.maximum(model.mean + z * model.std, 0.0)


def positive_probability(ensemble_scores, C: int) -> np.ndarray:
    """Fraction of members voting +1, kept inside [1/(2C), 1 - 1/(2C)]."""
    eps = 1.0 / (2 * C)
    return np.clip((1.0 + np.asarray(ensemble_scores)) / 2.0, eps, 1.0 - eps)


def select_positive_probability(p_pos) -> np.ndarray:
    """P(choose +1) when label choice is inversely proportional to P(label)."""
    p_pos = np.asarray(p_pos, dtype=np.float64)
    inv_pos = 1.0 / p_pos
    inv_neg = 1.0 / (1.0 - p_pos)
    return inv_pos / (inv_pos + inv_neg)


def labels_from_uniforms(p_select_pos, u) -> np.ndarray:
    return np.where(np.asarray(u) < p_select_pos, 1, -1).astype(np.int8)


def diverse_labels(temp_committee: Committee, artificial, rng: np.random.Generator) -> np.ndarray:
    artificial = np.atleast_2d(artificial)
    p_pos = positive_probability(temp_committee.ensemble_score(artificial), len(temp_committee))
    u = rng.random(len(artificial))
    return labels_from_uniforms(select_positive_probability(p_pos), u)


def prediction_error_votes(votes: np.ndarray, labels) -> float:
    """Fraction of (member, sample) pairs whose vote disagrees with the label."""
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ValueError("reference set is empty")
    return float(np.mean(votes != labels[None, :]))


def prediction_error(committee: Committee, features, labels) -> float:
    return prediction_error_votes(committee.votes(features), labels)


@dataclass
class FrameSamples:
    """The labelled sample set of one frame."""

    features: np.ndarray
    labels: np.ndarray
    uncertain: np.ndarray  # indices into features
    t: int
    sqnorms: np.ndarray | None = None

    def __post_init__(self):
        self.features = np.atleast_2d(np.asarray(self.features, dtype=np.float64))
        self.labels = np.asarray(self.labels, dtype=np.int8)
        self.uncertain = np.asarray(self.uncertain, dtype=np.intp)
        if self.sqnorms is None:
            self.sqnorms = sq_norms(self.features)


@dataclass
class AcceptanceEvent:
    member: int
    attempt: int
    eps_trial: float
    eps_baseline: float
    trial_member: CommitteeMember | None = None


@dataclass
class DiversifyResult:
    committee: Committee
    eps_baseline: float
    eps_uncertain_ratio: float
    accepted: list[bool]
    attempts: list[int]
    events: list[AcceptanceEvent] = field(default_factory=list)
    bag_committee: Committee | None = None

    @property
    def n_accepted(self) -> int:
        return int(sum(self.accepted))

    @property
    def total_attempts(self) -> int:
        return int(sum(self.attempts))


def _top_k(cache: NeighborCache, min_seq: int):
    """Each row's k nearest entries with seq >= min_seq (ties to the older entry)."""
    k = cache.k
    d2 = np.where(cache.seq < min_seq, np.inf, cache.d2)
    labels = np.broadcast_to(cache.labels, d2.shape)
    seq = np.broadcast_to(cache.seq, d2.shape)
    idx = np.argpartition(d2, k - 1, axis=1)[:, :k]
    kd = np.take_along_axis(d2, idx, axis=1)
    kth = kd.max(axis=1, keepdims=True)
    for r in np.flatnonzero((d2 <= kth).sum(axis=1) > k):
        idx[r] = np.lexsort((seq[r], d2[r]))[:k]
    kd = np.take_along_axis(d2, idx, axis=1)
    return kd, np.take_along_axis(labels, idx, axis=1), np.take_along_axis(seq, idx, axis=1)


# Bound on |float32 expansion - exact| relative to |q|^2 + |a|^2; a few
# times the worst case n * eps32 for 324-dimensional features.
SCREEN_GAMMA = 1e-4


def _screen(D: FrameSamples, A, A_sq, kth_rows, block: int) -> list[np.ndarray]:
    """Artificial columns that could be strictly closer than some row's k-th neighbour.

    A float32 pass with a rounding margin; never misses a relevant column.
    ``kth_rows[:, j]`` holds the thresholds for block ``j`` of A.
    """
    d32 = D.features.astype(np.float32) @ A.astype(np.float32).T
    d32 *= -2.0
    d32 += (D.sqnorms * (1 - SCREEN_GAMMA)).astype(np.float32)[:, None]
    d32 += (A_sq * (1 - SCREEN_GAMMA)).astype(np.float32)[None, :]
    out = []
    for j in range(A.shape[0] // block):
        cols = d32[:, j * block:(j + 1) * block]
        out.append(np.flatnonzero((cols < kth_rows[:, j:j + 1]).any(axis=0)))
    return out


@dataclass
class _MemberSetup:
    new_seq: np.ndarray  # insertion numbers the artificial set would get
    survives: np.ndarray  # which of them outlive the store's own eviction
    kd: np.ndarray  # (n, k) distances, labels, seq of the surviving k nearest
    kl: np.ndarray
    ks: np.ndarray
    kth: np.ndarray  # (n, 1)
    evicted_wrong: np.ndarray  # (n,) vote errors once the eviction alone is applied
    others_wrong: int
    own_wrong: int


@dataclass
class _Trial:
    c: int
    attempt: int
    A: np.ndarray
    A_sq: np.ndarray
    u: np.ndarray
    labels: np.ndarray
    known: np.ndarray = None

    def __post_init__(self):
        self.known = np.zeros(len(self.u), dtype=bool)

    def structure(self, D, st: _MemberSetup, cand, targets, k):
        """Which artificial samples join which rows' neighbour sets, and bounds on the error."""
        self.rows = np.zeros(0, dtype=np.intp)
        self.used = np.zeros(0, dtype=np.intp)
        fixed = st.others_wrong + st.own_wrong
        self.rest = fixed
        self.lo = self.hi = fixed
        cand = cand[st.survives[cand]]
        if not len(cand):
            return
        d_rel = sq_distances(D.features, D.sqnorms, self.A[cand], self.A_sq[cand])
        # newer exemplars lose distance ties, so only strictly closer ones matter
        enter = d_rel < st.kth
        rows = np.flatnonzero(enter.any(axis=1))
        if not len(rows):
            return
        sub_d = np.concatenate([st.kd[rows], np.where(enter[rows], d_rel[rows], np.inf)], axis=1)
        sub_s = np.concatenate([st.ks[rows], np.broadcast_to(st.new_seq[cand], (len(rows), len(cand)))], axis=1)
        sel = knn_select(sub_d, sub_s, k)
        S = (st.kl[rows] * sel[:, :k]).sum(axis=1)
        art_sel = sel[:, k:]
        e = art_sel.sum(axis=1)
        tgt = targets[rows]
        best = sign(S + e * tgt) == tgt
        worst = sign(S - e * tgt) == tgt
        # rows whose vote is settled whatever the labels turn out to be
        self.rest = fixed - int(st.evicted_wrong[rows].sum()) + int((~best).sum())
        open_rows = np.flatnonzero(best & ~worst)
        self.lo = self.rest
        self.hi = self.rest + len(open_rows)
        cols = np.flatnonzero(art_sel[open_rows].any(axis=0))
        self.rows = rows[open_rows]
        self.used = cand[cols]
        self.art_sel = art_sel[np.ix_(open_rows, cols)]
        self.S = S[open_rows]

    def exact_wrong(self, st: _MemberSetup, targets) -> int:
        if not len(self.rows):
            return self.lo
        votes = sign(self.S + self.art_sel @ self.labels[self.used])
        return self.rest + int((votes != targets[self.rows]).sum())


def _member_streams(rng: np.random.Generator, C: int) -> list[np.random.Generator]:
    frame_key = int(rng.integers(0, 2 ** 63 - 1))
    return [np.random.default_rng([frame_key, c]) for c in range(C)]


def diversify_update(
    committee: Committee,
    samples: FrameSamples,
    rng: np.random.Generator,
    *,
    m: int = 80,
    m_prime: int = 250,
    retries: int = 10,
    bag: bool = True,
    artificial: bool = True,
    member_scores: np.ndarray | None = None,
    caches: list[NeighborCache] | None = None,
    record: bool = False,
) -> DiversifyResult:
    """One frame of committee update.

    ``bag`` and ``artificial`` switch steps 1 and 2-5 individually.
    ``member_scores`` / ``caches`` may carry the scoring-phase results for
    ``samples`` (caches need depth >= m + m_prime).
    """
    C = len(committee)
    D = samples
    n = len(D.labels)
    U = D.uncertain
    t = D.t
    unchanged = DiversifyResult(committee, 0.0, len(U) / max(n, 1), [False] * C, [0] * C)

    if bag and len(U) == 0:
        # nothing uncertain: the committee is left as it is
        if member_scores is not None:
            unchanged.eps_baseline = prediction_error_votes(sign(member_scores), D.labels)
        return unchanged

    depth = (min(m, len(U)) if bag else 0) + (m_prime if artificial else 0)
    if caches is None or member_scores is None:
        caches = [mem.neighbor_cache(D.features, D.sqnorms, depth) for mem in committee]
        member_scores = np.stack([c.scores() for c in caches])
    base_votes = sign(member_scores)
    eps_base = prediction_error_votes(base_votes, D.labels)
    unchanged.eps_baseline = eps_base

    # step 1: bag on uncertain samples
    if bag:
        bag_size = min(m, len(U))
        d_uu = sq_distances(D.features, D.sqnorms, D.features[U], D.sqnorms[U])
        prime_members, prime_caches = [], []
        for c, mem in enumerate(committee):
            pick = rng.choice(len(U), size=bag_size, replace=False)
            rows = U[pick]
            cutoff = mem.eviction_cutoff(bag_size)
            new_seq = np.arange(mem.next_seq, mem.next_seq + bag_size)
            prime_members.append(mem.extend(D.features[rows], D.labels[rows], t, D.sqnorms[rows]))
            prime_caches.append(
                caches[c].with_additions(d_uu[:, pick], D.labels[rows].astype(np.float64), new_seq, cutoff)
            )
        prime = Committee(prime_members)
        prime_scores = np.stack([pc.scores() for pc in prime_caches])
    else:
        prime, prime_caches, prime_scores = committee, caches, member_scores

    if not artificial:
        return DiversifyResult(prime, eps_base, len(U) / n, [False] * C, [0] * C, bag_committee=prime)

    if n < 2:
        return DiversifyResult(prime, eps_base, len(U) / n, [False] * C, [0] * C, bag_committee=prime)

    # steps 2-5
    prime_votes = sign(prime_scores)
    labels_f = D.labels.astype(np.int8)
    prime_wrong = (prime_votes != labels_f[None, :])
    wrong_total = int(prime_wrong.sum())
    base_wrong = int((base_votes != labels_f[None, :]).sum())
    model = fit_empirical(D.features)
    streams = _member_streams(rng, C)
    accepted = [False] * C
    attempts = [0] * C
    events: list[AcceptanceEvent] = []

    def vote_share(queries):
        q_sq = sq_norms(queries)
        return sign(np.stack([pm.scores(queries, q_sq) for pm in prime])).sum(axis=0) / C

    # per-member state that does not depend on the attempt
    setup = []
    for c, pm in enumerate(prime):
        cutoff = pm.eviction_cutoff(m_prime)
        kd, kl, ks = _top_k(prime_caches[c], cutoff)
        new_seq = np.arange(pm.next_seq, pm.next_seq + m_prime)
        evicted_wrong = sign(kl.sum(axis=1)) != labels_f
        setup.append(_MemberSetup(new_seq, new_seq >= cutoff, kd, kl, ks, kd.max(axis=1, keepdims=True),
                                  evicted_wrong, wrong_total - int(prime_wrong[c].sum()),
                                  int(evicted_wrong.sum())))

    # Attempts run in rounds so that one pass over the stores labels the
    # artificial samples of every open member at once.  A trial is settled
    # from its neighbour structure alone when no labelling of the entering
    # samples could change the verdict.
    open_members = list(range(C))
    pending: dict[int, _Trial] = {}
    for attempt in range(1, retries + 1):
        if not open_members:
            break
        drawn = []
        for c in open_members:
            attempts[c] = attempt
            A = draw_artificial(model, m_prime, streams[c])
            drawn.append((c, A, streams[c].random(m_prime)))
        A_all = np.concatenate([d[1] for d in drawn])
        A_sq_all = sq_norms(A_all)
        kth_rows = np.stack([setup[c].kth[:, 0] for c, _, _ in drawn], axis=1)
        cand = _screen(D, A_all, A_sq_all, kth_rows, m_prime)
        undecided = []
        still_open = []
        for j, (c, A, u) in enumerate(drawn):
            trial = _Trial(c, attempt, A, A_sq_all[j * m_prime:(j + 1) * m_prime], u, np.zeros(m_prime))
            trial.structure(D, setup[c], cand[j], labels_f, prime[c].k)
            if trial.lo >= base_wrong:
                still_open.append(c)
            elif trial.hi < base_wrong:
                pending[c] = trial
            else:
                undecided.append(trial)
        if undecided:
            need = [tr.used for tr in undecided]
            share = vote_share(np.concatenate([tr.A[cols] for tr, cols in zip(undecided, need)]))
            p_sel = select_positive_probability(positive_probability(share, C))
            offset = 0
            for tr, cols in zip(undecided, need):
                tr.labels[cols] = labels_from_uniforms(p_sel[offset:offset + len(cols)], tr.u[cols])
                tr.known[cols] = True
                offset += len(cols)
                if tr.exact_wrong(setup[tr.c], labels_f) < base_wrong:
                    pending[tr.c] = tr
                else:
                    still_open.append(tr.c)
        open_members = sorted(still_open)

    # label the rest of every accepted artificial set in one batch
    new_members = list(prime.members)
    accepted_trials = [pending[c] for c in sorted(pending)]
    if accepted_trials:
        rests = [np.flatnonzero(~tr.known) for tr in accepted_trials]
        stacked = np.concatenate([tr.A[r] for tr, r in zip(accepted_trials, rests)])
        if len(stacked):
            p_sel = select_positive_probability(positive_probability(vote_share(stacked), C))
        offset = 0
        for tr, r in zip(accepted_trials, rests):
            if len(r):
                tr.labels[r] = labels_from_uniforms(p_sel[offset:offset + len(r)], tr.u[r])
                tr.known[r] = True
                offset += len(r)
            c = tr.c
            accepted[c] = True
            new_members[c] = prime[c].extend(tr.A, tr.labels, t, tr.A_sq)
            eps_trial = tr.exact_wrong(setup[c], labels_f) / (C * n)
            events.append(AcceptanceEvent(c, tr.attempt, eps_trial, eps_base,
                                          new_members[c] if record else None))

    return DiversifyResult(
        Committee(new_members), eps_base, len(U) / n, accepted, attempts, events,
        bag_committee=prime,
    )
