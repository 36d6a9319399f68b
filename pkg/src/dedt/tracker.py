"""Per-frame tracking loop with committee labelling and auxiliary queries."""
from __future__ import annotations

import copy
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .auxiliary import AuxiliaryModel
from .committee import Committee, ensemble_from_scores, q_average_votes, sign, sq_norms
from .config import TrackerConfig
from .diversifier import FrameSamples, diversify_update
from .geometry import BoundingBox, SearchDistribution, apply_many, iou_many, sample_transforms
from .imaging import Frame, features_for_boxes, hog_dim

log = logging.getLogger(__name__)

DIAGNOSTIC_FIELDS = (
    "t", "eps_baseline", "eps_uncertain_ratio", "n_uncertain", "n_aux_queries", "q_av",
    "accepted", "attempts", "member_accepted", "member_attempts", "aux_retrained", "aux_hash",
    "best_index",
)


class DegenerateInitializationError(RuntimeError):
    pass


@dataclass
class Sample:
    candidate_box: BoundingBox
    transform: tuple[float, float, float]
    feature: np.ndarray
    score: float
    label: int
    was_uncertain: bool


@dataclass
class FrameResult:
    t: int
    state: BoundingBox
    best_score: float
    n_uncertain: int
    q_av: float
    diagnostics: dict = field(default_factory=dict)


def label_sample(s: float, f, aux: AuxiliaryModel | None, config: TrackerConfig) -> tuple[int, bool]:
    """Committee label when the normalised vote clears a threshold, else ask the auxiliary."""
    tau_l, tau_u = config.thresholds
    if s > tau_u:
        return 1, False
    if s < tau_l:
        return -1, False
    if aux is None:
        raise ValueError("auxiliary model required for a disputed sample")
    return int(aux.label(np.atleast_2d(f))[0]), bool(tau_l < s < tau_u)


def label_samples(s: np.ndarray, features: np.ndarray, aux: AuxiliaryModel,
                  config: TrackerConfig, query_aux: bool = True):
    """Vectorised :func:`label_sample`.

    Returns (labels, uncertain mask, aux-queried mask).  Scores sitting exactly
    on a threshold are queried but do not count as uncertain.
    """
    tau_l, tau_u = config.thresholds
    disputed = ~((s > tau_u) | (s < tau_l))
    uncertain = (s > tau_l) & (s < tau_u)
    labels = sign(s)
    if query_aux and disputed.any():
        labels[disputed] = aux.label(features[disputed])
    else:
        disputed = np.zeros_like(disputed)
    return labels, uncertain, disputed


def localize(member_scores: np.ndarray) -> int:
    """Candidate with the highest summed member confidence (first on ties)."""
    return int(np.argmax(member_scores.sum(axis=0)))


class Tracker:
    """Online tracker state; build with :meth:`init`, then call :meth:`step` per frame."""

    def __init__(self, config: TrackerConfig, committee: Committee, aux: AuxiliaryModel,
                 state: BoundingBox, rng: np.random.Generator, t: int = 1):
        self.config = config
        self.committee = committee
        self.aux = aux
        self.state = state
        self.rng = rng
        self.t = t
        self.record_diversity = False
        self.last_diversity = None
        self.last_samples = None
        self.last_committee = None
        self.last_rng = None

    @property
    def dim(self) -> int:
        return hog_dim(self.config.patch_size, self.config.cell_size)

    def features(self, frame: Frame, boxes: np.ndarray) -> np.ndarray:
        return features_for_boxes(frame, boxes, self.config.patch_size, self.config.cell_size)

    @classmethod
    def init(cls, frame1: Frame, init_box: BoundingBox, config: TrackerConfig) -> tuple["Tracker", FrameResult]:
        if not (0 <= init_box.x and 0 <= init_box.y
                and init_box.x + init_box.w <= frame1.width + 1e-9
                and init_box.y + init_box.h <= frame1.height + 1e-9):
            raise ValueError(f"initial box {init_box.as_tuple()} lies outside the first frame")
        rng = np.random.default_rng(config.seed)
        search = SearchDistribution.around(init_box, config.search_ratio, config.search_sigma_s)
        boxes = apply_many(init_box, sample_transforms(2 * config.n, search, rng))
        overlap = iou_many(boxes, init_box.as_array())

        bands = [(config.init_pos_iou, config.init_neg_iou), (0.6, 0.4)]
        for pos_t, neg_t in bands:
            pos = np.flatnonzero(overlap >= pos_t)
            neg = np.flatnonzero(overlap <= neg_t)
            if len(pos) >= config.k and len(neg) >= config.k:
                break
            log.warning("initialisation: %d positives / %d negatives at IoU bands (%.2f, %.2f)",
                        len(pos), len(neg), pos_t, neg_t)
        else:
            raise DegenerateInitializationError(
                f"only {len(pos)} positive and {len(neg)} negative initial samples (need k={config.k} each)"
            )

        idx = np.concatenate([pos, neg])
        feats = features_for_boxes(frame1, boxes[idx], config.patch_size, config.cell_size)
        labels = np.concatenate([np.ones(len(pos), np.int8), -np.ones(len(neg), np.int8)])
        dim = feats.shape[1]

        # every member sees its own random share of each class
        members = []
        sizes = [
            min(count, max(config.k, math.ceil(config.init_member_fraction * count)))
            for count in (len(pos), len(neg))
        ]
        pos_rows = np.arange(len(pos))
        neg_rows = np.arange(len(pos), len(idx))
        committee = Committee.empty(config.C, config.k, config.member_capacity, dim)
        for mem in committee:
            rows = np.sort(np.concatenate([
                rng.choice(pos_rows, size=sizes[0], replace=False),
                rng.choice(neg_rows, size=sizes[1], replace=False),
            ]))
            members.append(mem.extend(feats[rows], labels[rows], 1))
        committee = Committee(members)

        aux = AuxiliaryModel(dim, config.aux_lambda, config.aux_epochs)
        aux.fit(feats, labels, 1)

        tracker = cls(config, committee, aux, init_box, rng, t=1)
        scores = committee.member_scores(feats[:1])
        result = FrameResult(
            1, init_box, float(scores.mean()), 0,
            q_average_votes(committee.votes(feats), labels),
            {
                "t": 1, "eps_baseline": 0.0, "eps_uncertain_ratio": 0.0, "n_uncertain": 0,
                "n_aux_queries": 0, "q_av": None, "accepted": 0, "attempts": 0,
                "member_accepted": "", "member_attempts": "", "aux_retrained": 1,
                "aux_hash": aux.fingerprint(), "best_index": 0,
            },
        )
        result.diagnostics["q_av"] = result.q_av
        return tracker, result

    def _update_depth(self) -> int:
        cfg = self.config
        mode = cfg.mode
        depth = 0
        if mode != "art":
            depth += cfg.m
        if mode != "bag":
            depth += cfg.m_prime
        return depth

    def step(self, frame: Frame) -> FrameResult:
        cfg = self.config
        t = self.t + 1
        search = SearchDistribution.around(self.state, cfg.search_ratio, cfg.search_sigma_s)
        transforms = sample_transforms(cfg.n, search, self.rng)
        boxes = apply_many(self.state, transforms)
        feats = self.features(frame, boxes)
        f_sq = sq_norms(feats)

        depth = self._update_depth()
        caches = [mem.neighbor_cache(feats, f_sq, depth) for mem in self.committee]
        scores = np.stack([c.scores() for c in caches])
        s = ensemble_from_scores(scores)

        isolated = cfg.mode == "aux_isolated"
        labels, uncertain, queried = label_samples(s, feats, self.aux, cfg, query_aux=not isolated)

        if cfg.localization == "confidence":
            best = localize(scores)
        else:
            best = int(np.argmax(s))
        best_score = float(scores[:, best].mean())
        if isolated:
            decision = self.aux.decision(feats)
            j_aux = int(np.argmax(decision))
            aux_conf = math.tanh(float(decision[j_aux]))
            if aux_conf > best_score:
                best, best_score = j_aux, aux_conf
        self.state = BoundingBox.from_array(boxes[best])

        q_av = q_average_votes(sign(scores), labels)

        samples = FrameSamples(feats, labels, np.flatnonzero(uncertain), t, f_sq)
        bag = cfg.mode != "art"
        art = cfg.mode != "bag"
        if self.record_diversity:
            self.last_rng = copy.deepcopy(self.rng)
            self.last_samples = samples
            self.last_committee = self.committee
        result = diversify_update(
            self.committee, samples, self.rng,
            m=cfg.m, m_prime=cfg.m_prime, retries=cfg.R, bag=bag, artificial=art,
            member_scores=scores, caches=caches, record=self.record_diversity,
        )
        if self.record_diversity:
            self.last_diversity = result
        self.committee = result.committee

        retrained = False
        if cfg.mode == "aux_first":
            pass
        elif cfg.mode == "aux_short":
            retrained = self.aux.fit(feats, labels, t)
        else:
            self.aux.observe(feats, labels, t)
            if t % cfg.delta == 0:
                retrained = self.aux.retrain_on_window(t)

        self.t = t
        diag = {
            "t": t,
            "eps_baseline": result.eps_baseline,
            "eps_uncertain_ratio": result.eps_uncertain_ratio,
            "n_uncertain": int(uncertain.sum()),
            "n_aux_queries": int(queried.sum()),
            "q_av": q_av,
            "accepted": result.n_accepted,
            "attempts": result.total_attempts,
            "member_accepted": ";".join(str(int(a)) for a in result.accepted),
            "member_attempts": ";".join(str(a) for a in result.attempts),
            "aux_retrained": int(retrained),
            "aux_hash": self.aux.fingerprint(),
            "best_index": best,
        }
        return FrameResult(t, self.state, best_score, int(uncertain.sum()), q_av, diag)


def run_tracker(frames: list[Frame], init_box: BoundingBox, config: TrackerConfig,
                on_frame=None) -> list[FrameResult]:
    """Track a whole sequence; frame 1 initialises."""
    tracker, first = Tracker.init(frames[0], init_box, config)
    results = [first]
    if on_frame:
        on_frame(first)
    for frame in frames[1:]:
        res = tracker.step(frame)
        results.append(res)
        if on_frame:
            on_frame(res)
    return results
