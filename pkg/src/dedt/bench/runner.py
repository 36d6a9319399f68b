"""Multi-run benchmark over a set of sequences."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from ..config import TrackerConfig
from ..tracker import Tracker
from .metrics import EvalReport, evaluate

log = logging.getLogger(__name__)


@dataclass
class Sequence:
    name: str
    frames: list
    groundtruth: list
    attributes: frozenset = field(default_factory=frozenset)


@dataclass
class RunRecord:
    seed: int
    trajectory: list
    q_av: list
    fps: float
    report: EvalReport


@dataclass
class SequenceResult:
    name: str
    attributes: frozenset
    runs: list = field(default_factory=list)
    report: EvalReport | None = None
    error: str | None = None


@dataclass
class BenchmarkResult:
    sequences: list
    aggregate: dict
    per_attribute: dict
    failures: dict


def track_sequence(seq: Sequence, config: TrackerConfig):
    tracker, first = Tracker.init(seq.frames[0], seq.groundtruth[0], config)
    results = [first]
    start = time.perf_counter()
    for frame in seq.frames[1:]:
        results.append(tracker.step(frame))
    elapsed = time.perf_counter() - start
    fps = (len(seq.frames) - 1) / elapsed if elapsed > 0 else float("inf")
    return results, fps


def _mean_report(records: list[RunRecord]) -> EvalReport:
    reports = [r.report for r in records]
    keys = reports[0].precision_curve.keys()
    q = [np.mean([v for v in r.q_av if v is not None]) for r in records]
    out = EvalReport(
        auc=float(np.mean([r.auc for r in reports])),
        auc_trapezoid=float(np.mean([r.auc_trapezoid for r in reports])),
        precision=float(np.mean([r.precision for r in reports])),
        precision_curve={k: float(np.mean([r.precision_curve[k] for r in reports])) for k in keys},
        success_at_05=float(np.mean([r.success_at_05 for r in reports])),
        mean_iou=float(np.mean([r.mean_iou for r in reports])),
        frames=reports[0].frames,
        q_av_mean=float(np.mean(q)),
        fps=float(np.mean([r.fps for r in records])),
        runs=len(records),
        per_run=[{"seed": r.seed, "auc": r.report.auc, "precision": r.report.precision,
                  "success_at_05": r.report.success_at_05, "q_av_mean": q[i], "fps": r.fps}
                 for i, r in enumerate(records)],
    )
    return out


def run_benchmark(sequences: list[Sequence], config: TrackerConfig, runs: int = 5) -> BenchmarkResult:
    """Track every sequence ``runs`` times with seeds seed+0 .. seed+runs-1."""
    if runs < 1:
        raise ValueError("runs must be at least 1")
    results, failures = [], {}
    for seq in sorted(sequences, key=lambda s: s.name):
        res = SequenceResult(seq.name, frozenset(seq.attributes))
        try:
            for r in range(runs):
                cfg = config.replace(seed=config.seed + r)
                frame_results, fps = track_sequence(seq, cfg)
                traj = [fr.state for fr in frame_results]
                q = [fr.q_av for fr in frame_results[1:]]
                report = evaluate(traj, seq.groundtruth, q_av_mean=float(np.mean(q)) if q else None, fps=fps)
                res.runs.append(RunRecord(cfg.seed, traj, q, fps, report))
            res.report = _mean_report(res.runs)
        except Exception as exc:  # recorded and excluded from aggregates
            log.error("sequence %s failed: %s", seq.name, exc)
            res.error = f"{type(exc).__name__}: {exc}"
            failures[seq.name] = res.error
        results.append(res)

    ok = [r for r in results if r.error is None]
    aggregate = _aggregate(ok)
    per_attribute = {}
    tags = sorted({a for r in ok for a in r.attributes})
    for tag in tags:
        per_attribute[tag] = _aggregate([r for r in ok if tag in r.attributes])
    return BenchmarkResult(results, aggregate, per_attribute, failures)


def _aggregate(results: list[SequenceResult]) -> dict:
    if not results:
        return {}
    reps = [r.report for r in results]
    return {
        "sequences": len(reps),
        "auc": float(np.mean([r.auc for r in reps])),
        "precision": float(np.mean([r.precision for r in reps])),
        "success_at_05": float(np.mean([r.success_at_05 for r in reps])),
        "q_av_mean": float(np.mean([r.q_av_mean for r in reps])),
        "fps": float(np.mean([r.fps for r in reps])),
    }
