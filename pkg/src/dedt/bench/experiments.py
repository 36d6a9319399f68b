"""Scaled ablation experiments on synthetic sequences.

Each (sequence, seed, variant) run is cached as a small JSON record keyed by
a fingerprint of the code that determines tracking results, so long sweeps
can be resumed and re-evaluated without re-tracking.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..config import TrackerConfig
from .metrics import evaluate
from .runner import Sequence, track_sequence
from .synth import SynthSpec, synth_sequence

log = logging.getLogger(__name__)

# modules whose source decides what a run produces
_RESULT_MODULES = (
    "imaging.py", "geometry.py", "committee.py", "auxiliary.py", "diversifier.py",
    "tracker.py", "config.py", "bench/synth.py", "bench/metrics.py", "bench/runner.py",
)


def code_fingerprint() -> str:
    root = Path(__file__).resolve().parent.parent
    h = hashlib.sha256()
    for name in _RESULT_MODULES:
        h.update(name.encode())
        h.update((root / name).read_bytes())
    return h.hexdigest()[:16]


def _spec_key(spec: SynthSpec) -> dict:
    # repr() of a frozenset depends on the string hash seed; sort it for a stable key
    d = dict(spec.__dict__)
    d["challenges"] = sorted(spec.challenges)
    return d


@dataclass
class RunSummary:
    sequence: str
    seed: int
    variant: str
    auc: float
    precision: float
    success_at_05: float
    q_av_mean: float
    fps: float
    seconds: float
    aux_queries: int
    samples: int

    @classmethod
    def from_dict(cls, d: dict) -> "RunSummary":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__})


@dataclass
class Sweep:
    """A grid of variants x sequences x seeds."""

    name: str
    base: TrackerConfig
    variants: dict  # label -> dict of config overrides
    specs: dict  # sequence name -> (SynthSpec, synth seed)
    seeds: list
    cache_dir: str | None = None
    paired: bool = False  # track each sequence only with its own synthesis seed
    runs: list = field(default_factory=list)

    def _cache_path(self, seq: str, seed: int, variant: str) -> Path | None:
        if not self.cache_dir:
            return None
        cfg = self.config_for(variant, seed)
        spec, synth_seed = self.specs[seq]
        key = json.dumps([cfg.to_dict(), _spec_key(spec), synth_seed], sort_keys=True, default=str)
        digest = hashlib.sha256(key.encode()).hexdigest()[:16]
        return Path(self.cache_dir) / code_fingerprint() / f"{self.name}-{seq}-s{seed}-{variant}-{digest}.json"

    def config_for(self, variant: str, seed: int) -> TrackerConfig:
        return self.base.replace(seed=seed, **self.variants[variant])

    def run(self, progress=None) -> list[RunSummary]:
        self.runs = []
        for seq_name in sorted(self.specs):
            spec, synth_seed = self.specs[seq_name]
            frames = truth = None
            for seed in ([synth_seed] if self.paired else self.seeds):
                for variant in self.variants:
                    path = self._cache_path(seq_name, seed, variant)
                    if path is not None and path.exists():
                        self.runs.append(RunSummary.from_dict(json.loads(path.read_text())))
                        continue
                    if frames is None:
                        frames, truth = synth_sequence(spec, synth_seed)
                    summary = self._track(Sequence(seq_name, frames, truth), seed, variant)
                    if path is not None:
                        path.parent.mkdir(parents=True, exist_ok=True)
                        tmp = path.with_suffix(".tmp")
                        tmp.write_text(json.dumps(summary.__dict__, indent=1))
                        os.replace(tmp, path)
                    self.runs.append(summary)
                    if progress:
                        progress(summary)
        return self.runs

    def _track(self, seq: Sequence, seed: int, variant: str) -> RunSummary:
        cfg = self.config_for(variant, seed)
        results, fps = track_sequence(seq, cfg)
        report = evaluate([r.state for r in results], seq.groundtruth)
        steps = results[1:]
        return RunSummary(
            sequence=seq.name, seed=seed, variant=variant,
            auc=report.auc, precision=report.precision, success_at_05=report.success_at_05,
            q_av_mean=float(np.mean([r.q_av for r in steps])),
            fps=fps, seconds=len(steps) / fps if fps > 0 else 0.0,
            aux_queries=int(sum(r.diagnostics["n_aux_queries"] for r in steps)),
            samples=cfg.n * len(steps),
        )

    def values(self, variant: str, metric: str) -> np.ndarray:
        """Per-(sequence, seed) values in a fixed order, for paired comparison."""
        rows = sorted((r for r in self.runs if r.variant == variant), key=lambda r: (r.sequence, r.seed))
        return np.array([getattr(r, metric) for r in rows], dtype=np.float64)

    def total_seconds(self) -> float:
        return float(sum(r.seconds for r in self.runs))


@dataclass
class Comparison:
    greater: str
    lesser: str
    metric: str
    mean_greater: float
    mean_lesser: float
    diff: float
    stderr: float

    @property
    def holds(self) -> bool:
        """Correct sign with the mean gap at least one standard error of the paired difference."""
        return self.diff > 0 and self.diff >= self.stderr

    def __str__(self) -> str:
        return (f"{self.metric}({self.greater})={self.mean_greater:.4f} > "
                f"{self.metric}({self.lesser})={self.mean_lesser:.4f}: "
                f"gap {self.diff:+.4f}, s.e. {self.stderr:.4f}")


def compare(sweep: Sweep, greater: str, lesser: str, metric: str) -> Comparison:
    a, b = sweep.values(greater, metric), sweep.values(lesser, metric)
    d = a - b
    se = float(d.std(ddof=1) / math.sqrt(len(d))) if len(d) > 1 else 0.0
    return Comparison(greater, lesser, metric, float(a.mean()), float(b.mean()), float(d.mean()), se)


def diversification_sweep(cache_dir=None, sequences: int = 5, seeds: int = 5, frames: int = 200) -> Sweep:
    base = TrackerConfig(C=15, k=23, n=400, m=80, m_prime=250)
    specs = {f"ivsv{i}": (SynthSpec(frames=frames, challenges=frozenset({"IV", "SV"})), i)
             for i in range(1, sequences + 1)}
    variants = {"full": {"mode": "full"}, "bag": {"mode": "bag"}, "art": {"mode": "art"}}
    return Sweep("diversification", base, variants, specs, list(range(seeds)), cache_dir)


def activeness_sweep(cache_dir=None, seeds: int = 5, frames: int = 100) -> Sweep:
    """One OCC sequence per seed, tracked with that same seed."""
    base = TrackerConfig(C=15, k=23, n=400, m=80, m_prime=250)
    specs = {f"occ{i}": (SynthSpec(frames=frames, challenges=frozenset({"OCC"})), i)
             for i in range(1, seeds + 1)}
    variants = {f"delta{d}": {"delta_override": d} for d in (0.0, 0.5, 1.0)}
    return Sweep("activeness", base, variants, specs, [], cache_dir, paired=True)


def competence_sweep(cache_dir=None, seeds: int = 5, frames: int = 100) -> Sweep:
    """Default configuration on plain sequences, seed s for both synthesis and tracking."""
    specs = {f"plain{i}": (SynthSpec(frames=frames), i) for i in range(1, seeds + 1)}
    return Sweep("competence", TrackerConfig(), {"default": {}}, specs, [], cache_dir, paired=True)
