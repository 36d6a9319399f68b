"""Synthetic challenge sequences with exact ground truth.

A textured square drifts by a clamped random walk over a noisy background.
Optional challenges:

* ``IV``  global gain ``1 + 0.4 sin(2 pi t / 50)``, i.e. within [0.6, 1.4]
* ``SV``  target scale ``1.25 ** sin(2 pi t / 80)``, i.e. within [0.8, 1.25]
* ``OCC`` an opaque bar sweeps across the target during 15% of the frames,
  starting at 40% of the sequence
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..geometry import BoundingBox
from ..imaging import Frame

CHALLENGES = ("IV", "OCC", "SV")
IV_PERIOD = 50
IV_AMPLITUDE = 0.4
SV_PERIOD = 80
SV_MAX = 1.25
OCC_FRACTION = 0.15
OCC_START = 0.40
OCC_INTENSITY = 40


@dataclass
class SynthSpec:
    frames: int = 100
    width: int = 160
    height: int = 120
    target_size: int = 32
    target_texture_seed: int | None = None
    challenges: frozenset = field(default_factory=frozenset)
    motion_sigma: float = 1.5
    noise_sigma: float = 6.0

    def __post_init__(self):
        self.challenges = frozenset(c.upper() for c in self.challenges)
        unknown = self.challenges - set(CHALLENGES)
        if unknown:
            raise ValueError(f"unknown challenges {sorted(unknown)}; expected a subset of {CHALLENGES}")
        if self.frames < 2:
            raise ValueError("a synthetic sequence needs at least 2 frames")
        if self.target_size * SV_MAX + 2 > min(self.width, self.height):
            raise ValueError("target does not fit in the frame")


def parse_challenges(text: str | None) -> frozenset:
    if not text:
        return frozenset()
    return frozenset(c.strip().upper() for c in text.split(",") if c.strip())


def _texture(rng: np.random.Generator, size: int) -> np.ndarray:
    # blocky random pattern with a bright frame: strong, distinctive gradients
    cells = rng.integers(30, 226, size=(4, 4)).astype(np.float64)
    tex = np.kron(cells, np.ones((math.ceil(size / 4),) * 2))[:size, :size]
    tex[:2, :] = tex[-2:, :] = 235.0
    tex[:, :2] = tex[:, -2:] = 235.0
    return tex


def _resize_nearest(img: np.ndarray, side: int) -> np.ndarray:
    idx = np.minimum((np.arange(side) + 0.5) * img.shape[0] / side, img.shape[0] - 1).astype(np.intp)
    return img[np.ix_(idx, idx)]


def iv_gain(t: int) -> float:
    return 1.0 + IV_AMPLITUDE * math.sin(2.0 * math.pi * t / IV_PERIOD)


def sv_scale(t: int) -> float:
    return SV_MAX ** math.sin(2.0 * math.pi * t / SV_PERIOD)


def occlusion_window(frames: int) -> tuple[int, int]:
    """First and last (inclusive, 1-based) occluded frame."""
    start = int(round(OCC_START * frames)) + 1
    length = max(1, int(round(OCC_FRACTION * frames)))
    return start, min(frames, start + length - 1)


def synth_sequence(spec: SynthSpec, seed: int) -> tuple[list[Frame], list[BoundingBox]]:
    rng = np.random.default_rng(seed)
    tex_rng = rng if spec.target_texture_seed is None else np.random.default_rng(spec.target_texture_seed)
    texture = _texture(tex_rng, spec.target_size)
    background = rng.integers(60, 196, size=(spec.height // 4 + 1, spec.width // 4 + 1)).astype(np.float64)
    background = np.kron(background, np.ones((4, 4)))[: spec.height, : spec.width]
    background = 0.5 * background + 0.5 * background.mean()

    max_side = int(round(spec.target_size * (SV_MAX if "SV" in spec.challenges else 1.0)))
    cx = spec.width / 2.0
    cy = spec.height / 2.0
    occ_start, occ_end = occlusion_window(spec.frames)

    frames, truth = [], []
    for t in range(1, spec.frames + 1):
        if t > 1:
            cx += rng.normal(0.0, spec.motion_sigma)
            cy += rng.normal(0.0, spec.motion_sigma)
        half = max_side / 2.0 + 1
        cx = float(np.clip(cx, half, spec.width - half))
        cy = float(np.clip(cy, half, spec.height - half))

        side = spec.target_size
        if "SV" in spec.challenges:
            side = int(round(spec.target_size * sv_scale(t)))
        x0 = int(round(cx - side / 2.0))
        y0 = int(round(cy - side / 2.0))

        img = background + rng.normal(0.0, spec.noise_sigma, size=background.shape)
        img[y0:y0 + side, x0:x0 + side] = _resize_nearest(texture, side)

        if "OCC" in spec.challenges and occ_start <= t <= occ_end:
            span = occ_end - occ_start + 1
            progress = (t - occ_start + 0.5) / span
            bar_w = max(2, side // 2)
            bx = int(round(x0 - bar_w + progress * (side + bar_w)))
            ylo, yhi = max(0, y0 - 4), min(spec.height, y0 + side + 4)
            img[ylo:yhi, max(0, bx):max(0, bx + bar_w)] = OCC_INTENSITY

        if "IV" in spec.challenges:
            img = img * iv_gain(t)

        pixels = np.clip(np.rint(img), 0, 255).astype(np.uint8)
        frames.append(Frame(pixels, index=t))
        truth.append(BoundingBox(float(x0), float(y0), float(side), float(side)))
    return frames, truth
