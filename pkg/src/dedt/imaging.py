"""Frame ingestion, patch extraction and HOG features.

Everything that turns pixels into feature vectors lives here.  The batch
functions (:func:`extract_patches`, :func:`hog_batch`) are what the tracker
uses per frame; the single-item functions are thin wrappers kept for
clarity and testing.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError

from .geometry import BoundingBox

SUPPORTED_EXTENSIONS = (".pgm", ".png")
MIN_FRAME_SIDE = 16

# ITU-R BT.601 luma weights
_LUMA = np.array([0.299, 0.587, 0.114])


class IngestionError(RuntimeError):
    """Raised when an image sequence cannot be loaded."""


@dataclass
class Frame:
    pixels: np.ndarray  # (height, width) uint8, row-major
    index: int = 1

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels)
        if self.pixels.ndim != 2:
            raise ValueError("frame pixels must be a 2-D grayscale array")
        if self.pixels.dtype != np.uint8:
            if self.pixels.min() < 0 or self.pixels.max() > 255:
                raise ValueError("frame intensities must lie in [0, 255]")
            self.pixels = self.pixels.astype(np.uint8)
        h, w = self.pixels.shape
        if w < MIN_FRAME_SIDE or h < MIN_FRAME_SIDE:
            raise ValueError(f"frame must be at least {MIN_FRAME_SIDE}x{MIN_FRAME_SIDE}, got {w}x{h}")
        if self.index < 1:
            raise ValueError("frame index starts at 1")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass
class Patch:
    intensities: np.ndarray  # (patch_size, patch_size) float in [0, 1]
    source_box: BoundingBox


def to_gray(rgb: np.ndarray) -> np.ndarray:
    """Convert an (h, w, 3) 8-bit image to 8-bit luma, rounding to nearest."""
    gray = np.rint(rgb[..., :3].astype(np.float64) @ _LUMA)
    return np.clip(gray, 0, 255).astype(np.uint8)


def read_image(path: str) -> np.ndarray:
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode in ("L", "P", "1"):
                arr = np.asarray(im.convert("L"))
            elif im.mode in ("I;16", "I;16B", "I", "F"):
                raise IngestionError(f"{path}: only 8-bit images are supported (mode {im.mode})")
            else:
                arr = to_gray(np.asarray(im.convert("RGB")))
    except (OSError, UnidentifiedImageError, SyntaxError, ValueError) as exc:
        raise IngestionError(f"cannot read image {path}: {exc}") from exc
    return np.ascontiguousarray(arr, dtype=np.uint8)


def list_sequence_files(directory: str) -> list[str]:
    if not os.path.isdir(directory):
        raise IngestionError(f"sequence directory not found: {directory}")
    names = sorted(
        n for n in os.listdir(directory) if n.lower().endswith(SUPPORTED_EXTENSIONS)
    )
    if not names:
        raise IngestionError(f"no PGM/PNG frames in {directory}")
    return [os.path.join(directory, n) for n in names]


def load_sequence(directory: str) -> list[Frame]:
    """Load every PGM/PNG in ``directory`` in filename order as frames 1..T."""
    frames = []
    shape = None
    for i, path in enumerate(list_sequence_files(directory), start=1):
        pixels = read_image(path)
        if shape is None:
            shape = pixels.shape
        elif pixels.shape != shape:
            raise IngestionError(
                f"{path}: frame size {pixels.shape[1]}x{pixels.shape[0]} differs "
                f"from {shape[1]}x{shape[0]}"
            )
        try:
            frames.append(Frame(pixels, index=i))
        except ValueError as exc:
            raise IngestionError(f"{path}: {exc}") from exc
    return frames


def save_pgm(path: str, pixels: np.ndarray) -> None:
    """Write an 8-bit binary PGM (P5)."""
    pixels = np.ascontiguousarray(pixels, dtype=np.uint8)
    h, w = pixels.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (w, h))
        fh.write(pixels.tobytes())


def _sample_coords(start, extent, patch_size, limit):
    # pixel-center aligned sampling positions, clamped (edge replication)
    grid = (np.arange(patch_size) + 0.5) / patch_size
    coords = start[:, None] + grid[None, :] * extent[:, None] - 0.5
    coords = np.clip(coords, 0.0, limit - 1)
    lo = np.floor(coords).astype(np.intp)
    lo = np.minimum(lo, limit - 1)
    hi = np.minimum(lo + 1, limit - 1)
    frac = coords - lo
    return lo, hi, frac


def extract_patches(frame: Frame, boxes: np.ndarray, patch_size: int = 32) -> np.ndarray:
    """Bilinearly resample each (x, y, w, h) row of ``boxes`` to a square patch.

    Out-of-frame samples replicate the nearest edge pixel.  Returns an array
    of shape (n, patch_size, patch_size) with values in [0, 1].
    """
    boxes = np.atleast_2d(np.asarray(boxes, dtype=np.float64))
    if np.any(boxes[:, 2] < 1) or np.any(boxes[:, 3] < 1):
        raise ValueError("patch boxes need width and height >= 1")
    img = frame.pixels.astype(np.float64) / 255.0
    H, W = img.shape
    x0, x1, fx = _sample_coords(boxes[:, 0], boxes[:, 2], patch_size, W)
    y0, y1, fy = _sample_coords(boxes[:, 1], boxes[:, 3], patch_size, H)
    r0 = y0[:, :, None]
    r1 = y1[:, :, None]
    c0 = x0[:, None, :]
    c1 = x1[:, None, :]
    fx = fx[:, None, :]
    fy = fy[:, :, None]
    top = img[r0, c0] * (1.0 - fx) + img[r0, c1] * fx
    bottom = img[r1, c0] * (1.0 - fx) + img[r1, c1] * fx
    out = top * (1.0 - fy) + bottom * fy
    return np.clip(out, 0.0, 1.0)


def extract_patch(frame: Frame, box: BoundingBox, patch_size: int = 32) -> Patch:
    if box.w < 1 or box.h < 1:
        raise ValueError(f"box extent must be >= 1 pixel, got {box}")
    data = extract_patches(frame, np.array([box.as_tuple()]), patch_size)[0]
    return Patch(data, box)


def hog_dim(patch_size: int = 32, cell_size: int = 8, bins: int = 9) -> int:
    if patch_size % cell_size:
        raise ValueError("patch_size must be a multiple of cell_size")
    cells = patch_size // cell_size
    if cells < 2:
        raise ValueError("need at least 2x2 cells for block normalisation")
    return (cells - 1) ** 2 * 4 * bins


def hog_batch(patches: np.ndarray, cell_size: int = 8, bins: int = 9,
              clip: float = 0.2, eps: float = 1e-6) -> np.ndarray:
    """Dalal-Triggs HOG over a stack of square patches.

    Centred [-1, 0, 1] gradients (edge-replicated borders), unsigned
    orientation split linearly between the two nearest of ``bins`` bins,
    ``cell_size`` cells, 2x2-cell blocks at a one-cell stride, L2-hys
    normalisation per block.
    """
    patches = np.asarray(patches, dtype=np.float64)
    if patches.ndim == 2:
        patches = patches[None]
    n, P, _ = patches.shape
    cells = P // cell_size
    hog_dim(P, cell_size, bins)

    padded = np.pad(patches, ((0, 0), (1, 1), (1, 1)), mode="edge")
    gx = padded[:, 1:-1, 2:] - padded[:, 1:-1, :-2]
    gy = padded[:, 2:, 1:-1] - padded[:, :-2, 1:-1]
    mag = np.hypot(gx, gy)
    ang = np.mod(np.degrees(np.arctan2(gy, gx)), 180.0)

    width = 180.0 / bins
    pos = ang / width - 0.5
    lo = np.floor(pos)
    w_hi = pos - lo
    lo = lo.astype(np.intp) % bins
    hi = (lo + 1) % bins

    votes = np.zeros((n, P, P, bins))
    np.put_along_axis(votes, lo[..., None], (mag * (1.0 - w_hi))[..., None], axis=3)
    # lo != hi always (bins >= 2), so a second put does not clobber the first
    hi_votes = np.zeros_like(votes)
    np.put_along_axis(hi_votes, hi[..., None], (mag * w_hi)[..., None], axis=3)
    votes += hi_votes

    hist = votes.reshape(n, cells, cell_size, cells, cell_size, bins).sum(axis=(2, 4))
    blocks = np.concatenate(
        [
            hist[:, :-1, :-1], hist[:, :-1, 1:],
            hist[:, 1:, :-1], hist[:, 1:, 1:],
        ],
        axis=3,
    ).reshape(n, (cells - 1) ** 2, 4 * bins)

    norm = np.sqrt(np.sum(blocks ** 2, axis=2, keepdims=True) + eps ** 2)
    blocks = np.minimum(blocks / norm, clip)
    norm = np.sqrt(np.sum(blocks ** 2, axis=2, keepdims=True) + eps ** 2)
    blocks = blocks / norm
    return blocks.reshape(n, -1)


def hog(patch: Patch, cell_size: int = 8, bins: int = 9) -> np.ndarray:
    return hog_batch(patch.intensities[None], cell_size, bins)[0]


def features_for_boxes(frame: Frame, boxes: np.ndarray, patch_size: int = 32,
                       cell_size: int = 8, chunk: int = 512) -> np.ndarray:
    """HOG features for many candidate boxes in one frame."""
    boxes = np.atleast_2d(boxes)
    out = np.empty((len(boxes), hog_dim(patch_size, cell_size)))
    for start in range(0, len(boxes), chunk):
        sl = slice(start, start + chunk)
        out[sl] = hog_batch(extract_patches(frame, boxes[sl], patch_size), cell_size)
    return out
