"""OTB-style ground-truth files and sequence directories."""
from __future__ import annotations

import os
import re

from ..geometry import BoundingBox

ATTRIBUTES = ("IV", "SV", "OCC", "DEF", "MB", "FM", "IPR", "OPR", "OV", "LR", "BC")
_SPLIT = re.compile(r"[,\s\t]+")


class GroundTruthFormatError(ValueError):
    def __init__(self, path, lineno, message):
        super().__init__(f"{path}:{lineno}: {message}")
        self.lineno = lineno


def parse_groundtruth(text: str, path: str = "<groundtruth>") -> list[BoundingBox]:
    """One ``x,y,w,h`` line per frame (comma or whitespace), 1-based pixels."""
    boxes = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        parts = [p for p in _SPLIT.split(line) if p]
        if len(parts) != 4:
            raise GroundTruthFormatError(path, lineno, f"expected 4 values, got {len(parts)}")
        try:
            x, y, w, h = (float(p) for p in parts)
        except ValueError:
            raise GroundTruthFormatError(path, lineno, f"non-numeric value in {line!r}") from None
        try:
            boxes.append(BoundingBox(x - 1.0, y - 1.0, w, h))
        except ValueError as exc:
            raise GroundTruthFormatError(path, lineno, str(exc)) from None
    if not boxes:
        raise GroundTruthFormatError(path, 0, "no boxes")
    return boxes


def load_groundtruth(path) -> list[BoundingBox]:
    with open(path, encoding="utf-8") as fh:
        return parse_groundtruth(fh.read(), str(path))


def format_groundtruth(boxes) -> str:
    lines = []
    for b in boxes:
        lines.append(f"{int(round(b.x)) + 1},{int(round(b.y)) + 1},{int(round(b.w))},{int(round(b.h))}")
    return "\n".join(lines) + "\n"


def write_groundtruth(path, boxes) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_groundtruth(boxes))


def find_groundtruth(seq_dir) -> str | None:
    for name in ("groundtruth_rect.txt", "groundtruth.txt"):
        for base in (seq_dir, os.path.dirname(os.path.abspath(seq_dir))):
            path = os.path.join(base, name)
            if os.path.isfile(path):
                return path
    return None
