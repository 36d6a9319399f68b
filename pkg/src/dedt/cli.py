"""``dedt`` command line: track, synth, eval.

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import json
import logging
import os
import platform
import sys

from . import __version__
from .bench.metrics import LengthMismatchError, evaluate, write_plot_data
from .bench.otb import GroundTruthFormatError, load_groundtruth, write_groundtruth
from .bench.synth import CHALLENGES, SynthSpec, parse_challenges, synth_sequence
from .config import MODES, ConfigError, TrackerConfig
from .geometry import BoundingBox
from .imaging import IngestionError, list_sequence_files, load_sequence, save_pgm
from .tracker import DIAGNOSTIC_FIELDS, Tracker

TRAJECTORY_FIELDS = ("t", "x", "y", "w", "h", "best_score", "n_uncertain", "q_av")
EXIT_OK, EXIT_USAGE, EXIT_FAILURE = 0, 1, 2

log = logging.getLogger("dedt")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _parse_box(text: str) -> BoundingBox:
    parts = [p for p in text.replace(" ", ",").split(",") if p]
    if len(parts) != 4:
        raise UsageError(f"--init expects x,y,w,h, got {text!r}")
    try:
        x, y, w, h = (float(p) for p in parts)
        # same 1-based convention as ground-truth files
        return BoundingBox(x - 1.0, y - 1.0, w, h)
    except ValueError as exc:
        raise UsageError(f"--init: {exc}") from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dedt", description="Diverse-ensemble discriminative tracker")
    p.add_argument("--version", action="version", version=f"dedt {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("track", help="track a target through an image sequence")
    t.add_argument("--seq", help="directory of .pgm/.png frames")
    init = t.add_mutually_exclusive_group()
    init.add_argument("--init", help="initial box x,y,w,h (1-based pixels)")
    init.add_argument("--gt", help="ground-truth file; its first box initialises")
    t.add_argument("--config", help="key=value configuration file")
    t.add_argument("--out", default="run", help="output directory (default: ./run)")
    t.add_argument("--mode", choices=MODES)
    t.add_argument("--delta-override", type=float)
    t.add_argument("--runs", type=int, default=1)
    t.add_argument("--seed", type=int)
    t.add_argument("--threads", type=int, help="worker count (recorded; tracking is sequential)")
    t.add_argument("--from-manifest", help="repeat the run described by a manifest.json")

    s = sub.add_parser("synth", help="write a synthetic sequence with ground truth")
    s.add_argument("--out", required=True)
    s.add_argument("--frames", type=int, required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--challenges", default="", help=f"comma list from {','.join(c.lower() for c in CHALLENGES)}")
    s.add_argument("--width", type=int, default=SynthSpec.width)
    s.add_argument("--height", type=int, default=SynthSpec.height)
    s.add_argument("--target-size", type=int, default=SynthSpec.target_size)

    e = sub.add_parser("eval", help="score a trajectory against ground truth")
    e.add_argument("--pred", required=True, help="trajectory.csv")
    e.add_argument("--gt", required=True)
    e.add_argument("--plot-data", help="directory for success/precision CSVs")
    return p


# --------------------------------------------------------------------- track

def _track_inputs(args) -> dict:
    """Resolve config, seed and inputs from flags (or a previous manifest)."""
    if args.from_manifest:
        try:
            with open(args.from_manifest, encoding="utf-8") as fh:
                man = json.load(fh)
            config = TrackerConfig(**man["config"])
            inputs = man["inputs"]
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise UsageError(f"--from-manifest: {exc}") from None
        return {"config": config, "seq": inputs["seq"], "gt": inputs.get("gt"),
                "init": inputs.get("init"), "runs": int(man.get("runs", 1))}

    if not args.seq:
        raise UsageError("track: --seq is required")
    if not args.init and not args.gt:
        raise UsageError("track: one of --init or --gt is required")
    if args.runs < 1:
        raise UsageError("track: --runs must be at least 1")
    try:
        config = TrackerConfig.from_file(args.config) if args.config else TrackerConfig()
        changes = {}
        if args.mode:
            changes["mode"] = args.mode
        if args.delta_override is not None:
            changes["delta_override"] = args.delta_override
        if args.seed is not None:
            changes["seed"] = args.seed
        config = config.replace(**changes)
    except OSError as exc:
        raise UsageError(f"--config: {exc}") from None
    except ConfigError as exc:
        raise UsageError(f"config: {exc}") from None
    init = None
    if args.init:
        b = _parse_box(args.init)
        init = [b.x + 1.0, b.y + 1.0, b.w, b.h]
    return {"config": config, "seq": args.seq, "gt": args.gt, "init": init, "runs": args.runs}


class _RunWriter:
    """Streams trajectory and diagnostics rows so a failure keeps what was done."""

    def __init__(self, directory: str):
        os.makedirs(directory, exist_ok=True)
        self.paths = [os.path.join(directory, "trajectory.csv"), os.path.join(directory, "diagnostics.csv")]
        self._traj = open(self.paths[0], "w", newline="", encoding="utf-8")
        self._diag = open(self.paths[1], "w", newline="", encoding="utf-8")
        self._tw = csv.writer(self._traj, lineterminator="\n")
        self._dw = csv.writer(self._diag, lineterminator="\n")
        self._tw.writerow(TRAJECTORY_FIELDS)
        self._dw.writerow(DIAGNOSTIC_FIELDS)

    def __call__(self, res) -> None:
        b = res.state
        self._tw.writerow([res.t, _fmt(b.x + 1.0), _fmt(b.y + 1.0), _fmt(b.w), _fmt(b.h),
                           _fmt(res.best_score), res.n_uncertain, _fmt(res.q_av)])
        self._dw.writerow([_fmt(res.diagnostics.get(k)) for k in DIAGNOSTIC_FIELDS])
        self._traj.flush()
        self._diag.flush()

    def close(self) -> None:
        self._traj.close()
        self._diag.close()


def cmd_track(args) -> int:
    started = _now()
    spec = _track_inputs(args)
    config: TrackerConfig = spec["config"]
    out = args.out
    manifest = {
        "tool": "dedt",
        "version": __version__,
        "python": platform.python_version(),
        "argv": getattr(args, "argv", None),
        "config": config.to_dict(),
        "seed": config.seed,
        "runs": spec["runs"],
        "threads": getattr(args, "threads", None),
        "inputs": {"seq": os.path.abspath(spec["seq"]),
                   "gt": os.path.abspath(spec["gt"]) if spec["gt"] else None,
                   "init": spec["init"]},
        "started": started,
        "outputs": [],
        "status": "running",
    }
    try:
        os.makedirs(out, exist_ok=True)
    except OSError as exc:
        print(f"dedt: cannot create output directory {out}: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    manifest_path = os.path.join(out, "manifest.json")
    code = EXIT_OK
    try:
        files = list_sequence_files(spec["seq"])
        manifest["inputs"]["frames"] = [os.path.basename(f) for f in files]
        manifest["inputs"]["frames_sha256"] = hashlib.sha256(
            "".join(_sha256(f) for f in files).encode()).hexdigest()
        frames = load_sequence(spec["seq"])
        if spec["gt"]:
            gt = load_groundtruth(spec["gt"])
            manifest["inputs"]["gt_sha256"] = _sha256(spec["gt"])
            init_box = gt[0]
        else:
            x, y, w, h = spec["init"]
            init_box = BoundingBox(x - 1.0, y - 1.0, w, h)
        for r in range(spec["runs"]):
            cfg = config.replace(seed=config.seed + r)
            run_dir = out if spec["runs"] == 1 else os.path.join(out, f"run_{r + 1:02d}")
            writer = _RunWriter(run_dir)
            manifest["outputs"].extend(os.path.relpath(p, out) for p in writer.paths)
            try:
                tracker, first = Tracker.init(frames[0], init_box, cfg)
                writer(first)
                for frame in frames[1:]:
                    writer(tracker.step(frame))
            finally:
                writer.close()
        manifest["status"] = "ok"
    except (IngestionError, GroundTruthFormatError, ValueError, RuntimeError, OSError) as exc:
        print(f"dedt track: {exc}", file=sys.stderr)
        manifest["status"] = "failed"
        manifest["error"] = f"{type(exc).__name__}: {exc}"
        code = EXIT_FAILURE
    finally:
        manifest["finished"] = _now()
        manifest["outputs"].append("manifest.json")
        try:
            with open(manifest_path, "w", encoding="utf-8") as fh:
                json.dump(manifest, fh, indent=2)
                fh.write("\n")
        except OSError as exc:
            print(f"dedt track: cannot write manifest: {exc}", file=sys.stderr)
            code = EXIT_FAILURE
    return code


# --------------------------------------------------------------------- synth

def cmd_synth(args) -> int:
    if args.frames < 2:
        raise UsageError("synth: --frames must be at least 2")
    try:
        spec = SynthSpec(frames=args.frames, width=args.width, height=args.height,
                         target_size=args.target_size, challenges=parse_challenges(args.challenges))
    except ValueError as exc:
        raise UsageError(f"synth: {exc}") from None
    frames, truth = synth_sequence(spec, args.seed)
    try:
        os.makedirs(args.out, exist_ok=True)
        digits = max(4, len(str(len(frames))))
        for f in frames:
            save_pgm(os.path.join(args.out, f"{f.index:0{digits}d}.pgm"), f.pixels)
        write_groundtruth(os.path.join(args.out, "groundtruth_rect.txt"), truth)
        with open(os.path.join(args.out, "attributes.txt"), "w", encoding="utf-8") as fh:
            fh.write(",".join(sorted(spec.challenges)) + "\n")
    except OSError as exc:
        print(f"dedt synth: cannot write to {args.out}: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


# ---------------------------------------------------------------------- eval

class TrajectoryFormatError(ValueError):
    pass


def read_trajectory(path: str) -> tuple[list[BoundingBox], list]:
    """Boxes (0-based) and q_av values from a trajectory CSV."""
    boxes, q = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise TrajectoryFormatError(f"{path}:1: empty file")
        header = [h.strip() for h in header]
        missing = [c for c in ("x", "y", "w", "h") if c not in header]
        if missing:
            raise TrajectoryFormatError(f"{path}:1: header lacks columns {missing}")
        col = {c: header.index(c) for c in header}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise TrajectoryFormatError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                x, y, w, h = (float(row[col[c]]) for c in ("x", "y", "w", "h"))
                boxes.append(BoundingBox(x - 1.0, y - 1.0, w, h))
            except ValueError as exc:
                raise TrajectoryFormatError(f"{path}:{lineno}: {exc}") from None
            if "q_av" in col and row[col["q_av"]].strip():
                try:
                    q.append(float(row[col["q_av"]]))
                except ValueError:
                    raise TrajectoryFormatError(f"{path}:{lineno}: bad q_av {row[col['q_av']]!r}") from None
    if not boxes:
        raise TrajectoryFormatError(f"{path}: no trajectory rows")
    return boxes, q


def cmd_eval(args) -> int:
    try:
        pred, q = read_trajectory(args.pred)
        gt = load_groundtruth(args.gt)
        report = evaluate(pred, gt, q_av_mean=sum(q) / len(q) if q else None)
        if args.plot_data:
            write_plot_data(args.plot_data, pred, gt)
    except (TrajectoryFormatError, GroundTruthFormatError, LengthMismatchError, OSError) as exc:
        print(f"dedt eval: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    print(report.to_json())
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args.argv = list(sys.argv[1:] if argv is None else argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        handler = {"track": cmd_track, "synth": cmd_synth, "eval": cmd_eval}[args.command]
        return handler(args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
