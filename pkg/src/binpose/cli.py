"""Command-line entry point.

    binpose gen      --samples N --out DATA [--seed S] [--config scene.json] [--jobs J]
    binpose augment  --in DATA --out DATA2 [--cp P --cmin A --cmax B] [--seed S] [--jobs J]
    binpose detect   --in DATA --out PRED [--detector oracle|rim] [--config det.json] [--seed S] [--jobs J]
    binpose estimate --in PRED --out POSES [--jobs J]
    binpose eval     --in POSES [--out DIR] [--symmetry]
    binpose bench    --samples N --out DIR [--detector ...] [--seed S] [--config scene.json] [--jobs J] [--symmetry]

Exit status is 0 on success, 2 on usage errors and 1 on data errors; the
message of a data error starts with the error's class name.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from . import dataset_io as dio
from . import pipeline
from .errors import BinPoseError
from .scan import CutoutConfig
from .synthgen import SceneConfig


class UsageError(Exception):
    pass


def _manifest_path(p) -> Path:
    p = Path(p)
    return p / "manifest.json" if p.is_dir() else p


def _require(path, what: str) -> Path:
    if path is None:
        raise UsageError(f"--in is required ({what})")
    path = Path(path)
    if not path.exists():
        raise UsageError(f"input path {path} does not exist")
    return path


def _load_config(path) -> dict:
    if path is None:
        return {}
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"config file {path} does not exist")
    d = dio.load_json(path)
    if not isinstance(d, dict):
        raise UsageError("config must be a JSON object")
    return d


def _scene_config(path) -> SceneConfig:
    d = _load_config(path)
    return SceneConfig.from_dict(d.get("scene", d))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=pipeline.DEFAULT_SEED,
                        help=f"root seed (default {pipeline.DEFAULT_SEED})")
    common.add_argument("--jobs", type=int, default=1, help="worker processes")
    common.add_argument("--in", dest="inp", metavar="IN")
    common.add_argument("--out")
    common.add_argument("--config", help="JSON config file")

    p = argparse.ArgumentParser(prog="binpose", description="Bin pose estimation from 3D line segments.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", parents=[common], help="generate a synthetic dataset")
    g.add_argument("--samples", type=int, required=True)

    a = sub.add_parser("augment", parents=[common], help="apply cutout to a dataset")
    a.add_argument("--cp", type=float, default=0.5)
    a.add_argument("--cmin", type=float, default=0.2)
    a.add_argument("--cmax", type=float, default=0.8)

    d = sub.add_parser("detect", parents=[common], help="detect rim segments")
    d.add_argument("--detector", choices=["oracle", "rim"], default="oracle")

    sub.add_parser("estimate", parents=[common], help="estimate poses from segments")

    e = sub.add_parser("eval", parents=[common], help="evaluate estimated poses")
    e.add_argument("--symmetry", action="store_true", help="forgive a 180 degree turn about the bin z axis")

    b = sub.add_parser("bench", parents=[common], help="run the full pipeline with timing")
    b.add_argument("--samples", type=int, default=100)
    b.add_argument("--detector", choices=["oracle", "rim"], default="oracle")
    b.add_argument("--symmetry", action="store_true")
    return p


def _need_out(args):
    if not args.out:
        raise UsageError("--out is required")
    return Path(args.out)


def cmd_gen(args) -> int:
    if args.samples < 0:
        raise UsageError("--samples must be >= 0")
    out = _need_out(args)
    config = _scene_config(args.config)
    m = pipeline.generate(out, args.samples, args.seed, config, args.jobs)
    counts = m.counts()
    print(f"wrote {len(m)} samples to {out} (train {counts['train']}, val {counts['val']}, test {counts['test']})")
    return 0


def cmd_augment(args) -> int:
    src = _manifest_path(_require(args.inp, "dataset"))
    out = _need_out(args)
    try:
        cfg = CutoutConfig(args.cp, args.cmin, args.cmax)
    except ValueError as e:
        raise UsageError(str(e)) from None
    m = pipeline.augment(src, out, cfg, args.seed, args.jobs)
    print(f"wrote {len(m)} augmented samples to {out}")
    return 0


def cmd_detect(args) -> int:
    src = _manifest_path(_require(args.inp, "dataset"))
    out = _need_out(args)
    index = pipeline.detect(src, out, args.detector, args.seed, _load_config(args.config), args.jobs)
    failed = sum("error" in e for e in dio.load_json(index)["samples"])
    print(f"wrote predictions to {out} ({failed} failed detections)")
    return 0


def cmd_estimate(args) -> int:
    src = _require(args.inp, "predictions")
    out = _need_out(args)
    weighted = bool(_load_config(args.config).get("weighted_merge", False))
    index = pipeline.estimate(src, out, args.jobs, weighted)
    failed = sum("error" in e for e in dio.load_json(index)["samples"])
    print(f"wrote poses to {out} ({failed} failed estimates)")
    return 0


def _report(report, out_dir: Path) -> None:
    print(report.to_table())
    out_dir.mkdir(parents=True, exist_ok=True)
    dio.dump_json(report.to_dict(), out_dir / "report.json")


def cmd_eval(args) -> int:
    src = _require(args.inp, "poses")
    report = pipeline.evaluate(src, args.symmetry)
    out = Path(args.out) if args.out else (src if src.is_dir() else src.parent)
    _report(report, out)
    return 0


def cmd_bench(args) -> int:
    out = _need_out(args)
    config = _scene_config(args.config)
    n = args.samples
    stages = {}

    t0 = time.perf_counter()
    pipeline.generate(out / "data", n, args.seed, config, args.jobs)
    stages["gen"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    pipeline.detect(out / "data" / "manifest.json", out / "pred", args.detector, args.seed, None, args.jobs)
    stages["detect"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    pipeline.estimate(out / "pred", out / "poses", args.jobs)
    stages["estimate"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    report = pipeline.evaluate(out / "poses", args.symmetry)
    stages["eval"] = time.perf_counter() - t0

    _report(report, out)
    total = sum(stages.values())
    timing = {
        "samples": n,
        "jobs": args.jobs,
        "detector": args.detector,
        "stages_s": stages,
        "total_s": total,
        "throughput_samples_per_s": n / total if total > 0 else None,
    }
    # wall-clock numbers are kept apart from the reproducible artifacts
    dio.dump_json(timing, out / "timing.json")
    print()
    for k, v in stages.items():
        print(f"{k:<9}{v:9.3f} s")
    print(f"{'total':<9}{total:9.3f} s   ({timing['throughput_samples_per_s'] or 0:.2f} samples/s)")
    return 0


COMMANDS = {
    "gen": cmd_gen,
    "augment": cmd_augment,
    "detect": cmd_detect,
    "estimate": cmd_estimate,
    "eval": cmd_eval,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    if args.jobs < 1:
        parser.print_usage(sys.stderr)
        print("binpose: error: --jobs must be >= 1", file=sys.stderr)
        return 2
    try:
        return COMMANDS[args.command](args)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"binpose: error: {e}", file=sys.stderr)
        return 2
    except BinPoseError as e:
        print(f"binpose: {e.code}: {e}", file=sys.stderr)
        return 1
    except (OSError, json.JSONDecodeError) as e:
        print(f"binpose: IOError: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
