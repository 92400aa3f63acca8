"""Dataset-level stages: generate, augment, detect, estimate, evaluate.

Each stage reads and writes the formats of :mod:`binpose.dataset_io`. Work is
split per sample; every sample's random stream is derived from the stage
seed and the sample's position in the manifest, so the output does not
depend on the number of worker processes.
"""

from __future__ import annotations

import os
import shutil
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path
from typing import Callable, Iterable, Sequence

from . import dataset_io as dio
from .detect import OracleNoiseConfig, RimDetectorConfig, oracle_detect, plane_rim_detect
from .errors import BinPoseError, EmptySet, LengthMismatch, SchemaMismatch
from .geometry import estimate_pose
from .metrics import EvalReport, evaluate_set
from .rng import derive_seed
from .scan import CutoutConfig, compute_channel_stats, cutout
from .synthgen import SceneConfig, generate_task, plan_dataset

DEFAULT_SEED = 1234
TOP_K = 4  # estimate_pose always uses the four most confident segments


def parallel_map(fn: Callable, items: Sequence, jobs: int = 1) -> list:
    """Ordered map, in-process for ``jobs <= 1``."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as ex:
        return list(ex.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))


def _rel(path: Path, start: Path) -> str:
    return Path(os.path.relpath(path, start)).as_posix()


def _fresh_dir(path: Path) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_stats(manifest: dio.Manifest, out: Path) -> Path:
    """Channel statistics of the train split (all samples if it is empty)."""
    recs = manifest.split("train") or manifest.records
    clouds = [dio.read_scan(r.scan) for r in recs]
    path = out / "stats.json"
    dio.dump_json(compute_channel_stats(clouds).to_dict(), path)
    return path


# ------------------------------------------------------------------- gen


def _gen_one(job):
    config, task, out = job
    sample = generate_task(config, task)
    scan = out / "scans" / f"{task.sample_id}.bpc"
    ann = out / "annotations" / f"{task.sample_id}.json"
    dio.write_sample(sample, scan, ann)
    return dio.ManifestRecord(task.sample_id, task.scene_id, scan, ann, task.split)


def generate(out, n_samples: int, seed: int = DEFAULT_SEED, config: SceneConfig | None = None, jobs: int = 1) -> dio.Manifest:
    config = config or SceneConfig()
    out = _fresh_dir(out)
    (out / "scans").mkdir(exist_ok=True)
    (out / "annotations").mkdir(exist_ok=True)
    tasks = plan_dataset(config, n_samples, seed)
    records = parallel_map(_gen_one, [(config, t, out) for t in tasks], jobs)
    manifest = dio.Manifest(records, None, out)
    dio.dump_json({"seed": seed, "samples": n_samples, "scene": config.to_dict()}, out / "config.json")
    if records:
        manifest.stats = _write_stats(manifest, out)
    dio.write_manifest(manifest, out / "manifest.json")
    return manifest


# --------------------------------------------------------------- augment


def _augment_one(job):
    rec, cfg, seed, out = job
    cloud = cutout(dio.read_scan(rec.scan), cfg, seed)
    scan = out / "scans" / rec.scan.name
    ann = out / "annotations" / rec.annotation.name
    dio.write_scan(cloud, scan)
    shutil.copyfile(rec.annotation, ann)
    return dio.ManifestRecord(rec.sample_id, rec.scene_id, scan, ann, rec.split)


def augment(in_manifest, out, cfg: CutoutConfig, seed: int = DEFAULT_SEED, jobs: int = 1) -> dio.Manifest:
    src = dio.load_manifest(in_manifest)
    out = _fresh_dir(out)
    (out / "scans").mkdir(exist_ok=True)
    (out / "annotations").mkdir(exist_ok=True)
    jobs_ = [(r, cfg, derive_seed(seed, "augment", i), out) for i, r in enumerate(src.records)]
    records = parallel_map(_augment_one, jobs_, jobs)
    manifest = dio.Manifest(records, None, out)
    if records:
        manifest.stats = _write_stats(manifest, out)
    dio.dump_json({"seed": seed, "cutout": asdict(cfg)}, out / "config.json")
    dio.write_manifest(manifest, out / "manifest.json")
    return manifest


# ---------------------------------------------------------------- detect


def detector_config(name: str, overrides: dict | None):
    overrides = dict(overrides or {})
    try:
        if name == "oracle":
            if "spurious_confidence" in overrides:
                overrides["spurious_confidence"] = tuple(overrides["spurious_confidence"])
            return OracleNoiseConfig(**overrides)
        if name == "rim":
            return RimDetectorConfig(**overrides)
    except (TypeError, ValueError) as e:
        raise SchemaMismatch(f"bad {name} detector config: {e}") from None
    raise ValueError(f"unknown detector {name!r}")


def _detect_one(job):
    rec, name, cfg, seed, out = job
    try:
        if name == "oracle":
            segs = oracle_detect(dio.read_sample(rec.scan, rec.annotation), cfg, seed)
        else:
            segs = plane_rim_detect(dio.read_scan(rec.scan), cfg, seed)
        record = dio.prediction_to_dict(rec.sample_id, segs)
    except BinPoseError as e:
        record = dio.prediction_to_dict(rec.sample_id, [], e.code)
    path = out / "predictions" / f"{rec.sample_id}.json"
    dio.dump_json(record, path)
    return {"sample_id": rec.sample_id, "file": _rel(path, out), "error": record.get("error")}


def detect(in_manifest, out, detector: str = "oracle", seed: int = DEFAULT_SEED, overrides: dict | None = None, jobs: int = 1) -> Path:
    in_manifest = Path(in_manifest)
    manifest = dio.load_manifest(in_manifest)
    cfg = detector_config(detector, overrides)
    out = _fresh_dir(out)
    (out / "predictions").mkdir(exist_ok=True)
    shared = detector == "oracle" and cfg.seed_policy == "shared"
    jobs_ = [
        (r, detector, cfg, seed if shared else derive_seed(seed, "detect", i), out)
        for i, r in enumerate(manifest.records)
    ]
    entries = parallel_map(_detect_one, jobs_, jobs)
    index = {
        "format": "binpose-predictions",
        "version": 1,
        "dataset": _rel(in_manifest, out),
        "detector": detector,
        "config": asdict(cfg),
        "seed": seed,
        "samples": [{k: v for k, v in e.items() if v is not None} for e in entries],
    }
    dio.dump_json(index, out / "index.json")
    return out / "index.json"


# -------------------------------------------------------------- estimate


def _load_index(path: Path, fmt: str) -> dict:
    path = Path(path)
    if path.is_dir():
        path = path / "index.json"
    d = dio.load_json(path)
    if not isinstance(d, dict) or d.get("format") != fmt:
        raise SchemaMismatch(f"{path} is not a {fmt} index")
    d["_root"] = path.parent
    return d


def _estimate_one(job):
    pred_path, bin, out, weighted = job
    sample_id, segs, error = dio.prediction_from_dict(dio.load_json(pred_path))
    pose = None
    if error is None:
        try:
            pose = estimate_pose(segs, bin, weighted_merge=weighted)
        except BinPoseError as e:
            error = e.code
    path = out / "poses" / f"{sample_id}.json"
    dio.dump_json(dio.pose_record(sample_id, pose, error), path)
    return {"sample_id": sample_id, "file": _rel(path, out), "error": error}


def estimate(predictions, out, jobs: int = 1, weighted_merge: bool = False) -> Path:
    index = _load_index(predictions, "binpose-predictions")
    root = index["_root"]
    dataset = root / index["dataset"]
    manifest = dio.load_manifest(dataset)
    by_id = {r.sample_id: r for r in manifest.records}
    out = _fresh_dir(out)
    (out / "poses").mkdir(exist_ok=True)
    jobs_ = []
    for e in index["samples"]:
        rec = by_id.get(e["sample_id"])
        if rec is None:
            raise SchemaMismatch(f"prediction for unknown sample {e['sample_id']!r}")
        jobs_.append((root / e["file"], dio.read_annotation(rec.annotation).bin, out, weighted_merge))
    entries = parallel_map(_estimate_one, jobs_, jobs)
    dio.dump_json(
        {
            "format": "binpose-poses",
            "version": 1,
            "dataset": _rel(dataset, out),
            "top_k": TOP_K,
            "weighted_merge": weighted_merge,
            "samples": [{k: v for k, v in e.items() if v is not None} for e in entries],
        },
        out / "index.json",
    )
    return out / "index.json"


# ------------------------------------------------------------------ eval


def evaluate(poses, symmetry_aware: bool = False) -> EvalReport:
    """Score estimated poses against the dataset annotations.

    Samples whose detection or estimation failed are excluded from the means
    and listed under ``failures``.
    """
    index = _load_index(poses, "binpose-poses")
    root = index["_root"]
    manifest = dio.load_manifest(root / index["dataset"])
    entries = index["samples"]
    if len(entries) != len(manifest.records):
        raise LengthMismatch(f"{len(entries)} pose files vs {len(manifest.records)} annotated samples")
    by_id = {e["sample_id"]: e for e in entries}
    if len(by_id) != len(entries):
        raise SchemaMismatch("duplicate sample in pose index")
    preds, gts, ids, failures = [], [], [], {}
    for rec in manifest.records:
        e = by_id.get(rec.sample_id)
        if e is None:
            raise LengthMismatch(f"no pose for sample {rec.sample_id!r}")
        sid, pose, error = dio.pose_from_record(dio.load_json(root / e["file"]))
        if pose is None:
            failures[sid] = error or "unknown"
            continue
        preds.append(pose)
        gts.append(dio.read_annotation(rec.annotation).pose)
        ids.append(sid)
    if not preds:
        raise EmptySet(f"no successful estimates ({len(failures)} failures)")
    report = evaluate_set(preds, gts, symmetry_aware, ids)
    report.failures = failures
    return report
