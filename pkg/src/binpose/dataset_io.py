"""On-disk formats for scans, annotations, predictions, poses and manifests.

Scan files (``.bpc``)
    A 20-byte header followed by the point grid::

        offset  size  field
        0       4     magic b"BPC1"
        4       4     width     (uint32 LE)
        8       4     height    (uint32 LE)
        12      4     channels  (uint32 LE, always 3)
        16      4     validity  (uint32 LE, 1 = invalid pixels are NaN triples)
        20      ...   width*height*3 float32 LE, row-major, (x, y, z) per pixel

Everything else is JSON (UTF-8, sorted keys, two-space indent). Floats are
written with Python's shortest round-trip repr, so values survive exactly.

Annotation::

    {"format": "binpose-annotation", "version": 1,
     "sample_id": ..., "scene_id": ...,
     "bin": {"width": w, "length": l, "height": h},
     "pose": {"rotation": [9 values, row-major], "translation": [3 values]},
     "segments": [[ax, ay, az, bx, by, bz], ... 4 rows],
     "params": {...}}

Prediction files use the same ``segments`` rows plus a parallel
``confidences`` list; pose files carry one ``pose`` object (or ``null`` with
an ``error`` name when estimation failed).
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import CorruptFile, DuplicateSample, SchemaMismatch, SplitLeakage
from .geometry import BinModel, LineSegment3, Pose
from .scan import ChannelStats, StructuredPointCloud
from .synthgen import ScanSample

MAGIC = b"BPC1"
HEADER = struct.Struct("<4sIIII")
VALIDITY_NAN = 1
SPLITS = ("train", "val", "test")


def dump_json(obj, path) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"
    Path(path).write_text(text, encoding="utf-8")


def load_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise SchemaMismatch(f"{path}: not valid JSON ({e})") from None


# ------------------------------------------------------------------ scans


def encode_scan(cloud: StructuredPointCloud) -> bytes:
    pts = np.ascontiguousarray(cloud.points, dtype="<f4")
    pts = np.where(np.isnan(pts), np.float32(np.nan), pts).astype("<f4")
    return HEADER.pack(MAGIC, cloud.width, cloud.height, 3, VALIDITY_NAN) + pts.tobytes()


def decode_scan(data: bytes) -> StructuredPointCloud:
    if len(data) < HEADER.size:
        raise CorruptFile("truncated scan header")
    magic, width, height, channels, validity = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise CorruptFile(f"bad magic {magic!r}")
    if width < 1 or height < 1 or channels != 3 or validity != VALIDITY_NAN:
        raise CorruptFile(f"unsupported header {(width, height, channels, validity)}")
    expected = HEADER.size + width * height * 3 * 4
    if len(data) != expected:
        raise CorruptFile(f"scan payload has {len(data)} bytes, expected {expected}")
    pts = np.frombuffer(data, dtype="<f4", offset=HEADER.size).reshape(height, width, 3)
    return StructuredPointCloud(pts.astype(np.float32))


def write_scan(cloud: StructuredPointCloud, path) -> None:
    Path(path).write_bytes(encode_scan(cloud))


def read_scan(path) -> StructuredPointCloud:
    return decode_scan(Path(path).read_bytes())


# ---------------------------------------------------------- json records


def pose_to_dict(pose: Pose) -> dict:
    return {
        "rotation": [float(v) for v in pose.rotation.reshape(-1)],
        "translation": [float(v) for v in pose.translation],
    }


def pose_from_dict(d) -> Pose:
    try:
        R = np.asarray(d["rotation"], dtype=float)
        t = np.asarray(d["translation"], dtype=float)
    except (KeyError, TypeError, ValueError) as e:
        raise SchemaMismatch(f"bad pose record: {e}") from None
    if R.shape != (9,) or t.shape != (3,):
        raise SchemaMismatch("pose needs 9 rotation and 3 translation values")
    return Pose(R.reshape(3, 3), t)


def segments_to_rows(segments: Sequence[LineSegment3]) -> list[list[float]]:
    return [[float(v) for v in np.concatenate([s.a, s.b])] for s in segments]


def segments_from_rows(rows, confidences=None) -> list[LineSegment3]:
    try:
        arr = np.asarray(rows, dtype=float).reshape(-1, 6) if len(rows) else np.zeros((0, 6))
    except (TypeError, ValueError) as e:
        raise SchemaMismatch(f"bad segment rows: {e}") from None
    if confidences is None:
        confidences = [1.0] * len(arr)
    if len(confidences) != len(arr) or any(len(r) != 6 for r in rows):
        raise SchemaMismatch("segment rows need 6 values and one confidence each")
    try:
        return [LineSegment3(r[:3], r[3:], c) for r, c in zip(arr, confidences)]
    except ValueError as e:
        raise SchemaMismatch(str(e)) from None


def bin_to_dict(bin: BinModel) -> dict:
    return {"width": bin.width, "length": bin.length, "height": bin.height}


def bin_from_dict(d) -> BinModel:
    try:
        return BinModel(float(d["width"]), float(d["length"]), float(d["height"]))
    except (KeyError, TypeError, ValueError) as e:
        raise SchemaMismatch(f"bad bin record: {e}") from None


def annotation_to_dict(sample: ScanSample) -> dict:
    return {
        "format": "binpose-annotation",
        "version": 1,
        "sample_id": sample.sample_id,
        "scene_id": sample.scene_id,
        "bin": bin_to_dict(sample.bin),
        "pose": pose_to_dict(sample.gt_pose),
        "segments": segments_to_rows(sample.gt_segments),
        "params": dict(sample.params),
    }


@dataclass
class Annotation:
    sample_id: str
    scene_id: str
    bin: BinModel
    pose: Pose
    segments: list[LineSegment3]
    params: dict = field(default_factory=dict)


def annotation_from_dict(d) -> Annotation:
    if not isinstance(d, dict) or d.get("format") != "binpose-annotation":
        raise SchemaMismatch("not a binpose annotation")
    try:
        segs = segments_from_rows(d["segments"])
        if len(segs) != 4:
            raise SchemaMismatch(f"annotation needs 4 segments, got {len(segs)}")
        return Annotation(
            str(d["sample_id"]),
            str(d["scene_id"]),
            bin_from_dict(d["bin"]),
            pose_from_dict(d["pose"]),
            segs,
            dict(d.get("params", {})),
        )
    except KeyError as e:
        raise SchemaMismatch(f"annotation missing field {e}") from None


def write_sample(sample: ScanSample, scan_path, annotation_path) -> None:
    write_scan(sample.cloud, scan_path)
    dump_json(annotation_to_dict(sample), annotation_path)


def read_annotation(path) -> Annotation:
    return annotation_from_dict(load_json(path))


def read_sample(scan_path, annotation_path) -> ScanSample:
    ann = read_annotation(annotation_path)
    return ScanSample(
        cloud=read_scan(scan_path),
        gt_pose=ann.pose,
        gt_segments=ann.segments,
        bin=ann.bin,
        scene_id=ann.scene_id,
        sample_id=ann.sample_id,
        params=ann.params,
    )


def prediction_to_dict(sample_id: str, segments: Sequence[LineSegment3], error: str | None = None) -> dict:
    d = {
        "format": "binpose-prediction",
        "version": 1,
        "sample_id": sample_id,
        "segments": segments_to_rows(segments),
        "confidences": [s.confidence for s in segments],
    }
    if error:
        d["error"] = error
    return d


def prediction_from_dict(d) -> tuple[str, list[LineSegment3], str | None]:
    if not isinstance(d, dict) or d.get("format") != "binpose-prediction":
        raise SchemaMismatch("not a binpose prediction")
    try:
        return str(d["sample_id"]), segments_from_rows(d["segments"], d["confidences"]), d.get("error")
    except KeyError as e:
        raise SchemaMismatch(f"prediction missing field {e}") from None


def pose_record(sample_id: str, pose: Pose | None, error: str | None = None) -> dict:
    d = {
        "format": "binpose-pose",
        "version": 1,
        "sample_id": sample_id,
        "pose": pose_to_dict(pose) if pose is not None else None,
    }
    if error:
        d["error"] = error
    return d


def pose_from_record(d) -> tuple[str, Pose | None, str | None]:
    if not isinstance(d, dict) or d.get("format") != "binpose-pose":
        raise SchemaMismatch("not a binpose pose file")
    try:
        pose = pose_from_dict(d["pose"]) if d["pose"] is not None else None
        return str(d["sample_id"]), pose, d.get("error")
    except KeyError as e:
        raise SchemaMismatch(f"pose file missing field {e}") from None


# --------------------------------------------------------------- manifest


@dataclass(frozen=True)
class ManifestRecord:
    sample_id: str
    scene_id: str
    scan: Path
    annotation: Path
    split: str


@dataclass
class Manifest:
    records: list[ManifestRecord] = field(default_factory=list)
    stats: Path | None = None
    root: Path = Path(".")

    def __len__(self):
        return len(self.records)

    def split(self, tag: str) -> list[ManifestRecord]:
        return [r for r in self.records if r.split == tag]

    def counts(self) -> dict[str, int]:
        return {s: len(self.split(s)) for s in SPLITS}

    def load_stats(self) -> ChannelStats | None:
        return ChannelStats.from_dict(load_json(self.stats)) if self.stats else None


def validate_records(records: Sequence[ManifestRecord]) -> None:
    seen = set()
    for r in records:
        if r.sample_id in seen:
            raise DuplicateSample(f"sample id {r.sample_id!r} listed twice")
        seen.add(r.sample_id)
        if r.split not in SPLITS:
            raise SchemaMismatch(f"unknown split {r.split!r} for {r.sample_id}")
    scene_splits: dict[str, set[str]] = {}
    for r in records:
        scene_splits.setdefault(r.scene_id, set()).add(r.split)
    for scene, splits in scene_splits.items():
        if "test" in splits and len(splits) > 1:
            raise SplitLeakage(f"scene {scene!r} appears in test and {sorted(splits - {'test'})}")


def manifest_to_dict(manifest: Manifest) -> dict:
    root = manifest.root

    def rel(p):
        return Path(os.path.relpath(p, root)).as_posix()

    return {
        "format": "binpose-manifest",
        "version": 1,
        "stats": rel(manifest.stats) if manifest.stats else None,
        "samples": [
            {
                "sample_id": r.sample_id,
                "scene_id": r.scene_id,
                "scan": rel(r.scan),
                "annotation": rel(r.annotation),
                "split": r.split,
            }
            for r in manifest.records
        ],
    }


def write_manifest(manifest: Manifest, path) -> None:
    validate_records(manifest.records)
    dump_json(manifest_to_dict(manifest), path)


def load_manifest(path, check_files: bool = True) -> Manifest:
    """Read and validate a manifest; paths inside are relative to its folder."""
    path = Path(path)
    d = load_json(path)
    if not isinstance(d, dict) or d.get("format") != "binpose-manifest":
        raise SchemaMismatch(f"{path} is not a binpose manifest")
    root = path.parent
    records = []
    try:
        for s in d.get("samples", []):
            records.append(
                ManifestRecord(
                    str(s["sample_id"]),
                    str(s["scene_id"]),
                    root / s["scan"],
                    root / s["annotation"],
                    str(s["split"]),
                )
            )
    except (KeyError, TypeError) as e:
        raise SchemaMismatch(f"manifest record missing field {e}") from None
    validate_records(records)
    stats = root / d["stats"] if d.get("stats") else None
    if check_files:
        for r in records:
            for p in (r.scan, r.annotation):
                if not p.is_file():
                    raise SchemaMismatch(f"manifest references missing file {p}")
        if stats is not None and not stats.is_file():
            raise SchemaMismatch(f"manifest references missing stats file {stats}")
    return Manifest(records, stats, root)
