"""Pose error metrics and aggregate evaluation reports."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import EmptySet, LengthMismatch
from .geometry import Pose, check_rotation, symmetric_rotations

ROTATION_CHECK_TOL = 1e-6


@dataclass(frozen=True)
class PoseError:
    e_te: float  # meters
    e_re: float  # degrees


def translation_error(t_hat, t) -> float:
    return float(np.linalg.norm(np.asarray(t_hat, dtype=float) - np.asarray(t, dtype=float)))


def rotation_error(R_hat, R) -> float:
    """Angular distance between two rotations, in degrees.

    The angle is arccos((Tr(R_hat R^T) - 1) / 2). It is evaluated as
    atan2(sin, cos) with the sine taken from the skew part of R_hat R^T,
    which equals the arccos form but stays accurate near 0 and 180 degrees
    and returns exactly 0 for identical inputs. The cosine is still clamped
    to [-1, 1].
    """
    R_hat = check_rotation(R_hat, ROTATION_CHECK_TOL)
    R = check_rotation(R, ROTATION_CHECK_TOL)
    # R is orthonormal, so R^-1 = R^T
    M = np.einsum("ik,jk->ij", R_hat, R)
    cos = min(1.0, max(-1.0, (M[0, 0] + M[1, 1] + M[2, 2] - 1.0) / 2.0))
    skew = (M[2, 1] - M[1, 2], M[0, 2] - M[2, 0], M[1, 0] - M[0, 1])
    sin = math.sqrt(skew[0] ** 2 + skew[1] ** 2 + skew[2] ** 2) / 2.0
    return math.degrees(math.atan2(sin, cos))


def pose_error(pred: Pose, gt: Pose, symmetry_aware: bool = False) -> PoseError:
    e_te = translation_error(pred.translation, gt.translation)
    if symmetry_aware:
        e_re = min(rotation_error(pred.rotation, R) for R in symmetric_rotations(gt.rotation))
    else:
        e_re = rotation_error(pred.rotation, gt.rotation)
    return PoseError(e_te, e_re)


@dataclass
class EvalReport:
    count: int
    mean_te_cm: float
    mean_re_deg: float
    errors: list[PoseError] = field(default_factory=list)
    sample_ids: list[str] | None = None
    symmetry_aware: bool = False
    failures: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        ids = self.sample_ids or [str(i) for i in range(self.count)]
        return {
            "count": self.count,
            "mean_te_cm": self.mean_te_cm,
            "mean_re_deg": self.mean_re_deg,
            "symmetry_aware": self.symmetry_aware,
            "failures": dict(self.failures),
            "samples": [
                {"sample_id": sid, "e_te_m": e.e_te, "e_re_deg": e.e_re}
                for sid, e in zip(ids, self.errors)
            ],
        }

    def to_table(self, max_rows: int | None = None) -> str:
        ids = self.sample_ids or [str(i) for i in range(self.count)]
        width = max([9] + [len(s) for s in ids])
        lines = [f"{'sample':<{width}}  {'e_TE [cm]':>10}  {'e_RE [deg]':>10}"]
        lines.append("-" * len(lines[0]))
        rows = list(zip(ids, self.errors))
        if max_rows is not None:
            rows = rows[:max_rows]
        for sid, e in rows:
            lines.append(f"{sid:<{width}}  {e.e_te * 100:10.3f}  {e.e_re:10.3f}")
        lines.append("-" * len(lines[0]))
        lines.append(f"{'mean':<{width}}  {self.mean_te_cm:10.3f}  {self.mean_re_deg:10.3f}")
        lines.append(f"samples: {self.count}" + (", symmetry-aware" if self.symmetry_aware else ""))
        if self.failures:
            lines.append(f"failed samples (excluded): {len(self.failures)}")
        return "\n".join(lines)


def evaluate_set(
    predictions: Sequence[Pose],
    ground_truths: Sequence[Pose],
    symmetry_aware: bool = False,
    sample_ids: Sequence[str] | None = None,
) -> EvalReport:
    if len(predictions) != len(ground_truths):
        raise LengthMismatch(
            f"{len(predictions)} predictions vs {len(ground_truths)} ground truths"
        )
    if not predictions:
        raise EmptySet("nothing to evaluate")
    errors = [pose_error(p, g, symmetry_aware) for p, g in zip(predictions, ground_truths)]
    n = len(errors)
    mean_te = math.fsum(e.e_te for e in errors) / n
    mean_re = math.fsum(e.e_re for e in errors) / n
    return EvalReport(
        count=n,
        mean_te_cm=mean_te * 100.0,
        mean_re_deg=mean_re,
        errors=errors,
        sample_ids=list(sample_ids) if sample_ids is not None else None,
        symmetry_aware=symmetry_aware,
    )
