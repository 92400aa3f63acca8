"""Shared test utilities: random rotations, independent oracles, pose comparison."""

import math

import numpy as np

from binpose.geometry import BinModel, Pose, rot_z


def random_rotation(rng):
    q = rng.standard_normal(4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


def axis_angle(axis, angle):
    k = np.asarray(axis, float) / np.linalg.norm(axis)
    K = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + math.sin(angle) * K + (1 - math.cos(angle)) * K @ K


def random_upright_rotation(rng, max_tilt_deg=60.0):
    yaw = rng.uniform(-math.pi, math.pi)
    tilt = math.radians(rng.uniform(0, max_tilt_deg))
    phi = rng.uniform(-math.pi, math.pi)
    return axis_angle([math.cos(phi), math.sin(phi), 0.0], tilt) @ rot_z(yaw)


def random_bin(rng):
    w = rng.uniform(0.2, 0.6)
    return BinModel(w, w + rng.uniform(0.05, 0.4), rng.uniform(0.1, 0.5))


def random_upright_pose(rng, max_tilt_deg=60.0):
    return Pose(random_upright_rotation(rng, max_tilt_deg), rng.uniform(-2, 2, 3))


def quaternion_angle_deg(R):
    """Rotation angle of ``R`` from its unit quaternion (Shepperd's branch choice)."""
    m = np.asarray(R, float)
    tr = np.trace(m)
    cands = [tr, m[0, 0], m[1, 1], m[2, 2]]
    k = int(np.argmax(cands))
    if k == 0:
        s = math.sqrt(1 + tr) * 2
        q = [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
    elif k == 1:
        s = math.sqrt(1 + m[0, 0] - m[1, 1] - m[2, 2]) * 2
        q = [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
    elif k == 2:
        s = math.sqrt(1 + m[1, 1] - m[0, 0] - m[2, 2]) * 2
        q = [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
    else:
        s = math.sqrt(1 + m[2, 2] - m[0, 0] - m[1, 1]) * 2
        q = [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
    w, v = abs(q[0]), math.sqrt(q[1] ** 2 + q[2] ** 2 + q[3] ** 2)
    return math.degrees(2 * math.atan2(v, w))


FLIP = np.diag([-1.0, -1.0, 1.0])


def pose_gap(a: Pose, b: Pose):
    """(max rotation-entry gap up to the pi z-turn, translation distance)."""
    dr = min(np.abs(a.rotation - b.rotation).max(), np.abs(a.rotation - b.rotation @ FLIP).max())
    return float(dr), float(np.linalg.norm(a.translation - b.translation))


def pose_gap_angle(a: Pose, b: Pose):
    """(rotation angle in radians up to the pi z-turn, translation distance)."""
    ang = min(
        quaternion_angle_deg(a.rotation @ b.rotation.T),
        quaternion_angle_deg(a.rotation @ (b.rotation @ FLIP).T),
    )
    return math.radians(ang), float(np.linalg.norm(a.translation - b.translation))


def oracle_noise_study(sigmas, trials, config=None):
    """Mean (e_TE m, symmetry-aware e_RE deg) of oracle segments per noise level.

    Trial ``i`` uses scene seed ``i`` and oracle seed ``i`` for every sigma,
    so the noise directions are shared and only their scale changes.
    """
    from types import SimpleNamespace

    from binpose.detect import OracleNoiseConfig, oracle_detect
    from binpose.geometry import estimate_pose
    from binpose.metrics import evaluate_set
    from binpose.synthgen import SceneConfig, gt_top_segments, sample_geometry

    config = config or SceneConfig()
    scenes = []
    for i in range(trials):
        bin, pose, *_ = sample_geometry(config, i)
        scenes.append((bin, pose, SimpleNamespace(gt_segments=gt_top_segments(bin, pose))))
    rows = []
    for sigma in sigmas:
        cfg = OracleNoiseConfig(sigma=sigma)
        preds = [estimate_pose(oracle_detect(s, cfg, i), bin) for i, (bin, _, s) in enumerate(scenes)]
        report = evaluate_set(preds, [p for _, p, _ in scenes], symmetry_aware=True)
        rows.append((report.mean_te_cm / 100.0, report.mean_re_deg))
    return rows
