"""6DoF pose estimation of cuboid bins from 3D top-rim line segments."""

from .assignment import focal_loss, hungarian_solve, match_and_score, segment_pair_cost
from .detect import OracleNoiseConfig, RimDetectorConfig, oracle_detect, plane_rim_detect
from .geometry import BinModel, LineSegment3, Pose, estimate_pose
from .metrics import evaluate_set, rotation_error, translation_error
from .scan import CutoutConfig, StructuredPointCloud, compute_channel_stats, cutout, normalize
from .synthgen import SceneConfig, ScanSample, gt_top_segments, sample_scene

__version__ = "0.1.0"
