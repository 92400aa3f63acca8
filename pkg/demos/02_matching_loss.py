"""
Matching predicted segments to annotations
==========================================

A set-prediction detector emits more segments than there are rim edges.
Predictions are matched one-to-one to the annotations with the Hungarian
algorithm, then scored with an L1 endpoint loss and a focal classification
loss.
"""

import numpy as np

from binpose import BinModel, Pose, LineSegment3
from binpose.assignment import LossWeights, focal_loss, hungarian_solve, match_and_score, matching_cost_matrix
from binpose.synthgen import gt_top_segments

gts = gt_top_segments(BinModel(0.4, 0.6, 0.3), Pose.identity())

# Six predictions: the four edges (shuffled, one reversed, slightly off)
# and two confident-looking false positives.
rng = np.random.default_rng(1)
preds = [
    LineSegment3(gts[2].a + 0.01, gts[2].b - 0.01, 0.9),
    gts[0].reversed().with_confidence(0.95),
    LineSegment3(np.array([0.0, 0.0, 0.0]), np.array([0.1, 0.1, 0.0]), 0.4),
    LineSegment3(gts[3].a, gts[3].b + 0.02, 0.8),
    LineSegment3(gts[1].a - 0.005, gts[1].b, 0.85),
    LineSegment3(np.array([1.0, 1.0, 0.3]), np.array([1.2, 1.0, 0.3]), 0.3),
]

# %%
# The cost of pairing a prediction with an annotation is its unordered L1
# endpoint distance plus a penalty for low confidence.
C = matching_cost_matrix(preds, gts, LossWeights())
print(np.round(C, 3))

# %%
# Hungarian matching picks the cheapest one-to-one assignment.
matching = hungarian_solve(C)
print("pairs (pred, gt):", matching.pairs, " cost", round(matching.cost, 4))

# %%
# The loss: L1 on matched pairs, "line" targets for matched predictions and
# "no-line" for the rest. Focal loss with gamma = 2 down-weights easy cases.
for gamma in (0.0, 2.0):
    _, loss = match_and_score(preds, gts, gamma=gamma)
    print(f"gamma={gamma}: L1 {loss.endpoint_l1:.4f}  class {loss.classification:.4f}  total {loss.total:.4f}")

print("focal loss of a 0.9 'line' prediction, gamma 2:", round(focal_loss(0.9, True, 1.0, 2.0), 8))
