import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linear_sum_assignment

from binpose.assignment import (
    LossWeights,
    focal_loss,
    hungarian_solve,
    match_and_score,
    segment_pair_cost,
)
from binpose.errors import InvalidCost, InvalidParams
from binpose.geometry import LineSegment3


def brute_force(C):
    """Exhaustive minimum over all injective assignments of the smaller side."""
    n, m = C.shape
    best = math.inf
    if n <= m:
        for cols in itertools.permutations(range(m), n):
            best = min(best, sum(C[i, j] for i, j in enumerate(cols)))
    else:
        for rows in itertools.permutations(range(n), m):
            best = min(best, sum(C[rows[j], j] for j in range(m)))
    return best


def brute_force_in_pred_order(C, pairs):
    s = 0.0
    for i, j in sorted(pairs):
        s += C[i, j]
    return s


def test_hungarian_examples():
    m = hungarian_solve([[5]])
    assert m.pairs == [(0, 0)] and m.cost == 5
    m = hungarian_solve([[1, 2], [2, 1]])
    assert sorted(m.pairs) == [(0, 0), (1, 1)] and m.cost == 2


def test_hungarian_6x6_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(50):
        C = rng.uniform(0, 10, (6, 6))
        m = hungarian_solve(C)
        assert m.cost == pytest.approx(brute_force(C), rel=1e-12)


@settings(max_examples=300, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**32 - 1), st.booleans())
def test_hungarian_rectangular_and_integer(n, m, seed, integer):
    rng = np.random.default_rng(seed)
    C = rng.integers(0, 5, (n, m)).astype(float) if integer else rng.uniform(0, 1, (n, m))
    res = hungarian_solve(C)
    assert len(res.pairs) == min(n, m)
    assert len({i for i, _ in res.pairs}) == len({j for _, j in res.pairs}) == min(n, m)
    assert res.cost == brute_force_in_pred_order(C, res.pairs)
    assert res.cost == pytest.approx(brute_force(C), rel=1e-12, abs=1e-12)


def test_hungarian_matches_scipy():
    rng = np.random.default_rng(1)
    for _ in range(100):
        C = rng.uniform(0, 100, (rng.integers(1, 30), rng.integers(1, 30)))
        r, c = linear_sum_assignment(C)
        assert hungarian_solve(C).cost == pytest.approx(C[r, c].sum(), rel=1e-10)


@pytest.mark.parametrize("bad", [[[np.nan]], [[-1.0, 2.0]], [[np.inf]], np.zeros((0, 3))])
def test_hungarian_invalid(bad):
    with pytest.raises(InvalidCost):
        hungarian_solve(bad)


def seg(a, b, c=1.0):
    return LineSegment3(np.array(a, float), np.array(b, float), c)


def test_segment_pair_cost_examples():
    g = seg((0, 0, 0), (1, 0, 0))
    assert segment_pair_cost(g, g) == 0
    assert segment_pair_cost(g.reversed(), g) == 0
    assert segment_pair_cost(seg((1, 0, 0), (2, 0, 0)), g) == 2


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_segment_pair_cost_symmetry(seed):
    rng = np.random.default_rng(seed)
    p = seg(rng.normal(size=3), rng.normal(size=3) + 5)
    g = seg(rng.normal(size=3), rng.normal(size=3) - 5)
    c = segment_pair_cost(p, g)
    assert c == pytest.approx(segment_pair_cost(g, p), rel=1e-14)
    assert c == pytest.approx(segment_pair_cost(p.reversed(), g), rel=1e-14)
    assert c == pytest.approx(segment_pair_cost(p, g.reversed()), rel=1e-14)


def test_focal_loss_examples():
    assert focal_loss(1.0, True) == 0.0
    assert focal_loss(0.0, False) == 0.0
    assert focal_loss(0.5, True) == pytest.approx(0.693147, abs=1e-6)
    assert focal_loss(0.9, True, 1.0, 2.0) == pytest.approx(0.00105361, abs=1e-8)
    for p in (0.1, 0.5, 0.9):
        assert abs(focal_loss(p, True) + math.log(p)) < 1e-12
        assert abs(focal_loss(1 - p, False) + math.log(p)) < 1e-12


def test_focal_loss_clamps_and_validates():
    assert focal_loss(0.0, True) == pytest.approx(-math.log(1e-12))
    with pytest.raises(InvalidParams):
        focal_loss(0.5, True, alpha=0)
    with pytest.raises(InvalidParams):
        focal_loss(0.5, True, gamma=-1)


def test_match_and_score_examples():
    g = seg((0, 0, 0), (1, 0, 0))
    m, loss = match_and_score([g], [g])
    assert (loss.endpoint_l1, loss.classification, loss.total) == (0, 0, 0)

    far = seg((0, 1, 0), (1, 1, 0), 1.0)
    m, _ = match_and_score([g, far], [g])
    assert m.pairs == [(0, 0)]

    p = 0.3
    m, loss = match_and_score([g.with_confidence(p)], [])
    assert m.pairs == []
    assert loss.total == pytest.approx(focal_loss(1 - p, True), rel=1e-12)


def test_match_and_score_weighted_total():
    rng = np.random.default_rng(3)
    gts = [seg(rng.normal(size=3), rng.normal(size=3) + 3) for _ in range(4)]
    preds = [seg(rng.normal(size=3), rng.normal(size=3) + 3, rng.uniform(0.01, 1)) for _ in range(7)]
    w = LossWeights(2.0, 0.5, 3.0, 0.25)
    _, loss = match_and_score(preds, gts, w, alpha=0.7, gamma=1.5)
    assert loss.total == pytest.approx(3.0 * loss.endpoint_l1 + 0.25 * loss.classification, rel=1e-12)
    assert loss.weights == w


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_match_and_score_permutation_invariance(seed):
    rng = np.random.default_rng(seed)
    gts = [seg(rng.normal(size=3), rng.normal(size=3) + 3) for _ in range(int(rng.integers(1, 5)))]
    preds = [
        seg(rng.normal(size=3), rng.normal(size=3) + 3, rng.uniform(0.01, 1))
        for _ in range(int(rng.integers(1, 7)))
    ]
    base = match_and_score(preds, gts)[1].total
    gp = rng.permutation(len(gts))
    pp = rng.permutation(len(preds))
    assert match_and_score(preds, [gts[k] for k in gp])[1].total == pytest.approx(base, rel=1e-9)
    m2, l2 = match_and_score([preds[k] for k in pp], gts)
    assert l2.total == pytest.approx(base, rel=1e-9)


def test_matching_cost_nonincreasing_when_pair_improves():
    rng = np.random.default_rng(11)
    for _ in range(200):
        gts = [seg(rng.normal(size=3), rng.normal(size=3) + 3) for _ in range(3)]
        preds = [seg(rng.normal(size=3), rng.normal(size=3) + 3, rng.uniform(0.1, 1)) for _ in range(4)]
        m, _ = match_and_score(preds, gts)
        i, j = m.pairs[int(rng.integers(len(m.pairs)))]
        # move prediction i halfway toward its matched annotation
        g, p = gts[j], preds[i]
        if np.abs(p.a - g.a).sum() + np.abs(p.b - g.b).sum() > np.abs(p.a - g.b).sum() + np.abs(p.b - g.a).sum():
            g = g.reversed()
        closer = seg((p.a + g.a) / 2, (p.b + g.b) / 2, p.confidence)
        improved = preds[:i] + [closer] + preds[i + 1 :]
        m2, _ = match_and_score(improved, gts)
        assert m2.cost <= m.cost + 1e-12
