import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vgdet.metrics import (
    IOU_THRESHOLDS,
    Detection,
    average_precision,
    evaluate,
    iou,
    iou_matrix,
    match_detections,
    nms,
)


def area_iou(a, b):
    """Plain scalar IoU used as an oracle."""
    w = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
    h = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = w * h
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return inter / union if union > 0 else 0.0


def test_iou_examples():
    assert iou([0, 0, 2, 2], [1, 0, 3, 2]) == pytest.approx(1 / 3)
    assert iou([0, 0, 1, 1], [0, 0, 1, 1]) == 1.0
    assert iou([0, 0, 1, 1], [2, 2, 3, 3]) == 0.0
    assert iou([0, 0, 1, 0], [0, 0, 1, 0]) == 1.0
    assert iou([0, 0, 1, 0], [0, 0, 1, 1]) == 0.0
    with pytest.raises(ValueError):
        iou([1, 0, 0, 1], [0, 0, 1, 1])


box_st = st.tuples(st.floats(0, 10), st.floats(0, 10), st.floats(0.01, 5), st.floats(0.01, 5)).map(
    lambda t: [t[0], t[1], t[0] + t[2], t[1] + t[3]]
)


@settings(max_examples=200, deadline=None)
@given(box_st, box_st, st.floats(-50, 50), st.floats(-50, 50))
def test_iou_matches_oracle_and_translation(a, b, dx, dy):
    v = iou(a, b)
    assert v == pytest.approx(area_iou(a, b), abs=1e-12)
    assert 0 <= v <= 1 and v == pytest.approx(iou(b, a), abs=1e-15)
    s = [dx, dy, dx, dy]
    assert iou(np.add(a, s), np.add(b, s)) == pytest.approx(v, abs=1e-9)


def test_nms():
    boxes = [[0, 0, 1, 1], [0, 0, 1, 1], [0.05, 0, 1.05, 1], [5, 5, 6, 6]]
    assert nms(boxes, [0.9, 0.8, 0.95, 0.1], 0.5).tolist() == [2, 3]
    # identical boxes with equal scores keep the lower index
    assert nms(boxes[:2], [0.5, 0.5]).tolist() == [0]
    # IoU exactly at the threshold is kept
    assert nms([[0, 0, 2, 2], [1, 0, 3, 2]], [1, 0.5], 1 / 3 + 1e-12).tolist() == [0, 1]


def reference_ap(flags, num_gt):
    """Integrate the interpolated PR curve at each recall step by brute force."""
    flags = list(flags)
    points = []
    tp = 0
    for i, f in enumerate(flags):
        tp += f
        points.append((tp / (i + 1), tp / num_gt))
    ap, prev = 0.0, 0.0
    for r in sorted({r for _, r in points}):
        if r == prev:
            continue
        p_interp = max(p for p, rr in points if rr >= r)
        ap += (r - prev) * p_interp
        prev = r
    return ap


def exhaustive_match(dets, gts, thr):
    """Try every injective assignment and keep the one that is lexicographically
    best in the IoU taken by each detection, in confidence order."""
    order = sorted(range(len(dets)), key=lambda d: (-dets[d][2], d))
    best, best_key = None, None
    options = [[None] + [g for g in range(len(gts))
                         if gts[g][0] == dets[d][0] and area_iou(dets[d][1], gts[g][1]) >= thr] for d in order]
    for combo in itertools.product(*options):
        used = [g for g in combo if g is not None]
        if len(used) != len(set(used)):
            continue
        key = tuple(0.0 if g is None else area_iou(dets[d][1], gts[g][1]) + 1 for d, g in zip(order, combo))
        if best_key is None or key > best_key:
            best, best_key = combo, key
    return np.array([g is not None for g in best])


def test_ap_hand_walked():
    gts = [(0, [0, 0, 1, 1])]
    dets = [(0, [0, 0, 1, 1], 0.9), (0, [5, 5, 6, 6], 0.8)]
    assert average_precision(dets, gts, 0.5)[0] == 1.0
    assert average_precision([], gts, 0.5) == (0.0, 0, 0, 1)
    dets = [(0, [5, 5, 6, 6], 0.9), (0, [0, 0, 1, 1], 0.8)]
    assert average_precision(dets, gts, 0.5)[0] == pytest.approx(0.5)


def test_matcher_against_exhaustive_assignment():
    rng = np.random.default_rng(3)
    for trial in range(300):
        n_gt = int(rng.integers(1, 4))
        n_det = int(rng.integers(1, 6))
        docs = int(rng.integers(1, 3))
        gts = []
        for _ in range(n_gt):
            x, y = rng.uniform(0, 3, 2)
            gts.append((int(rng.integers(docs)), [x, y, x + 1, y + 1]))
        dets = []
        for _ in range(n_det):
            base = gts[int(rng.integers(n_gt))][1]
            jitter = rng.normal(scale=0.3, size=4)
            b = np.array(base) + jitter
            b = [min(b[0], b[2]), min(b[1], b[3]), max(b[0], b[2]), max(b[1], b[3])]
            dets.append((int(rng.integers(docs)), b, float(rng.choice([0.3, 0.5, 0.7, 0.9]))))
        thr = float(rng.choice([0.3, 0.5, 0.75]))
        flags, _ = match_detections(dets, gts, thr)
        want = exhaustive_match(dets, gts, thr)
        assert flags.tolist() == want.tolist()
        ap = average_precision(dets, gts, thr)[0]
        assert ap == pytest.approx(reference_ap(want, n_gt), abs=1e-12)


def test_ap_invariant_to_monotone_confidence_transform():
    rng = np.random.default_rng(4)
    gts = [(d, [d, 0, d + 1, 1]) for d in range(4)]
    dets = [(int(rng.integers(4)), [g, rng.uniform(0, 0.5), g + 1, 1], float(c))
            for g, c in zip(rng.integers(0, 4, 8), rng.uniform(0, 1, 8))]
    base = average_precision(dets, gts, 0.5)[0]
    warped = [(d, b, np.exp(3 * c) - 7) for d, b, c in dets]
    assert average_precision(warped, gts, 0.5)[0] == base


def test_ap_non_increasing_in_threshold():
    rng = np.random.default_rng(5)
    gts = [(0, [i * 2.0, 0, i * 2.0 + 1, 1]) for i in range(5)]
    dets = [(0, [i * 2.0 + rng.uniform(0, 0.4), 0, i * 2.0 + 1, 1], float(rng.uniform())) for i in range(5)]
    aps = [average_precision(dets, gts, t)[0] for t in IOU_THRESHOLDS]
    assert all(b <= a for a, b in zip(aps, aps[1:]))


def test_evaluate_perfect_and_empty():
    gt = [(np.array([[0, 0, 1, 1], [2, 2, 3, 3]]), np.array([0, 1]))]
    perfect = [[Detection(np.array(b, float), int(c), 1.0) for b, c in zip(*gt[0])]]
    rep = evaluate(perfect, gt, ["a", "b", "c"])
    assert rep.ap50 == rep.ap75 == rep.map == 1.0
    assert rep.excluded == [2]
    assert "(no ground truth)" in rep.to_table()
    empty = evaluate([[]], gt, ["a", "b"])
    assert empty.ap50 == empty.map == 0.0
    csv = rep.to_csv().splitlines()
    assert csv[0] == "class_id,class,iou_threshold,ap,tp,fp,fn" and len(csv) == 1 + 3 * 10


def test_map_is_mean_over_thresholds():
    gt = [(np.array([[0, 0, 1, 1]]), np.array([0]))]
    dets = [[Detection(np.array([0, 0, 1, 0.8]), 0, 0.9)]]
    rep = evaluate(dets, gt, ["a"])
    # IoU 0.8 passes thresholds 0.50 to 0.80
    assert rep.map == pytest.approx(7 / 10)
    assert np.all((rep.ap >= 0) & (rep.ap <= 1))


def test_iou_matrix_shape():
    assert iou_matrix(np.zeros((0, 4)), [[0, 0, 1, 1]]).shape == (0, 1)
