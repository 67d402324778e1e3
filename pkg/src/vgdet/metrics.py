"""IoU, non-maximum suppression and COCO-style average precision."""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

IOU_THRESHOLDS = np.round(np.arange(0.50, 0.951, 0.05), 2)


def _check_boxes(b: np.ndarray) -> np.ndarray:
    b = np.asarray(b, dtype=float).reshape(-1, 4)
    if ((b[:, 2] < b[:, 0]) | (b[:, 3] < b[:, 1])).any():
        raise ValueError("inverted box (min > max)")
    return b


def iou_matrix(a, b) -> np.ndarray:
    """Pairwise IoU. A zero-area box scores 0 against everything except an
    identical zero-area box, which scores 1."""
    a, b = _check_boxes(a), _check_boxes(b)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    iw = np.clip(np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0]), 0, None)
    ih = np.clip(np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1]), 0, None)
    inter = iw * ih
    union = area_a[:, None] + area_b[None, :] - inter
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(union > 0, inter / np.where(union > 0, union, 1.0), 0.0)
    degenerate = (area_a[:, None] == 0) | (area_b[None, :] == 0)
    same = (a[:, None, :] == b[None, :, :]).all(axis=2)
    return np.where(degenerate, np.where(same, 1.0, 0.0), out)


def iou(a, b) -> float:
    return float(iou_matrix(a, b)[0, 0])


def nms(boxes, scores, iou_threshold: float = 0.5) -> np.ndarray:
    """Indices kept by greedy NMS, highest score first. A box is suppressed
    when its IoU with a kept box exceeds ``iou_threshold``. Ties in score
    keep the lower index."""
    boxes = _check_boxes(boxes)
    scores = np.asarray(scores, dtype=float)
    order = np.lexsort((np.arange(len(scores)), -scores))
    keep = []
    suppressed = np.zeros(len(scores), dtype=bool)
    ious = iou_matrix(boxes, boxes)
    for i in order:
        if suppressed[i]:
            continue
        keep.append(i)
        suppressed |= ious[i] > iou_threshold
    return np.array(keep, dtype=np.int64)


@dataclass(frozen=True)
class Detection:
    box: np.ndarray
    class_id: int
    confidence: float


def pr_curve(tp_flags: np.ndarray, num_gt: int) -> tuple[np.ndarray, np.ndarray]:
    tp = np.cumsum(tp_flags)
    fp = np.cumsum(~tp_flags)
    recall = tp / num_gt
    precision = tp / np.maximum(tp + fp, 1)
    return precision, recall


def all_points_ap(precision: np.ndarray, recall: np.ndarray) -> float:
    """Area under the PR curve with precision made monotone non-increasing."""
    mrec = np.concatenate([[0.0], recall, [1.0]])
    mpre = np.concatenate([[0.0], precision, [0.0]])
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    idx = np.nonzero(mrec[1:] != mrec[:-1])[0]
    return float(np.sum((mrec[idx + 1] - mrec[idx]) * mpre[idx + 1]))


def match_detections(dets, gts, iou_thr: float):
    """Greedy matching for one class over a dataset.

    ``dets``: list of (doc index, box, confidence); ``gts``: list of
    (doc index, box). Detections are visited by descending confidence (ties
    by list position); each takes the highest-IoU unmatched ground truth of
    the same document with IoU >= ``iou_thr``. Returns TP flags in visiting
    order and the visiting order.
    """
    conf = np.array([d[2] for d in dets], dtype=float)
    order = np.lexsort((np.arange(len(dets)), -conf))
    gt_by_doc: dict[int, list[int]] = {}
    for g, (doc, _) in enumerate(gts):
        gt_by_doc.setdefault(doc, []).append(g)
    gt_boxes = np.array([g[1] for g in gts]).reshape(-1, 4)
    used = np.zeros(len(gts), dtype=bool)
    flags = np.zeros(len(dets), dtype=bool)
    for rank, d in enumerate(order):
        doc, box, _ = dets[d]
        cand = [g for g in gt_by_doc.get(doc, []) if not used[g]]
        if not cand:
            continue
        ious = iou_matrix(box, gt_boxes[cand])[0]
        best = int(np.argmax(ious))
        if ious[best] >= iou_thr:
            used[cand[best]] = True
            flags[rank] = True
    return flags, order


def average_precision(dets, gts, iou_thr: float) -> tuple[float, int, int, int]:
    """AP for one class plus TP, FP and FN counts."""
    if not gts:
        return float("nan"), 0, len(dets), 0
    if not dets:
        return 0.0, 0, 0, len(gts)
    flags, _ = match_detections(dets, gts, iou_thr)
    precision, recall = pr_curve(flags, len(gts))
    tp = int(flags.sum())
    return all_points_ap(precision, recall), tp, len(dets) - tp, len(gts) - tp


@dataclass
class EvalReport:
    class_names: list[str]
    thresholds: np.ndarray
    ap: np.ndarray  # (classes, thresholds); nan for classes without ground truth
    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray
    excluded: list[int] = field(default_factory=list)

    def mean_ap_at(self, thr: float) -> float:
        k = int(np.argmin(np.abs(self.thresholds - thr)))
        col = self.ap[:, k]
        valid = ~np.isnan(col)
        return float(col[valid].mean()) if valid.any() else 0.0

    @property
    def ap50(self) -> float:
        return self.mean_ap_at(0.5)

    @property
    def ap75(self) -> float:
        return self.mean_ap_at(0.75)

    @property
    def map(self) -> float:
        return float(np.mean([self.mean_ap_at(t) for t in self.thresholds]))

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write("class_id,class,iou_threshold,ap,tp,fp,fn\n")
        for c, name in enumerate(self.class_names):
            for k, thr in enumerate(self.thresholds):
                ap = "" if np.isnan(self.ap[c, k]) else f"{self.ap[c, k]:.6f}"
                out.write(f"{c},{name},{thr:.2f},{ap},{self.tp[c, k]},{self.fp[c, k]},{self.fn[c, k]}\n")
        return out.getvalue()

    def to_table(self) -> str:
        width = max([5] + [len(n) for n in self.class_names])
        lines = [f"{'class':<{width}}  {'AP50':>6}  {'AP75':>6}  {'mAP':>6}"]
        for c, name in enumerate(self.class_names):
            if c in self.excluded:
                lines.append(f"{name:<{width}}  {'(no ground truth)':>22}")
                continue
            k50 = int(np.argmin(np.abs(self.thresholds - 0.5)))
            k75 = int(np.argmin(np.abs(self.thresholds - 0.75)))
            lines.append(
                f"{name:<{width}}  {100 * self.ap[c, k50]:6.2f}  {100 * self.ap[c, k75]:6.2f}"
                f"  {100 * np.mean(self.ap[c]):6.2f}"
            )
        lines.append(f"{'all':<{width}}  {100 * self.ap50:6.2f}  {100 * self.ap75:6.2f}  {100 * self.map:6.2f}")
        return "\n".join(lines) + "\n"


def evaluate(detections, ground_truths, class_names, thresholds=IOU_THRESHOLDS) -> EvalReport:
    """Dataset-level report.

    ``detections[d]`` is a list of :class:`Detection` for document ``d``;
    ``ground_truths[d]`` is a pair (boxes (n,4), labels (n,)).
    Classes without any ground truth are excluded from the means.
    """
    C = len(class_names)
    thresholds = np.asarray(thresholds, dtype=float)
    dets_by_class = [[] for _ in range(C)]
    gts_by_class = [[] for _ in range(C)]
    for d, dets in enumerate(detections):
        for det in dets:
            dets_by_class[det.class_id].append((d, np.asarray(det.box, float), float(det.confidence)))
    for d, (boxes, labels) in enumerate(ground_truths):
        for box, lab in zip(np.asarray(boxes).reshape(-1, 4), labels):
            gts_by_class[int(lab)].append((d, np.asarray(box, float)))
    shape = (C, len(thresholds))
    ap = np.zeros(shape)
    tp = np.zeros(shape, dtype=int)
    fp = np.zeros(shape, dtype=int)
    fn = np.zeros(shape, dtype=int)
    for c in range(C):
        for k, thr in enumerate(thresholds):
            ap[c, k], tp[c, k], fp[c, k], fn[c, k] = average_precision(dets_by_class[c], gts_by_class[c], thr)
    excluded = [c for c in range(C) if not gts_by_class[c]]
    return EvalReport(list(class_names), thresholds, ap, tp, fp, fn, excluded)
