"""Training, inference and evaluation around the dual-stream detector."""

from __future__ import annotations

import csv
import io
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import autograd as ag
from .config import RunConfig, config_text
from .document import VectorDocument
from .graph import DetectionGraph, build_graph
from .metrics import Detection, EvalReport, evaluate, iou_matrix, nms
from .model import DualStreamGNN, GraphBatch, pack
from .proposals import Proposal, generate_proposals, proposal_boxes, region_box

log = logging.getLogger(__name__)


# -- augmentation -----------------------------------------------------------

def augment_matrix(width, height, dx=0.0, dy=0.0, sx=1.0, sy=1.0, theta=0.0) -> np.ndarray:
    """Scale about the canvas centre, translate, then rotate about the centre."""
    c = np.array([width / 2.0, height / 2.0])
    S = np.diag([sx, sy])
    ct, st = math.cos(theta), math.sin(theta)
    R = np.array([[ct, -st], [st, ct]])
    A = R @ S
    b = c + R @ (np.array([dx, dy]) - S @ c)
    return np.hstack([A, b[:, None]])


def random_augment_matrix(doc: VectorDocument, rng: np.random.Generator, max_shift=0.1, max_scale=0.1) -> np.ndarray:
    """Shift of up to ``max_shift`` of the canvas size, per-axis scale in
    1 +/- ``max_scale`` and a uniform rotation angle."""
    dx, dy = rng.uniform(-max_shift, max_shift, 2) * np.array([doc.width, doc.height])
    sx, sy = rng.uniform(1 - max_scale, 1 + max_scale, 2)
    theta = rng.uniform(0.0, 2 * math.pi)
    return augment_matrix(doc.width, doc.height, dx, dy, sx, sy, theta)


def augment(doc: VectorDocument, rng: np.random.Generator, max_shift=0.1, max_scale=0.1) -> VectorDocument:
    return doc.transformed(random_augment_matrix(doc, rng, max_shift, max_scale))


# -- label assignment -------------------------------------------------------

def assign_labels(boxes: np.ndarray, gt_boxes: np.ndarray, gt_labels: np.ndarray, fg_iou: float,
                  num_classes: int) -> np.ndarray:
    """Class of the best-IoU ground truth when that IoU >= fg_iou, else background."""
    if not 0 < fg_iou < 1:
        raise ValueError("fg_iou must lie in (0, 1)")
    labels = np.full(len(boxes), num_classes, dtype=np.int64)
    if len(boxes) == 0 or len(gt_boxes) == 0:
        return labels
    ious = iou_matrix(boxes, gt_boxes)
    best = ious.argmax(axis=1)
    hit = ious[np.arange(len(boxes)), best] >= fg_iou
    labels[hit] = np.asarray(gt_labels)[best[hit]]
    return labels


def assign_label(box, gt_boxes, gt_labels, fg_iou: float, num_classes: int) -> int:
    return int(assign_labels(np.asarray(box, float).reshape(1, 4), np.asarray(gt_boxes).reshape(-1, 4),
                             gt_labels, fg_iou, num_classes)[0])


# -- document preparation ---------------------------------------------------

@dataclass
class Prepared:
    doc: VectorDocument
    graph: DetectionGraph
    proposals: list[Proposal]
    batch: GraphBatch

    @property
    def boxes(self) -> np.ndarray:
        return proposal_boxes(self.proposals)


def model_inputs(graph: DetectionGraph, doc: VectorDocument, regions, coord_frame: str = "cluster") -> GraphBatch:
    """Graph tensors with normalised coordinates.

    ``coord_frame="document"`` centres coordinates on the canvas and divides
    by the document diagonal. ``"cluster"`` centres each node and edge on the
    bounding-box centre of its regional cluster and divides by that box's
    diagonal, which makes the inputs invariant to translation and scale.
    """
    if coord_frame == "cluster" and graph.num_nodes:
        boxes = graph.cluster_boxes
        centres = (boxes[:, :2] + boxes[:, 2:]) / 2.0
        diag = np.hypot(boxes[:, 2] - boxes[:, 0], boxes[:, 3] - boxes[:, 1])
        # a lone point has no extent; fall back to the document scale
        diag = np.where(diag > 1e-9 * graph.diagonal, diag, graph.diagonal)
        node_c, scale = centres[graph.cluster_of], diag[graph.cluster_of][:, None]
        edge_c = np.tile(centres[graph.cluster_of[graph.edge_src]], 2)
        edge_scale = diag[graph.cluster_of[graph.edge_src]][:, None]
    else:
        node_c = np.array([doc.width / 2.0, doc.height / 2.0])
        edge_c = np.tile(node_c, 2)
        scale = edge_scale = graph.diagonal
    x = graph.node_attrs.copy()
    x[:, :2] = (x[:, :2] - node_c) / scale
    ea = (graph.edge_attrs - edge_c) / edge_scale
    return GraphBatch(x, graph.edge_src, graph.edge_dst, ea, graph.cluster_of, list(regions))


def prepare(doc: VectorDocument, cfg: RunConfig) -> Prepared:
    """Graph and proposals for an already intersection-split document."""
    graph = build_graph(doc, expand_len=cfg.expand_frac * doc.diagonal if doc.diagonal > 0 else None)
    proposals = generate_proposals(graph, cfg.strides, cfg.max_size_frac) if graph.num_nodes else []
    return Prepared(doc, graph, proposals, model_inputs(graph, doc, [p.node_ids for p in proposals], cfg.coord_frame))


def _split_one(args):
    doc, t_junctions = args
    return doc.split(t_junctions)


def split_documents(docs, t_junctions: bool = True, workers: int = 1) -> list[VectorDocument]:
    if workers > 1 and len(docs) > 1:
        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(_split_one, [(d, t_junctions) for d in docs]))
    return [d.split(t_junctions) for d in docs]


# -- inference --------------------------------------------------------------

def postprocess(probs: np.ndarray, boxes: np.ndarray, num_classes: int, conf_threshold: float,
                nms_iou: float | None) -> list[Detection]:
    """Drop background-argmax rows, threshold foreground confidence, class-wise NMS."""
    if len(probs) == 0:
        return []
    keep = probs.argmax(axis=1) != num_classes
    cls = probs[:, :num_classes].argmax(axis=1)
    conf = probs[np.arange(len(probs)), cls]
    keep &= conf >= conf_threshold
    idx = np.nonzero(keep)[0]
    out = []
    for c in np.unique(cls[idx]):
        members = idx[cls[idx] == c]
        if nms_iou is not None:
            members = members[nms(boxes[members], conf[members], nms_iou)]
        out.extend(Detection(boxes[i].copy(), int(c), float(conf[i])) for i in members)
    out.sort(key=lambda d: -d.confidence)
    return out


def detect_prepared(prep: Prepared, model: DualStreamGNN, cfg: RunConfig) -> list[Detection]:
    if not prep.proposals:
        return []
    probs = model.predict_proba(prep.batch)
    return postprocess(probs, prep.boxes, model.config.num_classes, cfg.conf_threshold,
                       cfg.nms_iou if cfg.use_nms else None)


def detect(doc: VectorDocument, model: DualStreamGNN, cfg: RunConfig | None = None) -> list[Detection]:
    cfg = cfg or RunConfig()
    return detect_prepared(prepare(doc.split(cfg.t_junctions), cfg), model, cfg)


def evaluate_prepared(preps: list[Prepared], model: DualStreamGNN, cfg: RunConfig, class_names) -> EvalReport:
    dets = [detect_prepared(p, model, cfg) for p in preps]
    gts = [(p.doc.gt_boxes(), p.doc.gt_labels()) for p in preps]
    return evaluate(dets, gts, class_names)


def evaluate_model(docs, model: DualStreamGNN, cfg: RunConfig, class_names, workers: int = 1) -> EvalReport:
    preps = [prepare(d, cfg) for d in split_documents(docs, cfg.t_junctions, workers)]
    return evaluate_prepared(preps, model, cfg, class_names)


# -- training ---------------------------------------------------------------

@dataclass
class EpochRecord:
    epoch: int
    loss: float
    val_ap50: float | None
    num_proposals: int
    foreground: int


def source_frame_boxes(prep: Prepared, matrix: np.ndarray) -> np.ndarray:
    """Proposal boxes recomputed after mapping the graph back through the
    inverse of the affine ``matrix`` that produced ``prep.doc``."""
    A, b = matrix[:, :2], matrix[:, 2]
    Ainv = np.linalg.inv(A)
    g = prep.graph
    pos = (g.positions - b) @ Ainv.T
    ctrl = (g.edge_ctrl.reshape(-1, 2) - b) @ Ainv.T
    back = replace(g, node_attrs=np.hstack([pos, g.node_attrs[:, 2:]]), edge_ctrl=ctrl.reshape(g.edge_ctrl.shape))
    return np.array([region_box(back, p.node_ids) for p in prep.proposals]).reshape(-1, 4)


def _training_batch(prep: Prepared, cfg: RunConfig, num_classes: int, rng: np.random.Generator,
                    source: tuple[VectorDocument, np.ndarray] | None = None):
    """Model inputs and labels for one document.

    With ``source`` = (un-augmented document, augmentation matrix), labels
    are assigned in the source frame against the original boxes.
    """
    if source is None:
        labels = assign_labels(prep.boxes, prep.doc.gt_boxes(), prep.doc.gt_labels(), cfg.fg_iou, num_classes)
    else:
        doc, matrix = source
        labels = assign_labels(source_frame_boxes(prep, matrix), doc.gt_boxes(), doc.gt_labels(), cfg.fg_iou,
                               num_classes)
    batch = prep.batch
    if cfg.background_ratio > 0:
        fg = np.nonzero(labels != num_classes)[0]
        bg = np.nonzero(labels == num_classes)[0]
        cap = max(1, int(math.ceil(cfg.background_ratio * max(len(fg), 1))))
        if len(bg) > cap:
            bg = np.sort(rng.choice(bg, cap, replace=False))
        keep = np.sort(np.concatenate([fg, bg]))
        labels = labels[keep]
        batch = GraphBatch(batch.x, batch.edge_src, batch.edge_dst, batch.edge_attrs, batch.cluster_of,
                           [batch.regions[i] for i in keep])
    return batch, labels


def train_step(model: DualStreamGNN, batches: list[GraphBatch], labels: list[np.ndarray], lr: float) -> float:
    packed, _ = pack(batches)
    y = np.concatenate(labels)
    model.params.zero_grad()
    logits = model.forward(packed, training=True)
    loss = ag.softmax_cross_entropy(logits, y)
    loss.backward()
    ag.adam_step(model.params, model.params.grads(), lr)
    return float(loss.data[0, 0])


class RunDirectory:
    """config.txt, metrics.csv and checkpoints of one training run."""

    def __init__(self, path):
        self.path = Path(path)
        self.path.mkdir(parents=True, exist_ok=True)

    @property
    def metrics_path(self) -> Path:
        return self.path / "metrics.csv"

    def write_config(self, cfg: RunConfig, class_names):
        ag.atomic_write_text(self.path / "config.txt", config_text(cfg))
        ag.atomic_write_text(self.path / "classes.txt", "\n".join(class_names) + "\n")

    def write_metrics(self, history: list[EpochRecord]):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "loss", "val_ap50"])
        for r in history:
            w.writerow([r.epoch, repr(r.loss), "" if r.val_ap50 is None else repr(r.val_ap50)])
        ag.atomic_write_text(self.metrics_path, buf.getvalue())

    def checkpoint(self, name: str) -> Path:
        return self.path / "checkpoints" / name


def _history_from_meta(meta: dict) -> list[EpochRecord]:
    return [EpochRecord(**r) for r in meta["extra"].get("history", [])]


def train(train_docs, class_names, cfg: RunConfig, val_docs=None, run_dir=None, resume=None,
          workers: int = 1, progress=None) -> tuple[DualStreamGNN, list[EpochRecord]]:
    """Fit a detector on annotated documents.

    Every epoch visits the documents in a seeded random order, in mini-batches
    of ``cfg.batch_size``. Each document is augmented with its own generator
    seeded by (seed, epoch, document index), so a run is reproducible and can
    resume from any checkpoint.
    """
    if not train_docs:
        raise ValueError("training set is empty")
    C = len(class_names)
    split = split_documents(train_docs, cfg.t_junctions, workers)
    val_preps = [prepare(d, cfg) for d in split_documents(val_docs or [], cfg.t_junctions, workers)]
    static = None if cfg.augment else [prepare(d, cfg) for d in split]

    model = DualStreamGNN(cfg.model_config(C))
    history: list[EpochRecord] = []
    start = 1
    best = -1.0
    if resume is not None:
        model, meta = DualStreamGNN.load(resume)
        history = _history_from_meta(meta)
        start = int(meta["extra"]["epoch"]) + 1
        best = float(meta["extra"].get("best_ap50", -1.0))
    rd = RunDirectory(run_dir) if run_dir is not None else None
    if rd is not None:
        rd.write_config(cfg, class_names)

    def save(name, epoch):
        if rd is None:
            return
        extra = {"epoch": epoch, "best_ap50": best, "class_names": list(class_names),
                 "history": [r.__dict__ for r in history]}
        model.save(rd.checkpoint(name), extra=extra, run_config=cfg.to_dict())

    warned = False
    for epoch in range(start, cfg.epochs + 1):
        order = np.random.default_rng([cfg.seed, epoch]).permutation(len(split))
        losses, weights = [], []
        n_props = n_fg = 0
        for lo in range(0, len(order), cfg.batch_size):
            batches, labels = [], []
            for di in order[lo : lo + cfg.batch_size]:
                rng = np.random.default_rng([cfg.seed, epoch, int(di)])
                source = None
                if cfg.augment:
                    matrix = random_augment_matrix(split[di], rng)
                    prep = prepare(split[di].transformed(matrix), cfg)
                    if cfg.label_frame == "source":
                        source = (split[di], matrix)
                else:
                    prep = static[di]
                if not prep.proposals:
                    continue
                b, y = _training_batch(prep, cfg, C, rng, source)
                batches.append(b)
                labels.append(y)
            if not batches:
                continue
            y_all = np.concatenate(labels)
            fg = int((y_all != C).sum())
            if fg == 0 and not warned:
                log.warning("mini-batch without foreground proposals at fg_iou=%s", cfg.fg_iou)
                warned = True
            losses.append(train_step(model, batches, labels, cfg.lr))
            weights.append(len(y_all))
            n_props += len(y_all)
            n_fg += fg
        loss = float(np.average(losses, weights=weights)) if losses else float("nan")
        val_ap = None
        if val_preps and (epoch % max(cfg.eval_every, 1) == 0 or epoch == cfg.epochs):
            val_ap = evaluate_prepared(val_preps, model, cfg, class_names).ap50
        history.append(EpochRecord(epoch, loss, val_ap, n_props, n_fg))
        if progress is not None:
            progress(history[-1])
        if val_ap is not None and val_ap > best:
            best = val_ap
            save("best.ckpt", epoch)
        if rd is not None:
            rd.write_metrics(history)
            if epoch % max(cfg.checkpoint_every, 1) == 0 or epoch == cfg.epochs:
                save(f"epoch_{epoch:04d}.ckpt", epoch)
                save("last.ckpt", epoch)
    return model, history


# -- strides sweep ----------------------------------------------------------

@dataclass
class SweepRow:
    value: int
    ap50: float
    ap75: float
    map: float
    mean_proposals: float
    seconds: float


def sweep(param: str, values, test_docs, class_names, cfg: RunConfig, train_docs=None, model=None,
          workers: int = 1) -> list[SweepRow]:
    """Evaluate one setting per value of ``param`` (``strides`` or ``num_layers``).

    With ``model`` given (strides only) the same weights are evaluated at each
    value; otherwise a model is trained per value on ``train_docs``.
    """
    if param not in ("strides", "num_layers"):
        raise ValueError(f"cannot sweep {param!r}")
    if model is not None and param != "strides":
        raise ValueError("a fixed model can only be swept over strides")
    split_test = split_documents(test_docs, cfg.t_junctions, workers)
    rows = []
    for v in values:
        c = cfg.replace(**{param: int(v)})
        t0 = time.perf_counter()
        m = model if model is not None else train(train_docs, class_names, c, workers=workers)[0]
        preps = [prepare(d, c) for d in split_test]
        rep = evaluate_prepared(preps, m, c, class_names)
        rows.append(SweepRow(int(v), rep.ap50, rep.ap75, rep.map,
                             float(np.mean([len(p.proposals) for p in preps])) if preps else 0.0,
                             time.perf_counter() - t0))
    return rows


def sweep_table(param: str, rows: list[SweepRow]) -> str:
    lines = [f"{param},ap50,ap75,map,mean_proposals,seconds"]
    for r in rows:
        lines.append(f"{r.value},{r.ap50:.4f},{r.ap75:.4f},{r.map:.4f},{r.mean_proposals:.1f},{r.seconds:.2f}")
    return "\n".join(lines) + "\n"


def checkpoint_classes(meta: dict) -> list[str]:
    return list(meta["extra"].get("class_names") or [])


def run_config_from_meta(meta: dict) -> RunConfig:
    return RunConfig.from_dict(meta["config"].get("run", {}))
