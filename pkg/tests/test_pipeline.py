import math

import numpy as np
import pytest

from vgdet import synth
from vgdet.autograd import read_checkpoint
from vgdet.config import RunConfig
from vgdet.document import Annotation, GroundTruthBox, VectorDocument
from vgdet.geometry import line_to_cubic
from vgdet.metrics import iou
from vgdet.model import DualStreamGNN
from vgdet.pipeline import (
    assign_label,
    assign_labels,
    augment,
    augment_matrix,
    detect,
    postprocess,
    prepare,
    source_frame_boxes,
    sweep,
    sweep_table,
    train,
)

TINY = dict(hidden_dim=8, mlp_dims=(16,), epochs=3, batch_size=2, strides=4, checkpoint_every=1, eval_every=1)


@pytest.fixture(scope="module")
def dataset():
    docs, names = synth.generate(4, 2, symbols_per_doc=(2, 3), clutter=(1, 2), seed=21)
    return [d.document(names) for d in docs], names


def square_doc():
    pts = [(10, 10), (30, 10), (30, 30), (10, 30), (10, 10)]
    curves = tuple(line_to_cubic(a, b) for a, b in zip(pts, pts[1:]))
    ann = (Annotation(GroundTruthBox(10, 10, 30, 30), 0),)
    return VectorDocument(curves=curves, width=100, height=100, annotations=ann, class_names=("sq",))


def test_identity_augmentation_is_exact():
    doc = square_doc()
    out = doc.transformed(augment_matrix(100, 100))
    assert out.curves == doc.curves
    np.testing.assert_array_equal(out.gt_boxes(), doc.gt_boxes())


def test_half_turn_maps_points_through_centre():
    doc = square_doc()
    out = doc.transformed(augment_matrix(100, 100, theta=math.pi))
    for a, b in zip(doc.curves, out.curves):
        np.testing.assert_allclose(np.array(b.points), 100 - np.array(a.points), atol=1e-12)
    np.testing.assert_allclose(out.gt_boxes(), [[70, 70, 90, 90]], atol=1e-12)


def test_random_augmentation_preserves_structure():
    doc = square_doc()
    rng = np.random.default_rng(0)
    for _ in range(10):
        out = augment(doc, rng)
        assert len(out.curves) == len(doc.curves)
        assert all(len(c.points) == 4 for c in out.curves)
        assert len(out.annotations) == 1


def test_assign_label_examples():
    gt = np.array([[0, 0, 1, 1], [10, 0, 11, 1]], float)
    labels = np.array([3, 1])
    assert assign_label([0, 0, 1, 1], gt, labels, 0.5, 4) == 3
    assert assign_label([50, 50, 51, 51], gt, labels, 0.5, 4) == 4
    # the unit square against its left 0.6 and right 0.4 slices
    gt2 = np.array([[0.6, 0, 1, 1], [0, 0, 0.6, 1]], float)
    box = [0, 0, 1, 1]
    assert iou(box, gt2[0]) == pytest.approx(0.4) and iou(box, gt2[1]) == pytest.approx(0.6)
    assert assign_label(box, gt2, np.array([0, 2]), 0.5, 3) == 2
    with pytest.raises(ValueError):
        assign_labels(np.zeros((1, 4)), gt, labels, 1.0, 4)


def test_assign_label_translation_invariant():
    rng = np.random.default_rng(1)
    for _ in range(50):
        gt = np.sort(rng.uniform(0, 5, (3, 2, 2)), axis=1).transpose(0, 2, 1).reshape(3, 4)[:, [0, 2, 1, 3]]
        box = gt[rng.integers(3)] + rng.normal(scale=0.3, size=4)
        box = np.array([min(box[0], box[2]), min(box[1], box[3]), max(box[0], box[2]), max(box[1], box[3])])
        shift = np.tile(rng.uniform(-100, 100, 2), 2)
        lab = rng.integers(0, 3, 3)
        assert assign_label(box, gt, lab, 0.5, 3) == assign_label(box + shift, gt + shift, lab, 0.5, 3)


def test_source_frame_boxes_undo_augmentation():
    doc = square_doc()
    cfg = RunConfig(strides=3)
    base = prepare(doc.split(), cfg)
    m = augment_matrix(100, 100, 3, -2, 1.05, 0.95, 0.7)
    moved = prepare(doc.split().transformed(m), cfg)
    back = source_frame_boxes(moved, m)
    np.testing.assert_allclose(back.max(axis=0), base.boxes.max(axis=0), atol=1e-9)
    # the whole-symbol proposal maps back onto the ground truth exactly
    assert np.isclose(back, [[10, 10, 30, 30]], atol=1e-9).all(axis=1).any()


def test_postprocess_nms_and_background():
    probs = np.array([[0.8, 0.1, 0.1], [0.7, 0.2, 0.1], [0.2, 0.1, 0.7], [0.3, 0.6, 0.1]])
    boxes = np.array([[0, 0, 1, 1], [0, 0, 1, 1], [5, 5, 6, 6], [5, 5, 6, 6]], float)
    dets = postprocess(probs, boxes, 2, 0.5, 0.5)
    assert [(d.class_id, d.confidence) for d in dets] == [(0, 0.8), (1, 0.6)]
    assert len(postprocess(probs, boxes, 2, 0.5, None)) == 3
    assert postprocess(np.zeros((0, 3)), np.zeros((0, 4)), 2, 0.5, 0.5) == []


def test_detect_empty_document():
    model = DualStreamGNN(RunConfig(**{k: v for k, v in TINY.items()}).model_config(2))
    assert detect(VectorDocument(width=10, height=10), model) == []


def test_zero_head_initial_loss(dataset):
    docs, names = dataset
    from vgdet.pipeline import _training_batch
    from vgdet import autograd as ag

    cfg = RunConfig(**TINY, augment=False)
    model = DualStreamGNN(cfg.model_config(len(names)))
    for i in range(model.num_head_layers):
        model.params[f"head.{i}.W"].data[:] = 0
        model.params[f"head.{i}.b"].data[:] = 0
    prep = prepare(docs[0].split(), cfg)
    batch, y = _training_batch(prep, cfg, len(names), np.random.default_rng(0))
    loss = ag.softmax_cross_entropy(model.forward(batch, training=True), y)
    assert loss.data[0, 0] == pytest.approx(math.log(len(names) + 1), abs=1e-12)


def test_training_is_deterministic_and_resumable(dataset, tmp_path):
    docs, names = dataset
    cfg = RunConfig(**TINY, label_frame="source")
    _, h1 = train(docs[:3], names, cfg, val_docs=docs[3:], run_dir=tmp_path / "a")
    _, h2 = train(docs[:3], names, cfg, val_docs=docs[3:], run_dir=tmp_path / "b")
    assert [r.loss for r in h1] == [r.loss for r in h2]
    for name in ("metrics.csv", "config.txt", "checkpoints/last.ckpt", "checkpoints/epoch_0002.ckpt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    _, h3 = train(docs[:3], names, cfg, val_docs=docs[3:], run_dir=tmp_path / "c",
                  resume=tmp_path / "a" / "checkpoints" / "epoch_0002.ckpt")
    assert len(h3) == 3
    assert abs(h3[-1].loss - h1[-1].loss) < 1e-9
    assert (tmp_path / "c" / "checkpoints" / "last.ckpt").read_bytes() == \
        (tmp_path / "a" / "checkpoints" / "last.ckpt").read_bytes()
    meta, _ = read_checkpoint(tmp_path / "a" / "checkpoints" / "last.ckpt")
    assert meta["extra"]["epoch"] == 3 and meta["config"]["run"]["hidden_dim"] == 8


def test_single_separable_document_is_learned():
    doc = square_doc()
    cfg = RunConfig(hidden_dim=8, mlp_dims=(16,), epochs=60, batch_size=1, strides=1, augment=False, lr=0.01)
    model, hist = train([doc], ["sq"], cfg)
    assert hist[-1].loss < 0.05
    dets = detect(doc, model, cfg)
    assert len(dets) == 1 and dets[0].class_id == 0
    assert iou(dets[0].box, [10, 10, 30, 30]) >= 0.9


def test_sweep_table_rows(dataset):
    docs, names = dataset
    cfg = RunConfig(**TINY)
    model = DualStreamGNN(cfg.model_config(len(names)))
    rows = sweep("strides", [1, 2, 4], docs, names, cfg, model=model)
    table = sweep_table("strides", rows).splitlines()
    assert table[0] == "strides,ap50,ap75,map,mean_proposals,seconds" and len(table) == 4
    with pytest.raises(ValueError):
        sweep("lr", [1], docs, names, cfg, model=model)


def test_empty_training_set():
    with pytest.raises(ValueError):
        train([], ["a"], RunConfig())


def test_cluster_frame_inputs_are_translation_and_scale_invariant(dataset):
    docs, _ = dataset
    doc = docs[0].split()
    moved = doc.transformed(augment_matrix(doc.width, doc.height, dx=37.0, dy=-21.5, sx=1.08, sy=1.08))
    for frame, same in (("cluster", True), ("document", False)):
        cfg = RunConfig(strides=3, coord_frame=frame)
        a, b = prepare(doc, cfg).batch, prepare(moved, cfg).batch
        assert np.array_equal(a.cluster_of, b.cluster_of)
        # stroke width scales with the drawing, so compare position and colour
        assert np.allclose(a.x[:, :5], b.x[:, :5], atol=1e-9) == same
        assert np.allclose(a.edge_attrs, b.edge_attrs, atol=1e-9) == same
    with pytest.raises(ValueError):
        RunConfig(coord_frame="page")
