"""
Training a small detector
=========================

A short run on a handful of synthetic documents, to show the moving parts:
augmentation, proposal labelling, the dual-stream model and evaluation.
The acceptance suite does the full 200-epoch run.
"""

import time

from vgdet import RunConfig, detect, synth
from vgdet.pipeline import evaluate_model, train

docs, names = synth.generate(12, 4, seed=5, fractions=(0.75, 0, 0.25))
train_docs = [d.document(names) for d in docs if d.split == "train"]
test_docs = [d.document(names) for d in docs if d.split == "test"]
print("classes:", ", ".join(names))
print("train documents:", len(train_docs), "test documents:", len(test_docs))

# fewer epochs and a coarser grid than the defaults, so the demo runs in seconds
cfg = RunConfig(epochs=100, batch_size=2, label_frame="source", strides=5)
t0 = time.perf_counter()
model, history = train(train_docs, names, cfg)
print("trained %d epochs in %.0f s, loss %.3f -> %.3f"
      % (len(history), time.perf_counter() - t0, history[0].loss, history[-1].loss))

for split, ds in (("train", train_docs), ("test", test_docs)):
    report = evaluate_model(ds, model, cfg, names)
    print("%-5s AP50 %.3f  AP75 %.3f  mAP %.3f" % (split, report.ap50, report.ap75, report.map))

# detections on one test document, next to its ground truth
doc = test_docs[0]
for ann in doc.annotations:
    b = ann.box
    print("truth     %-14s (%.0f, %.0f, %.0f, %.0f)" % (names[ann.class_id], b.x_min, b.y_min, b.x_max, b.y_max))
for d in detect(doc, model, cfg):
    print("detected  %-14s (%.0f, %.0f, %.0f, %.0f)  %.2f" % ((names[d.class_id],) + tuple(d.box) + (d.confidence,)))
