"""
Grid proposals
==============

Each regional cluster box is cut by a k x k grid. Every pair of grid lines
per axis gives a query rectangle; the graph content inside it becomes a
candidate region. Candidates with the same node set are kept once.
"""

from math import comb

import numpy as np

from vgdet import build_graph, generate_proposals, synth
from vgdet.proposals import grid_rectangles

for k in (1, 2, 5, 10):
    print("k=%2d: %5d query rectangles per cluster (C(k+1,2)^2 = %d)"
          % (k, len(grid_rectangles((0, 0, 1, 1), k)), comb(k + 1, 2) ** 2))

docs, names = synth.generate(5, 4, seed=3)
doc = docs[0].document(names)
g = build_graph(doc.split())
print("\ndocument %s: %d symbols, %d clusters" % (docs[0].name, len(doc.annotations), g.num_clusters))

# how many distinct regions survive, and does one of them hit each symbol exactly
gt = doc.gt_boxes()
for k in (3, 5, 10, 15, 20):
    props = generate_proposals(g, k)
    boxes = np.array([p.box for p in props])
    exact = sum(bool(np.isclose(boxes, b, atol=1e-9).all(axis=1).any()) for b in gt)
    print("strides %2d: %4d proposals, %d of %d symbols boxed exactly" % (k, len(props), exact, len(gt)))

# grids with k and 2k lines are nested, so refining never loses a region
a = {frozenset(p.node_ids.tolist()) for p in generate_proposals(g, 5)}
b = {frozenset(p.node_ids.tolist()) for p in generate_proposals(g, 10)}
print("\nk=5 regions contained in k=10 regions:", a <= b)
