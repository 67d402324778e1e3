"""
From an SVG document to a detection graph
=========================================

Every primitive becomes one or more cubic Bezier curves, curves are split
where they cross, and the curve endpoints become graph nodes.
"""

import numpy as np

from vgdet import build_graph, parse_svg
from vgdet.geometry import ellipse_to_beziers, sample

# a circle is four cubic arcs; check how far they stray from the true circle
arcs = ellipse_to_beziers((0.0, 0.0), 1.0, 1.0)
pts = np.concatenate([sample(c, 2001) for c in arcs])
print("circle arcs:", len(arcs), "max radial error: %.2e" % np.abs(np.hypot(*pts.T) - 1).max())

svg = """<svg xmlns="http://www.w3.org/2000/svg" width="100" height="100">
  <rect x="10" y="10" width="30" height="30" fill="none" stroke="black"/>
  <line x1="10" y1="10" x2="40" y2="40" stroke="black"/>
  <line x1="10" y1="40" x2="40" y2="10" stroke="black"/>
  <circle cx="75" cy="75" r="12" fill="none" stroke="red"/>
</svg>"""

doc = parse_svg(svg)
print("curves as parsed:", len(doc.curves))

# the two diagonals cross in the middle of the box, so both get split there
split = doc.split()
print("curves after splitting:", len(split.curves))

g = build_graph(split)
print("nodes:", g.num_nodes, "stroke edges:", g.num_edges, "regional clusters:", g.num_clusters)

# the box and the circle are far apart, so they land in different clusters
for c in range(g.num_clusters):
    members = g.cluster_members(c)
    print("cluster %d: %d nodes, box %s" % (c, len(members), np.round(g.cluster_boxes[c], 2)))

# node attributes are position, colour and stroke width
print("first node attributes:", np.round(g.node_attrs[0], 3))
