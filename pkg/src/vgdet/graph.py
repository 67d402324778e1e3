"""Multi-graph construction: curve endpoints become nodes, curves become
stroke edges, and spatially close stroke components form regional clusters.

Position-wise edges are never materialised; they are implied by
``cluster_of`` (every pair of nodes in one cluster is connected).
"""

from __future__ import annotations

import io
from dataclasses import dataclass, replace

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .document import VectorDocument

MERGE_FRAC = 1e-4
EXPAND_FRAC = 0.02


@dataclass(frozen=True)
class DetectionGraph:
    """Node table, stroke-edge table and cluster assignment of one document.

    node_attrs columns: x, y, r, g, b, stroke_width.
    edge_attrs columns: p1.x, p1.y, p2.x, p2.y (off-curve control points).
    edge_ctrl holds all four control points of each edge's curve.
    """

    node_attrs: np.ndarray
    edge_src: np.ndarray
    edge_dst: np.ndarray
    edge_attrs: np.ndarray
    edge_ctrl: np.ndarray
    cluster_of: np.ndarray
    cluster_boxes: np.ndarray
    diagonal: float

    @property
    def num_nodes(self) -> int:
        return len(self.node_attrs)

    @property
    def num_edges(self) -> int:
        return len(self.edge_src)

    @property
    def num_clusters(self) -> int:
        return len(self.cluster_boxes)

    @property
    def positions(self) -> np.ndarray:
        return self.node_attrs[:, :2]

    def cluster_members(self, k: int) -> np.ndarray:
        return np.nonzero(self.cluster_of == k)[0]

    def cluster_sizes(self) -> np.ndarray:
        return np.bincount(self.cluster_of, minlength=self.num_clusters)


def _diagonal(doc: VectorDocument) -> float:
    if doc.diagonal > 0:
        return doc.diagonal
    if not doc.curves:
        return 1.0
    pts = np.concatenate([c.points for c in doc.curves])
    d = float(np.hypot(*(pts.max(axis=0) - pts.min(axis=0))))
    return d if d > 0 else 1.0


def build_nodes_and_stroke_edges(doc: VectorDocument, merge_tol: float | None = None) -> DetectionGraph:
    """Nodes from deduplicated curve endpoints, one stroke edge per curve.

    Every node starts in its own cluster; call :func:`regional_clusters` next.
    Endpoints within ``merge_tol`` (default 1e-4 of the document diagonal)
    of an existing node reuse it. Color and width of a merged node are the
    mean over its incident curves.
    """
    diag = _diagonal(doc)
    tol = MERGE_FRAC * diag if merge_tol is None else merge_tol
    cell = tol if tol > 0 else 1.0
    grid: dict[tuple[int, int], list[int]] = {}
    positions: list[tuple[float, float]] = []
    incident: list[dict[int, tuple]] = []

    def node_for(p, curve_idx, style):
        cx, cy = int(np.floor(p[0] / cell)), int(np.floor(p[1] / cell))
        best, best_d = None, None
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for nid in grid.get((cx + dx, cy + dy), ()):
                    q = positions[nid]
                    d = np.hypot(p[0] - q[0], p[1] - q[1])
                    if d <= tol and (best_d is None or d < best_d):
                        best, best_d = nid, d
        if best is None:
            best = len(positions)
            positions.append((float(p[0]), float(p[1])))
            incident.append({})
            grid.setdefault((cx, cy), []).append(best)
        incident[best][curve_idx] = style
        return best

    src, dst, attrs, ctrl = [], [], [], []
    for ci, c in enumerate(doc.curves):
        style = (*c.color, c.stroke_width)
        a = node_for(c.p0, ci, style)
        b = node_for(c.p3, ci, style)
        src.append(a)
        dst.append(b)
        attrs.append((*c.p1, *c.p2))
        ctrl.append(c.points)

    n = len(positions)
    node_attrs = np.zeros((n, 6))
    if n:
        node_attrs[:, :2] = np.array(positions)
        for i, inc in enumerate(incident):
            node_attrs[i, 2:] = np.mean(np.array(list(inc.values())), axis=0)
    return DetectionGraph(
        node_attrs=node_attrs,
        edge_src=np.array(src, dtype=np.int64),
        edge_dst=np.array(dst, dtype=np.int64),
        edge_attrs=np.array(attrs, dtype=float).reshape(-1, 4),
        edge_ctrl=np.array(ctrl, dtype=float).reshape(-1, 4, 2),
        cluster_of=np.arange(n, dtype=np.int64),
        cluster_boxes=np.hstack([node_attrs[:, :2], node_attrs[:, :2]]) if n else np.zeros((0, 4)),
        diagonal=diag,
    )


def _group_boxes(labels: np.ndarray, k: int, graph: DetectionGraph) -> np.ndarray:
    boxes = np.empty((k, 4))
    boxes[:, :2] = np.inf
    boxes[:, 2:] = -np.inf
    pos = graph.positions
    np.minimum.at(boxes[:, 0], labels, pos[:, 0])
    np.minimum.at(boxes[:, 1], labels, pos[:, 1])
    np.maximum.at(boxes[:, 2], labels, pos[:, 0])
    np.maximum.at(boxes[:, 3], labels, pos[:, 1])
    if graph.num_edges:
        el = labels[graph.edge_src]
        cmin = graph.edge_ctrl.min(axis=1)
        cmax = graph.edge_ctrl.max(axis=1)
        np.minimum.at(boxes[:, 0], el, cmin[:, 0])
        np.minimum.at(boxes[:, 1], el, cmin[:, 1])
        np.maximum.at(boxes[:, 2], el, cmax[:, 0])
        np.maximum.at(boxes[:, 3], el, cmax[:, 1])
    return boxes


def _canonical_labels(labels: np.ndarray) -> tuple[np.ndarray, int]:
    """Relabel so cluster ids follow the smallest node id they contain."""
    _, first = np.unique(labels, return_index=True)
    order = np.argsort(first, kind="stable")
    remap = np.empty(len(order), dtype=np.int64)
    remap[order] = np.arange(len(order))
    uniq = np.unique(labels)
    lookup = dict(zip(uniq.tolist(), remap.tolist()))
    return np.array([lookup[v] for v in labels.tolist()], dtype=np.int64), len(order)


def stroke_components(graph: DetectionGraph) -> tuple[int, np.ndarray]:
    n = graph.num_nodes
    adj = coo_matrix((np.ones(graph.num_edges), (graph.edge_src, graph.edge_dst)), shape=(n, n))
    return connected_components(adj, directed=False)


def regional_clusters(graph: DetectionGraph, expand_len: float | None = None) -> DetectionGraph:
    """Merge stroke-connected components whose expanded boxes touch or overlap.

    ``expand_len`` defaults to 2% of the document diagonal. Rectangles are
    closed, so boxes that only touch are merged. Merging is transitive.
    """
    if graph.num_nodes == 0:
        return graph
    if expand_len is None:
        expand_len = EXPAND_FRAC * graph.diagonal
    k, comp = stroke_components(graph)
    boxes = _group_boxes(comp, k, graph)
    ex = boxes + np.array([-expand_len, -expand_len, expand_len, expand_len])
    overlap = (
        (ex[:, None, 0] <= ex[None, :, 2])
        & (ex[None, :, 0] <= ex[:, None, 2])
        & (ex[:, None, 1] <= ex[None, :, 3])
        & (ex[None, :, 1] <= ex[:, None, 3])
    )
    _, merged = connected_components(coo_matrix(overlap), directed=False)
    labels, m = _canonical_labels(merged[comp])
    return replace(graph, cluster_of=labels, cluster_boxes=_group_boxes(labels, m, graph))


def build_graph(doc: VectorDocument, expand_len: float | None = None, merge_tol: float | None = None) -> DetectionGraph:
    return regional_clusters(build_nodes_and_stroke_edges(doc, merge_tol), expand_len)


def position_degree(graph: DetectionGraph, node_id: int) -> int:
    if not 0 <= node_id < graph.num_nodes:
        raise KeyError(f"unknown node id {node_id}")
    return int(np.count_nonzero(graph.cluster_of == graph.cluster_of[node_id])) - 1


def position_edge_count(graph: DetectionGraph) -> int:
    sizes = graph.cluster_sizes()
    return int((sizes * (sizes - 1) // 2).sum())


def check_invariants(graph: DetectionGraph) -> None:
    assert graph.node_attrs.shape[1] == 6
    assert graph.edge_attrs.shape[1] == 4
    assert np.array_equal(graph.cluster_of[graph.edge_src], graph.cluster_of[graph.edge_dst])
    assert graph.cluster_of.min(initial=0) >= 0
    if graph.num_nodes:
        assert set(np.unique(graph.cluster_of).tolist()) == set(range(graph.num_clusters))


def dump_graph(graph: DetectionGraph) -> str:
    """Plain-text node/edge/cluster tables, for debugging only."""
    out = io.StringIO()
    out.write(f"# nodes {graph.num_nodes}\n# id x y r g b width cluster\n")
    for i, row in enumerate(graph.node_attrs):
        out.write(f"node {i} " + " ".join(f"{v:.6g}" for v in row) + f" {graph.cluster_of[i]}\n")
    out.write(f"# edges {graph.num_edges}\n# id src dst p1x p1y p2x p2y\n")
    for e in range(graph.num_edges):
        attrs = " ".join(f"{v:.6g}" for v in graph.edge_attrs[e])
        out.write(f"edge {e} {graph.edge_src[e]} {graph.edge_dst[e]} {attrs}\n")
    out.write(f"# clusters {graph.num_clusters}\n# id size x_min y_min x_max y_max\n")
    sizes = graph.cluster_sizes()
    for k in range(graph.num_clusters):
        box = " ".join(f"{v:.6g}" for v in graph.cluster_boxes[k])
        out.write(f"cluster {k} {sizes[k]} {box}\n")
    return out.getvalue()
