"""Grid-based proposal generation over regional clusters."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import DetectionGraph


@dataclass(frozen=True)
class Proposal:
    box: np.ndarray  # x_min, y_min, x_max, y_max
    node_ids: np.ndarray
    cluster_id: int


def grid_index_pairs(k: int) -> tuple[np.ndarray, np.ndarray]:
    """All (start, stop) grid-line index pairs with start < stop: C(k+1, 2) of them."""
    i, j = np.triu_indices(k + 1, 1)
    return i, j


def grid_rectangles(box, k: int) -> np.ndarray:
    """Every rectangle spanned by two grid vertices of a k x k mesh over ``box``.

    Returns an (C(k+1,2)^2, 4) array ordered by x-pair then y-pair.
    """
    xs = np.linspace(box[0], box[2], k + 1)
    ys = np.linspace(box[1], box[3], k + 1)
    i, j = grid_index_pairs(k)
    X = np.stack([xs[i], xs[j]], axis=1)
    Y = np.stack([ys[i], ys[j]], axis=1)
    xr = np.repeat(X, len(Y), axis=0)
    yr = np.tile(Y, (len(X), 1))
    return np.stack([xr[:, 0], yr[:, 0], xr[:, 1], yr[:, 1]], axis=1)


def _cell_range(coords, lines, tol):
    """Index of the last grid line <= c and the first grid line >= c."""
    lo = np.searchsorted(lines, coords + tol, side="right") - 1
    hi = np.searchsorted(lines, coords - tol, side="left")
    return np.clip(lo, 0, len(lines) - 1), np.clip(hi, 0, len(lines) - 1)


def region_box(graph: DetectionGraph, node_ids: np.ndarray, inside: np.ndarray | None = None) -> np.ndarray:
    """Minimum bounding rectangle of the nodes and of every curve whose two
    endpoints are both in ``node_ids``."""
    if inside is None:
        inside = np.zeros(graph.num_nodes, dtype=bool)
        inside[node_ids] = True
    pts = [graph.positions[node_ids]]
    full = inside[graph.edge_src] & inside[graph.edge_dst]
    if full.any():
        pts.append(graph.edge_ctrl[full].reshape(-1, 2))
    pts = np.concatenate(pts)
    return np.concatenate([pts.min(axis=0), pts.max(axis=0)])


def cluster_candidates(graph: DetectionGraph, cluster_id: int, k: int) -> list[np.ndarray]:
    """Distinct non-empty node sets cut out by the grid rectangles of one cluster."""
    members = graph.cluster_members(cluster_id)
    box = graph.cluster_boxes[cluster_id]
    xs = np.linspace(box[0], box[2], k + 1)
    ys = np.linspace(box[1], box[3], k + 1)
    tol = 1e-9 * max(graph.diagonal, 1e-12)
    pos = graph.positions[members]
    xlo, xhi = _cell_range(pos[:, 0], xs, tol)
    ylo, yhi = _cell_range(pos[:, 1], ys, tol)
    i, j = grid_index_pairs(k)
    in_x = (i[:, None] <= xlo[None, :]) & (j[:, None] >= xhi[None, :])
    in_y = (i[:, None] <= ylo[None, :]) & (j[:, None] >= yhi[None, :])
    # x-pair-major ordering, matching grid_rectangles
    mask = (in_x[:, None, :] & in_y[None, :, :]).reshape(-1, len(members))
    mask = mask[mask.any(axis=1)]
    if len(mask) == 0:
        return []
    _, first = np.unique(np.packbits(mask, axis=1), axis=0, return_index=True)
    return [members[mask[r]] for r in np.sort(first)]


def generate_proposals(graph: DetectionGraph, strides: int = 10, max_size_frac: float = 0.5) -> list[Proposal]:
    """Proposals for every cluster of ``graph``.

    Each cluster's bounding rectangle is cut by a ``strides`` x ``strides``
    mesh; every pair of grid vertices spans a query rectangle and the nodes
    inside it (closed rectangle) form a candidate. Candidates are deduplicated
    by node set, boxed by :func:`region_box`, and dropped when the box diagonal
    exceeds ``max_size_frac`` of the document diagonal.
    """
    if strides < 1:
        raise ValueError("strides must be >= 1")
    out = []
    limit = max_size_frac * graph.diagonal
    inside = np.zeros(graph.num_nodes, dtype=bool)
    for c in range(graph.num_clusters):
        for nodes in cluster_candidates(graph, c, strides):
            inside[nodes] = True
            box = region_box(graph, nodes, inside)
            inside[nodes] = False
            if np.hypot(box[2] - box[0], box[3] - box[1]) > limit:
                continue
            out.append(Proposal(box, nodes, c))
    return out


def proposal_boxes(proposals) -> np.ndarray:
    if not proposals:
        return np.zeros((0, 4))
    return np.array([p.box for p in proposals])
