import itertools
from math import comb

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vgdet import synth
from vgdet.document import VectorDocument
from vgdet.geometry import CubicBezier, line_to_cubic
from vgdet.graph import build_graph
from vgdet.proposals import cluster_candidates, generate_proposals, grid_rectangles


def graph_of(curves, size=10.0, expand=100.0):
    return build_graph(VectorDocument(curves=tuple(curves), width=size, height=size), expand_len=expand)


def brute_candidates(graph, cluster_id, k):
    """Every grid-vertex pair with positive extent, closed containment, no tolerance."""
    box = graph.cluster_boxes[cluster_id]
    xs = [box[0] + (box[2] - box[0]) * i / k for i in range(k)] + [box[2]]
    ys = [box[1] + (box[3] - box[1]) * i / k for i in range(k)] + [box[3]]
    members = graph.cluster_members(cluster_id).tolist()
    found = set()
    for xa, xb in itertools.combinations(range(k + 1), 2):
        for ya, yb in itertools.combinations(range(k + 1), 2):
            inside = frozenset(
                n for n in members
                if xs[xa] <= graph.positions[n, 0] <= xs[xb] and ys[ya] <= graph.positions[n, 1] <= ys[yb]
            )
            if inside:
                found.add(inside)
    return found


def brute_box(graph, nodes):
    pts = [graph.positions[n] for n in nodes]
    for e in range(graph.num_edges):
        if graph.edge_src[e] in nodes and graph.edge_dst[e] in nodes:
            pts.extend(graph.edge_ctrl[e].reshape(-1, 2))
    pts = np.array(pts)
    return np.concatenate([pts.min(axis=0), pts.max(axis=0)])


@pytest.mark.parametrize("k", [1, 2, 3, 4, 10])
def test_grid_rectangle_count(k):
    rects = grid_rectangles((0, 0, 1, 1), k)
    assert len(rects) == comb(k + 1, 2) ** 2
    assert len({tuple(r) for r in rects}) == len(rects)
    assert (rects[:, 2] > rects[:, 0]).all() and (rects[:, 3] > rects[:, 1]).all()


def test_3025_at_ten_strides():
    assert len(grid_rectangles((3, 4, 50, 9), 10)) == 3025


coord = st.integers(0, 8).map(lambda v: v / 2)  # lands exactly on grid lines often


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(coord, coord, coord, coord), min_size=1, max_size=4), st.integers(1, 4))
def test_candidates_match_exhaustive_enumeration(segs, k):
    curves = [line_to_cubic((a, b), (c, d)) for a, b, c, d in segs if (a, b) != (c, d)]
    if not curves:
        return
    g = graph_of(curves)
    assert g.num_nodes <= 8
    props = generate_proposals(g, k, max_size_frac=10.0)
    for c in range(g.num_clusters):
        fast = {frozenset(p.node_ids.tolist()) for p in props if p.cluster_id == c}
        assert fast == brute_candidates(g, c, k)
        assert len(cluster_candidates(g, c, k)) == len(fast)
    for p in props:
        np.testing.assert_array_equal(p.box, brute_box(g, set(p.node_ids.tolist())))


def test_random_float_clusters_match_enumeration():
    rng = np.random.default_rng(0)
    for _ in range(40):
        n = int(rng.integers(1, 5))
        curves = [CubicBezier(*[tuple(p) for p in rng.uniform(0, 10, (4, 2))]) for _ in range(n)]
        g = graph_of(curves)
        k = int(rng.integers(1, 5))
        props = generate_proposals(g, k, max_size_frac=10.0)
        assert {frozenset(p.node_ids.tolist()) for p in props} == brute_candidates(g, 0, k)


def test_single_node_cluster_gives_one_proposal():
    loop = CubicBezier((1, 1), (2, 2), (0, 2), (1, 1))
    g = graph_of([loop])
    for k in (1, 3, 10):
        assert len(generate_proposals(g, k, max_size_frac=10.0)) == 1


def test_size_filter():
    g = graph_of([line_to_cubic((0, 0), (10, 10))])
    assert len(generate_proposals(g, 2, max_size_frac=1.0)) == 3
    # the full diagonal is filtered at half the document diagonal
    assert all(np.hypot(*(p.box[2:] - p.box[:2])) <= 0.5 * g.diagonal for p in generate_proposals(g, 2))


def test_refinement_never_loses_proposals():
    docs, names = synth.generate(4, 4, seed=2)
    for d in docs:
        g = build_graph(d.document(names).split())
        for k in (1, 2, 3, 5):
            coarse = {frozenset(p.node_ids.tolist()) for p in generate_proposals(g, k, max_size_frac=10.0)}
            fine = {frozenset(p.node_ids.tolist()) for p in generate_proposals(g, 2 * k, max_size_frac=10.0)}
            assert coarse <= fine


def test_strides_must_be_positive():
    g = graph_of([line_to_cubic((0, 0), (1, 1))])
    with pytest.raises(ValueError):
        generate_proposals(g, 0)
