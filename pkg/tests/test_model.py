import numpy as np
import pytest

from vgdet import autograd as ag
from vgdet.autograd import Tensor
from vgdet.gradcheck import check_gradients
from vgdet.model import DualStreamGNN, GraphBatch, ModelConfig, cluster_pairs, pack


def random_graph(rng, n=6, e=7, clusters=2, loops=True):
    src = rng.integers(0, n, e)
    dst = rng.integers(0, n, e)
    if loops:
        dst[0] = src[0]
    cluster_of = np.arange(n) % clusters
    # stroke edges must stay within a cluster
    dst = np.where(cluster_of[dst] == cluster_of[src], dst, src)
    return GraphBatch(
        x=rng.normal(size=(n, 6)),
        edge_src=src.astype(np.int64),
        edge_dst=dst.astype(np.int64),
        edge_attrs=rng.normal(size=(e, 4)),
        cluster_of=cluster_of.astype(np.int64),
        regions=[np.array([0, 1]), np.array([n - 1]), np.arange(n), np.array([1, n - 2])],
    )


def randomize_bn(model, rng):
    for st in model.params.bn.values():
        st.running_mean = rng.normal(size=st.running_mean.shape)
        st.running_var = rng.uniform(0.5, 2.0, size=st.running_var.shape)
    for name, t in model.params.params.items():
        if name.endswith(".gamma") or name.endswith(".beta"):
            t.data = rng.normal(size=t.data.shape)


def small_model(**kw):
    cfg = dict(num_classes=3, num_layers=2, hidden_dim=5, mlp_dims=(7, 6), seed=3)
    cfg.update(kw)
    return DualStreamGNN(ModelConfig(**cfg))


def brute_stroke(model, h, batch, t):
    """Per-node loop over incident edges, no sparse algebra."""
    P = model.params
    W_s, b_s = P[f"stroke.{t}.self.W"].data, P[f"stroke.{t}.self.b"].data[0]
    W_m, b_m = P[f"stroke.{t}.msg.W"].data, P[f"stroke.{t}.msg.b"].data[0]
    g, be = P[f"stroke.{t}.msg.bn.gamma"].data[0], P[f"stroke.{t}.msg.bn.beta"].data[0]
    st = P.bn[f"stroke.{t}.msg.bn"]
    out = np.zeros((len(h), W_s.shape[1]))
    for i in range(len(h)):
        msgs = []
        for e, (a, b) in enumerate(zip(batch.edge_src, batch.edge_dst)):
            if a == i or b == i:
                j = b if a == i else a
                v = np.concatenate([h[i], h[j] - h[i], batch.edge_attrs[e]]) @ W_m + b_m
                v = np.maximum(v, 0)
                msgs.append((v - st.running_mean[0]) / np.sqrt(st.running_var[0] + st.eps) * g + be)
        out[i] = h[i] @ W_s + b_s
        if msgs:
            out[i] += np.mean(msgs, axis=0)
    return out


def test_stroke_layer_matches_brute_force():
    rng = np.random.default_rng(0)
    for trial in range(5):
        batch = random_graph(rng, n=int(rng.integers(2, 7)), e=int(rng.integers(1, 8)), clusters=1)
        model = small_model(hidden_dim=4)
        randomize_bn(model, rng)
        h = Tensor(batch.x)
        for t in range(2):
            fast = model.stroke_layer(h, batch, t, training=False).data
            slow = brute_stroke(model, h.data, batch, t)
            assert np.abs(fast - slow).max() < 1e-12
            h = Tensor(fast)


def test_isolated_node_gets_self_term_only():
    batch = GraphBatch(np.eye(3, 6), np.array([0]), np.array([1]), np.ones((1, 4)), np.zeros(3, np.int64))
    model = small_model()
    out = model.stroke_layer(Tensor(batch.x), batch, 0, training=False).data
    P = model.params
    np.testing.assert_allclose(out[2], batch.x[2] @ P["stroke.0.self.W"].data + P["stroke.0.self.b"].data[0])


def brute_position(model, z, cluster_of, t, training=False):
    P = model.params
    W, b = P[f"pos.{t}.W"].data, P[f"pos.{t}.b"].data[0]
    g, be = P[f"pos.{t}.bn.gamma"].data[0], P[f"pos.{t}.bn.beta"].data[0]
    st = P.bn[f"pos.{t}.bn"]
    u = np.maximum(z @ W + b, 0)
    mu, var = (u.mean(axis=0), u.var(axis=0)) if training else (st.running_mean[0], st.running_var[0])
    u = (u - mu) / np.sqrt(var + st.eps) * g + be
    out = np.zeros_like(u)
    for i in range(len(z)):
        members = [j for j in range(len(z)) if cluster_of[j] == cluster_of[i]]
        out[i] = sum(u[j] for j in members) / len(members)
    return out


@pytest.mark.parametrize("training", [False, True])
def test_pooled_position_matches_naive(training):
    rng = np.random.default_rng(1)
    model = small_model()
    randomize_bn(model, rng)
    z = rng.normal(size=(9, 6))
    cluster_of = np.array([0, 2, 1, 0, 2, 2, 1, 0, 3])
    fast = model.position_layer(Tensor(z), cluster_of, 0, training, last_layer=True).data
    assert np.abs(fast - brute_position(model, z, cluster_of, 0, training)).max() < 1e-10


def test_position_difference_variant_matches_naive():
    rng = np.random.default_rng(2)
    model = small_model(position_with_difference=True)
    randomize_bn(model, rng)
    z = rng.normal(size=(5, 6))
    cluster_of = np.array([0, 1, 0, 0, 1])
    P = model.params
    W, b = P["pos.0.W"].data, P["pos.0.b"].data[0]
    g, be = P["pos.0.bn.gamma"].data[0], P["pos.0.bn.beta"].data[0]
    st = P.bn["pos.0.bn"]
    want = np.zeros((5, W.shape[1]))
    for i in range(5):
        rows = []
        for j in range(5):
            if cluster_of[j] == cluster_of[i]:
                v = np.maximum(np.concatenate([z[i], z[j] - z[i]]) @ W + b, 0)
                rows.append((v - st.running_mean[0]) / np.sqrt(st.running_var[0] + st.eps) * g + be)
        want[i] = np.mean(rows, axis=0)
    got = model.position_layer(Tensor(z), cluster_of, 0, False, last_layer=True).data
    assert np.abs(got - want).max() < 1e-10


def test_cluster_pairs():
    recv, send = cluster_pairs(np.array([1, 0, 1]))
    assert sorted(zip(recv.tolist(), send.tolist())) == [(0, 0), (0, 2), (1, 1), (2, 0), (2, 2)]


def test_default_dimensions():
    model = DualStreamGNN(ModelConfig(num_classes=4))
    assert model.config.fused_dim == 268
    assert model.params["head.0.W"].shape == (268, 512)
    assert model.params["head.2.W"].shape == (256, 5)
    assert DualStreamGNN(ModelConfig(num_classes=4, dedupe_input_features=True)).config.fused_dim == 262
    # stroke 1,664 + 12,800, position 576 + 4,288, head 137,728 + 131,328 + 1,285
    assert model.params.num_parameters() == 289_669


def test_permutation_invariance():
    rng = np.random.default_rng(5)
    batch = random_graph(rng, n=6, e=8, clusters=2)
    model = small_model()
    randomize_bn(model, rng)
    base = model.forward(batch).data
    perm = rng.permutation(6)
    inv = np.argsort(perm)  # new id of old node k is inv[k]
    permuted = GraphBatch(
        x=batch.x[perm],
        edge_src=inv[batch.edge_src],
        edge_dst=inv[batch.edge_dst],
        edge_attrs=batch.edge_attrs,
        cluster_of=batch.cluster_of[perm],
        regions=[rng.permutation(inv[r]) for r in batch.regions],
    )
    assert np.abs(model.forward(permuted).data - base).max() < 1e-10
    # edge order and edge direction do not matter either
    order = rng.permutation(len(batch.edge_src))
    flipped = GraphBatch(batch.x, batch.edge_dst[order], batch.edge_src[order], batch.edge_attrs[order],
                         batch.cluster_of, batch.regions)
    assert np.abs(model.forward(flipped).data - base).max() < 1e-10


def test_pack_keeps_documents_independent():
    rng = np.random.default_rng(7)
    a, b = random_graph(rng), random_graph(rng, n=4, e=3)
    model = small_model()
    randomize_bn(model, rng)
    packed, spans = pack([a, b])
    out = model.forward(packed).data
    np.testing.assert_allclose(out[spans[0]], model.forward(a).data, atol=1e-12)
    np.testing.assert_allclose(out[spans[1]], model.forward(b).data, atol=1e-12)


def test_zero_head_gives_uniform_loss():
    rng = np.random.default_rng(8)
    batch = random_graph(rng)
    model = small_model()
    for i in range(model.num_head_layers):
        model.params[f"head.{i}.W"].data[:] = 0
        model.params[f"head.{i}.b"].data[:] = 0
    loss = ag.softmax_cross_entropy(model.forward(batch, training=True), [0, 1, 3, 2])
    assert loss.data[0, 0] == pytest.approx(np.log(4), abs=1e-12)


@pytest.mark.parametrize(
    "flags",
    [{}, {"position_with_difference": True}, {"early_position_aggregation": True}, {"no_edge_attrs": True},
     {"dedupe_input_features": True}],
)
def test_end_to_end_gradients(flags):
    rng = np.random.default_rng(9)
    batch = random_graph(rng, n=5, e=6, clusters=2)
    model = small_model(hidden_dim=3, mlp_dims=(4,), **flags)
    x = Tensor(batch.x.copy(), requires_grad=True)
    labels = np.array([0, 3, 1, 2])
    tensors = [x] + list(model.params.params.values())
    err = check_gradients(lambda: ag.softmax_cross_entropy(model.forward(batch, True, x), labels), tensors)
    assert err < 1e-4


def test_ablations_change_the_computation():
    rng = np.random.default_rng(10)
    batch = random_graph(rng)
    outs = {}
    for name, kw in {"full": {}, "no_stroke": {"no_stroke_edges": True}, "no_pos": {"no_position_edges": True},
                     "no_attr": {"no_edge_attrs": True}}.items():
        m = small_model(**kw)
        outs[name] = m.forward(batch).data
    for k in ("no_stroke", "no_pos", "no_attr"):
        assert not np.allclose(outs[k], outs["full"])


def test_save_load_round_trip(tmp_path):
    rng = np.random.default_rng(11)
    batch = random_graph(rng)
    model = small_model()
    randomize_bn(model, rng)
    model.save(tmp_path / "m.ckpt", extra={"epoch": 1})
    loaded, meta = DualStreamGNN.load(tmp_path / "m.ckpt")
    assert meta["extra"]["epoch"] == 1
    assert np.array_equal(loaded.forward(batch).data, model.forward(batch).data)
