"""Dual-stream graph network over stroke-wise and position-wise edges, region
fusion and the MLP classifier head."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp

from . import autograd as ag
from .autograd import Tensor

NODE_DIM = 6
EDGE_DIM = 4


@dataclass
class ModelConfig:
    num_classes: int = 2
    num_layers: int = 2
    hidden_dim: int = 64
    mlp_dims: tuple[int, ...] = (512, 256)
    no_stroke_edges: bool = False
    no_position_edges: bool = False
    no_edge_attrs: bool = False
    early_position_aggregation: bool = False
    position_with_difference: bool = False
    dedupe_input_features: bool = False
    seed: int = 0

    def __post_init__(self):
        self.mlp_dims = tuple(int(d) for d in self.mlp_dims)
        if self.num_layers < 1 or self.hidden_dim < 1 or self.num_classes < 1:
            raise ValueError(f"invalid model config {self}")

    @property
    def fused_dim(self) -> int:
        per_stream = NODE_DIM + self.num_layers * self.hidden_dim
        return 2 * per_stream - (NODE_DIM if self.dedupe_input_features else 0)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mlp_dims"] = list(self.mlp_dims)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> ModelConfig:
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})


@dataclass
class GraphBatch:
    """Model inputs for one or more documents packed block-diagonally.

    ``regions`` lists the node ids of each proposal; ids index the packed
    node table.
    """

    x: np.ndarray
    edge_src: np.ndarray
    edge_dst: np.ndarray
    edge_attrs: np.ndarray
    cluster_of: np.ndarray
    regions: list[np.ndarray] = field(default_factory=list)

    @property
    def num_nodes(self) -> int:
        return len(self.x)

    @property
    def num_clusters(self) -> int:
        return int(self.cluster_of.max()) + 1 if len(self.cluster_of) else 0

    def stroke_messages(self):
        """Receiver, sender and edge attributes of every directed message.

        Each undirected edge sends one message each way; a self-loop sends one.
        """
        loop = self.edge_src == self.edge_dst
        recv = np.concatenate([self.edge_src, self.edge_dst[~loop]])
        send = np.concatenate([self.edge_dst, self.edge_src[~loop]])
        attrs = np.concatenate([self.edge_attrs, self.edge_attrs[~loop]])
        return recv, send, attrs


def pack(batches: list[GraphBatch]) -> tuple[GraphBatch, list[slice]]:
    """Concatenate graphs, offsetting node and cluster ids. Returns the packed
    batch and, per input, the slice of its regions in the packed region list."""
    xs, src, dst, ea, cl, regions, spans = [], [], [], [], [], [], []
    n_off = c_off = r_off = 0
    for b in batches:
        xs.append(b.x)
        src.append(b.edge_src + n_off)
        dst.append(b.edge_dst + n_off)
        ea.append(b.edge_attrs)
        cl.append(b.cluster_of + c_off)
        regions.extend(r + n_off for r in b.regions)
        spans.append(slice(r_off, r_off + len(b.regions)))
        n_off += b.num_nodes
        c_off += b.num_clusters
        r_off += len(b.regions)
    packed = GraphBatch(
        x=np.concatenate(xs) if xs else np.zeros((0, NODE_DIM)),
        edge_src=np.concatenate(src).astype(np.int64) if src else np.zeros(0, np.int64),
        edge_dst=np.concatenate(dst).astype(np.int64) if dst else np.zeros(0, np.int64),
        edge_attrs=np.concatenate(ea) if ea else np.zeros((0, EDGE_DIM)),
        cluster_of=np.concatenate(cl).astype(np.int64) if cl else np.zeros(0, np.int64),
        regions=regions,
    )
    return packed, spans


def _receiver_mean(recv: np.ndarray, num_nodes: int) -> sp.csr_matrix:
    """(nodes x messages) averaging matrix; nodes without messages get a zero row."""
    deg = np.bincount(recv, minlength=num_nodes).astype(float)
    vals = 1.0 / deg[recv]
    return sp.csr_matrix((vals, (recv, np.arange(len(recv)))), shape=(num_nodes, len(recv)))


class DualStreamGNN:
    """Parameters plus forward pass. ``training`` selects batch-norm mode."""

    def __init__(self, config: ModelConfig):
        self.config = config
        self.params = ag.ParamSet()
        rng = np.random.default_rng(config.seed)
        p = self.params
        d_in = NODE_DIM
        H = config.hidden_dim
        for t in range(config.num_layers):
            self._linear(rng, f"stroke.{t}.self", d_in, H)
            self._linear(rng, f"stroke.{t}.msg", 2 * d_in + EDGE_DIM, H)
            p.add_bn(f"stroke.{t}.msg.bn", H)
            pos_in = 2 * d_in if config.position_with_difference else d_in
            self._linear(rng, f"pos.{t}", pos_in, H)
            p.add_bn(f"pos.{t}.bn", H)
            d_in = H
        dims = [config.fused_dim, *config.mlp_dims, config.num_classes + 1]
        for i, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
            self._linear(rng, f"head.{i}", a, b)
        self.num_head_layers = len(dims) - 1

    def _linear(self, rng, name, d_in, d_out):
        self.params.add(f"{name}.W", ag.glorot_uniform(rng, d_in, d_out))
        self.params.add(f"{name}.b", np.zeros((1, d_out)))

    def _lin(self, x: Tensor, name: str) -> Tensor:
        return ag.linear(x, self.params[f"{name}.W"], self.params[f"{name}.b"])

    def _block(self, x: Tensor, name: str, training: bool) -> Tensor:
        """Linear, ReLU, batch norm."""
        bn = f"{name}.bn"
        y = ag.relu(self._lin(x, name))
        return ag.batch_norm(y, self.params[f"{bn}.gamma"], self.params[f"{bn}.beta"], self.params.bn[bn], training)

    def stroke_layer(self, h: Tensor, batch: GraphBatch, t: int, training: bool) -> Tensor:
        out = self._lin(h, f"stroke.{t}.self")
        if self.config.no_stroke_edges or len(batch.edge_src) == 0:
            return out
        recv, send, attrs = batch.stroke_messages()
        if self.config.no_edge_attrs:
            attrs = np.zeros_like(attrs)
        hi = ag.gather_rows(h, recv)
        hj = ag.gather_rows(h, send)
        msg_in = ag.concat([hi, ag.sub(hj, hi), Tensor(attrs)])
        msg = self._block(msg_in, f"stroke.{t}.msg", training)
        agg = ag.sparse_rows(_receiver_mean(recv, batch.num_nodes), msg)
        return ag.add(out, agg)

    def position_layer(self, z: Tensor, cluster_of: np.ndarray, t: int, training: bool, last_layer: bool) -> Tensor:
        aggregate = last_layer or self.config.early_position_aggregation
        if self.config.position_with_difference:
            return self._position_layer_diff(z, cluster_of, t, training, aggregate)
        u = self._block(z, f"pos.{t}", training)
        if not aggregate:
            return u
        pooled = ag.segment_mean(u, cluster_of)
        return ag.gather_rows(pooled, cluster_of)

    def _position_layer_diff(self, z, cluster_of, t, training, aggregate):
        if not aggregate:
            zero = Tensor(np.zeros(z.shape))
            return self._block(ag.concat([z, zero]), f"pos.{t}", training)
        recv, send = cluster_pairs(cluster_of)
        zi = ag.gather_rows(z, recv)
        zj = ag.gather_rows(z, send)
        u = self._block(ag.concat([zi, ag.sub(zj, zi)]), f"pos.{t}", training)
        return ag.segment_mean(u, recv, len(cluster_of))

    def node_states(self, batch: GraphBatch, training: bool = False, x: Tensor | None = None):
        """Per-step stroke states h^0..h^T and position states z^0..z^T."""
        if x is None:
            x = Tensor(batch.x)
        cluster_of = batch.cluster_of
        if self.config.no_position_edges:
            cluster_of = np.arange(batch.num_nodes, dtype=np.int64)
        hs, zs = [x], [x]
        T = self.config.num_layers
        for t in range(T):
            hs.append(self.stroke_layer(hs[-1], batch, t, training))
            zs.append(self.position_layer(zs[-1], cluster_of, t, training, last_layer=t == T - 1))
        return hs, zs

    def fuse(self, hs, zs, regions) -> Tensor:
        """Region means of every per-step state, concatenated."""
        states = hs + (zs[1:] if self.config.dedupe_input_features else zs)
        S = ag.concat(states)
        A = ag.mean_matrix(list(regions), S.shape[0])
        return ag.sparse_rows(A, S)

    def classify(self, r: Tensor) -> Tensor:
        out = r
        for i in range(self.num_head_layers):
            out = self._lin(out, f"head.{i}")
            if i < self.num_head_layers - 1:
                out = ag.relu(out)
        return out

    def forward(self, batch: GraphBatch, training: bool = False, x: Tensor | None = None) -> Tensor:
        if not batch.regions:
            return Tensor(np.zeros((0, self.config.num_classes + 1)))
        hs, zs = self.node_states(batch, training, x)
        return self.classify(self.fuse(hs, zs, batch.regions))

    def predict_proba(self, batch: GraphBatch) -> np.ndarray:
        logits = self.forward(batch, training=False)
        return ag.softmax(logits.data) if logits.shape[0] else logits.data

    def save(self, path, extra: dict | None = None, run_config: dict | None = None):
        cfg = {"model": self.config.to_dict()}
        if run_config:
            cfg["run"] = run_config
        ag.save_checkpoint(path, self.params, cfg, extra)

    @classmethod
    def load(cls, path) -> tuple[DualStreamGNN, dict]:
        meta, arrays = ag.read_checkpoint(path)
        model = cls(ModelConfig.from_dict(meta["config"]["model"]))
        model.params.load_arrays(arrays, meta["step"])
        return model, meta


def cluster_pairs(cluster_of: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """All ordered (i, j) pairs in the same cluster, self pairs included."""
    recv, send = [], []
    order = np.argsort(cluster_of, kind="stable")
    bounds = np.flatnonzero(np.diff(cluster_of[order])) + 1
    for members in np.split(order, bounds):
        if len(members) == 0:
            continue
        recv.append(np.repeat(members, len(members)))
        send.append(np.tile(members, len(members)))
    if not recv:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    return np.concatenate(recv), np.concatenate(send)
