"""Relational graph attention over typed ensemble graphs.

A layer computes, per head k and node i,

    score(j -> i) = act(a . W [h_i ; h_j] + a_e . e_type(j -> i))
    alpha_i       = softmax of score over the in-edges of i (self-loop included)
    h'_i[k]       = relu(sum_j alpha_ij W^k h_j)

and concatenates the K heads back to width d_h. With edge types disabled
the a_e term disappears and parallel edges of different type collapse into
one, which is a plain GAT.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from depfuse.errors import InvalidConfig, PositionOverflow
from depfuse.graph import EnsembleGraph
from depfuse.nn import init
from depfuse.nn.tensor import (
    Tensor,
    add,
    as_tensor,
    concat,
    dropout,
    embedding_lookup,
    leaky_relu,
    masked_softmax,
    matmul,
    neighbor_sum,
    relu,
)


@dataclass
class RGATConfig:
    input_dim: int
    num_layers: int = 2
    num_heads: int = 4
    hidden_dim: int = 64
    edge_type_dim: int | None = None  # defaults to hidden_dim
    max_position: int = 128
    use_edge_types: bool = True
    use_positions: bool = True
    attention_activation: str = "relu"  # or "leaky_relu"
    leaky_slope: float = 0.2
    attn_dropout: float = 0.3
    hidden_dropout: float = 0.3

    def __post_init__(self):
        if self.edge_type_dim is None:
            self.edge_type_dim = self.hidden_dim
        for name in ("input_dim", "num_layers", "num_heads", "hidden_dim", "edge_type_dim", "max_position"):
            if getattr(self, name) < 1:
                raise InvalidConfig(f"{name} must be >= 1")
        if self.hidden_dim % self.num_heads:
            raise InvalidConfig(f"hidden_dim {self.hidden_dim} not divisible by num_heads {self.num_heads}")
        if self.attention_activation not in ("relu", "leaky_relu"):
            raise InvalidConfig(f"unknown attention activation {self.attention_activation!r}")

    @property
    def per_head_dim(self) -> int:
        return self.hidden_dim // self.num_heads

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class GraphBatch:
    """One or more sentences laid out as a block-diagonal graph.

    ``mask[dst, c, src]`` marks an edge src -> dst in channel c (three
    typed channels, or one when types are ignored). ``positions`` are the
    1-based word positions within each sentence.
    """

    features: np.ndarray
    mask: np.ndarray
    positions: np.ndarray
    offsets: np.ndarray  # start row of each sentence; length B + 1

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @classmethod
    def from_parts(cls, parts):
        """Build from (features n x d_in, mask n x C x n) pairs."""
        sizes = [f.shape[0] for f, _ in parts]
        total = sum(sizes)
        chans = {m.shape[1] for _, m in parts}
        if len(chans) != 1:
            raise ValueError("mixed typed/untyped masks in one batch")
        c = chans.pop()
        mask = np.zeros((total, c, total), dtype=bool)
        offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        for (_, m), lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            mask[lo:hi, :, lo:hi] = m
        feats = np.concatenate([np.asarray(f, dtype=np.float64) for f, _ in parts], axis=0)
        positions = np.concatenate([np.arange(1, s + 1) for s in sizes])
        return cls(feats, mask, positions, offsets)

    @classmethod
    def single(cls, features, graph: EnsembleGraph, typed: bool = True, positions=None):
        batch = cls.from_parts([(np.asarray(features, dtype=np.float64), graph_mask(graph, typed))])
        if positions is not None:
            batch.positions = np.asarray(positions, dtype=np.int64)
        return batch


def graph_mask(graph: EnsembleGraph, typed: bool = True) -> np.ndarray:
    """(n, C, n) boolean in-edge mask indexed [dst, channel, src]."""
    return np.ascontiguousarray(graph.type_mask(typed).transpose(1, 0, 2))


class RGATEncoder:
    def __init__(self, config: RGATConfig, rng: np.random.Generator, prefix: str = "enc"):
        self.config = config
        self.prefix = prefix
        cfg = config
        d_h, d_b = cfg.hidden_dim, cfg.per_head_dim
        self.position_table = init.small_normal(rng, (cfg.max_position, cfg.input_dim), f"{prefix}.position_table")
        self.in_weight = init.glorot(rng, (d_h, cfg.input_dim), f"{prefix}.input_projection.weight")
        self.in_bias = init.zeros((d_h,), f"{prefix}.input_projection.bias")
        self.layers = []
        for layer in range(cfg.num_layers):
            lp = f"{prefix}.layer{layer}"
            heads = []
            for k in range(cfg.num_heads):
                hp = f"{lp}.head{k}"
                head = {
                    "value": init.glorot(rng, (d_b, d_h), f"{hp}.value"),
                    "pair": init.glorot(rng, (d_h, 2 * d_h), f"{hp}.pair"),
                    # attention vectors need a nonzero start: relu(0) has no gradient
                    "att": init.glorot(rng, (d_h,), f"{hp}.att"),
                }
                if cfg.use_edge_types:
                    head["edge_att"] = init.glorot(rng, (cfg.edge_type_dim,), f"{hp}.edge_att")
                heads.append(head)
            entry = {"heads": heads}
            if cfg.use_edge_types:
                entry["edge_types"] = init.small_normal(rng, (3, cfg.edge_type_dim), f"{lp}.edge_types")
            self.layers.append(entry)

    def parameters(self):
        out = []
        if self.config.use_positions:
            out.append(self.position_table)
        out += [self.in_weight, self.in_bias]
        for entry in self.layers:
            if "edge_types" in entry:
                out.append(entry["edge_types"])
            for head in entry["heads"]:
                out += list(head.values())
        return out

    @property
    def typed(self) -> bool:
        return self.config.use_edge_types

    # ---------------------------------------------------------------- pieces

    def add_position_embeddings(self, x, positions) -> Tensor:
        x = as_tensor(x)
        if not self.config.use_positions:
            return x
        positions = np.asarray(positions, dtype=np.int64)
        if positions.size and positions.max() > self.config.max_position:
            raise PositionOverflow(
                f"position {positions.max()} exceeds max_position {self.config.max_position}"
            )
        return add(x, embedding_lookup(self.position_table, positions - 1))

    def project_input(self, x) -> Tensor:
        return add(matmul(x, self.in_weight.T), self.in_bias)

    def attention_scores(self, h, mask, layer: int, head: int) -> Tensor:
        """Normalized in-edge attention, shape (n, C, n) indexed [dst, channel, src]."""
        h = as_tensor(h)
        cfg = self.config
        p = self.layers[layer]["heads"][head]
        n, c = mask.shape[0], mask.shape[1]
        d_h = cfg.hidden_dim
        u = matmul(p["att"], p["pair"])  # a W, length 2 d_h
        s_dst = matmul(h, u[:d_h]).reshape(n, 1, 1)
        t_src = matmul(h, u[d_h:]).reshape(1, 1, n)
        logits = add(s_dst, t_src)
        if cfg.use_edge_types:
            table = self.layers[layer]["edge_types"]
            per_type = matmul(table, p["edge_att"]).reshape(1, 3, 1)
            if c != 3:
                raise ValueError("typed encoder needs a 3-channel mask")
            logits = add(logits, per_type)
        else:
            logits = add(logits, np.zeros((1, c, 1)))
        if cfg.attention_activation == "relu":
            logits = relu(logits)
        else:
            logits = leaky_relu(logits, cfg.leaky_slope)
        alpha = masked_softmax(logits.reshape(n, c * n), mask.reshape(n, c * n))
        return alpha.reshape(n, c, n)

    def layer_forward(self, h, mask, layer: int, training: bool = False, rng=None) -> Tensor:
        cfg = self.config
        outs = []
        for k, p in enumerate(self.layers[layer]["heads"]):
            alpha = self.attention_scores(h, mask, layer, k)
            alpha = dropout(alpha, cfg.attn_dropout, training, rng)
            weights = alpha.sum(axis=1)  # merge parallel typed edges
            values = matmul(h, p["value"].T)
            outs.append(relu(neighbor_sum(weights, values)))
        out = outs[0] if len(outs) == 1 else concat(outs, axis=1)
        return dropout(out, cfg.hidden_dropout, training, rng)

    def encode(self, batch: GraphBatch, training: bool = False, rng=None) -> Tensor:
        expected = 3 if self.typed else 1
        mask = batch.mask
        if mask.shape[1] != expected:
            mask = mask.any(axis=1, keepdims=True) if expected == 1 else mask
            if mask.shape[1] != expected:
                raise ValueError("typed encoder got an untyped mask")
        x = self.add_position_embeddings(batch.features, batch.positions)
        h = self.project_input(x)
        for layer in range(self.config.num_layers):
            h = self.layer_forward(h, mask, layer, training, rng)
        return h
