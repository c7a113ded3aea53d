"""Relational message-passing layers over a batched edge list.

Every layer takes node states ``h`` of shape (n, d), a :class:`Topology`
and a dict of parameter tensors, and returns new node states (n, d_out).
Weights are stored as (relations, d_in, d_out) so ``h @ W`` is the
row-vector form of ``W h``.
"""

from __future__ import annotations

from typing import Mapping

import numpy as np
import scipy.sparse as sp

from .. import diffcore as dc
from ..molgraph.features import FeaturizedGraph
from ..molgraph.graph import NUM_RELATIONS, SELF_LOOP_RELATION


class Topology:
    """Index bookkeeping for one (batched) featurized graph.

    Relational products are evaluated once per distinct (node, relation)
    pair and gathered to edges afterwards.
    """

    def __init__(self, fg: FeaturizedGraph, num_relations: int = NUM_RELATIONS):
        self.num_nodes = fg.num_nodes
        self.num_graphs = fg.num_graphs
        self.graph_segment = dc.SegmentIndex(fg.graph_segment, fg.num_graphs)
        self.src = fg.edge_index[:, 0]
        self.dst = fg.edge_index[:, 1]
        self.rel = fg.edge_relation
        self.num_relations = num_relations
        self.by_target = dc.SegmentIndex(self.dst, self.num_nodes)
        self.target_pairs, self.edge_target_pair = self._pairs(self.dst, self.rel)
        self.source_pairs, self.edge_source_pair = self._pairs(self.src, self.rel)
        # target-pair level views used by FiLMv2, whose messages are linear in the source
        n_t, n_s = len(self.target_pairs), len(self.source_pairs)
        et, ones = self.edge_target_pair.index, np.ones(self.src.size)
        self.pair_rows = dc.RelationalIndex(np.arange(n_t), self.target_pairs.relation, num_relations)
        self.pair_by_node = dc.SegmentIndex(self.target_pairs.node, self.num_nodes)
        self.sources_per_pair = dc.SparseOperator(
            sp.csr_matrix((ones, (et, self.src)), shape=(n_t, self.num_nodes)))
        self.source_pairs_per_pair = dc.SparseOperator(
            sp.csr_matrix((ones, (et, self.edge_source_pair.index)), shape=(n_t, n_s)))
        self.pair_edge_count = np.bincount(et, minlength=n_t).astype(np.float64)
        # neighbour edges excluding self-loops, used by GIN
        keep = self.rel != SELF_LOOP_RELATION
        self.nbr_by_target = dc.SegmentIndex(self.dst[keep], self.num_nodes)
        self.nbr_source_pairs, self.nbr_edge_source_pair = self._pairs(self.src[keep], self.rel[keep])

    def _pairs(self, node: np.ndarray, rel: np.ndarray):
        # relation-major keys so each relation's rows are contiguous
        key = rel * self.num_nodes + node
        uniq, inverse = np.unique(key, return_inverse=True)
        index = dc.RelationalIndex(uniq % self.num_nodes, uniq // self.num_nodes,
                                   self.num_relations)
        return index, dc.SegmentIndex(inverse.reshape(-1), uniq.size)


def _modulated_terms(h, top: Topology, p: Mapping[str, dc.Tensor]):
    gamma = dc.relational_matmul(h, p["w_gamma"], top.target_pairs)
    beta = dc.relational_matmul(h, p["w_beta"], top.target_pairs)
    alpha = dc.relational_matmul(h, p["w_alpha"], top.source_pairs)
    return gamma, alpha, beta


def film_layer(h: dc.Tensor, top: Topology, p: Mapping[str, dc.Tensor]) -> dc.Tensor:
    """relu( sum_u relu( (W_g h_v) * (W_a h_u) + W_b h_v ) ) with per-relation weights."""
    gamma, alpha, beta = _modulated_terms(h, top, p)
    et, es = top.edge_target_pair, top.edge_source_pair
    msg = dc.relu(dc.gather(gamma, et) * dc.gather(alpha, es) + dc.gather(beta, et))
    return dc.relu(dc.segment_sum(msg, top.by_target, top.num_nodes))


def filmv2_layer(h: dc.Tensor, top: Topology, p: Mapping[str, dc.Tensor]) -> dc.Tensor:
    """relu( sum_u relu(W_g h_v) * (W_a h_u) + relu(W_b h_v) ).

    A target feature whose gamma and beta pre-activations are both
    non-positive is zeroed whatever the sources send.
    """
    return _filmv2(h, top, p, dc.relu, source_act=False)


def filmv2_variant_layer(kind: str, h: dc.Tensor, top: Topology,
                         p: Mapping[str, dc.Tensor]) -> dc.Tensor:
    """``tanh``: every relu of FiLMv2 becomes tanh. ``source_act``: relu on W_a h_u too."""
    if kind == "tanh":
        return _filmv2(h, top, p, dc.tanh, source_act=False)
    if kind == "source_act":
        return _filmv2(h, top, p, dc.relu, source_act=True)
    raise ValueError(f"unknown FiLMv2 variant {kind!r}")


def _filmv2(h, top, p, act, source_act: bool) -> dc.Tensor:
    # Per-edge messages only touch the source through W_a h_u, so sources are
    # summed per (target, relation) pair before modulation.
    gamma = dc.relational_matmul(h, p["w_gamma"], top.target_pairs)
    beta = dc.relational_matmul(h, p["w_beta"], top.target_pairs)
    if source_act:
        alpha = act(dc.relational_matmul(h, p["w_alpha"], top.source_pairs))
        alpha_sum = dc.sparse_matmul(top.source_pairs_per_pair, alpha)
    else:
        h_sum = dc.sparse_matmul(top.sources_per_pair, h)
        alpha_sum = dc.relational_matmul(h_sum, p["w_alpha"], top.pair_rows)
    per_pair = act(gamma) * alpha_sum + dc.scale_rows(act(beta), top.pair_edge_count)
    return act(dc.segment_sum(per_pair, top.pair_by_node, top.num_nodes))


def gin_layer(h: dc.Tensor, top: Topology, p: Mapping[str, dc.Tensor]) -> dc.Tensor:
    """MLP((1 + eps) h_v + sum_u W^r h_u); self-loops are covered by the eps term."""
    msgs = dc.relational_matmul(h, p["w_rel"], top.nbr_source_pairs)
    agg = dc.segment_sum(dc.gather(msgs, top.nbr_edge_source_pair), top.nbr_by_target, top.num_nodes)
    z = dc.mul(h, dc.add(p["eps"], 1.0)) + agg
    hidden = dc.relu(dc.add_bias(z @ p["mlp_w1"], p["mlp_b1"]))
    return dc.add_bias(hidden @ p["mlp_w2"], p["mlp_b2"])


def gatv2_layer(h: dc.Tensor, top: Topology, p: Mapping[str, dc.Tensor],
                negative_slope: float = 0.2) -> dc.Tensor:
    """Single-head GATv2 with relation-specific source and target maps.

    score(u, v) = a . leaky_relu(W_s^r h_u + W_t^r h_v), softmax over each
    target's incoming edges (self-loop included), output sum of
    attention * W_s^r h_u.
    """
    src = dc.relational_matmul(h, p["w_source"], top.source_pairs)
    tgt = dc.relational_matmul(h, p["w_target"], top.target_pairs)
    src_e = dc.gather(src, top.edge_source_pair)
    z = dc.leaky_relu(src_e + dc.gather(tgt, top.edge_target_pair), negative_slope)
    att = dc.segment_softmax(z @ p["attention"], top.by_target, top.num_nodes)
    spread = att @ dc.Tensor(np.ones((1, src_e.shape[1])))
    return dc.segment_sum(spread * src_e, top.by_target, top.num_nodes)


def attention_weights(h: dc.Tensor, top: Topology, p: Mapping[str, dc.Tensor],
                      negative_slope: float = 0.2) -> np.ndarray:
    """Per-edge attention coefficients of :func:`gatv2_layer` (for inspection)."""
    src = dc.relational_matmul(h, p["w_source"], top.source_pairs)
    tgt = dc.relational_matmul(h, p["w_target"], top.target_pairs)
    z = dc.leaky_relu(dc.gather(src, top.edge_source_pair)
                      + dc.gather(tgt, top.edge_target_pair), negative_slope)
    return dc.segment_softmax(z @ p["attention"], top.by_target, top.num_nodes).data[:, 0]
