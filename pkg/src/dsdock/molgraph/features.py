"""One-hot node features, relational edge lists, and batching."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import NUM_RELATIONS, SELF_LOOP_RELATION, Chirality, MolecularGraph, hybridization

ATOM_TYPES = ("H", "B", "C", "N", "O", "F", "P", "S", "Cl", "Br", "I", "other", "virtual")
CHIRALITY_SLOTS = 4  # none, clockwise, counterclockwise, other
DEGREE_SLOTS = 8  # 0..6, other
CHARGE_VALUES = (-2, -1, 0, 1, 2)  # then other
NUM_H_SLOTS = 6  # 0..4, other
RADICAL_SLOTS = 4  # 0..2, other
HYBRIDIZATIONS = ("sp", "sp2", "sp3")  # then other/virtual

BLOCK_SIZES = (
    len(ATOM_TYPES),
    CHIRALITY_SLOTS,
    DEGREE_SLOTS,
    len(CHARGE_VALUES) + 1,
    NUM_H_SLOTS,
    RADICAL_SLOTS,
    len(HYBRIDIZATIONS) + 1,
    2,  # aromatic
    2,  # in ring
)
BLOCK_OFFSETS = tuple(int(x) for x in np.concatenate([[0], np.cumsum(BLOCK_SIZES)[:-1]]))
NUM_NODE_FEATURES = int(sum(BLOCK_SIZES))
NUM_BLOCKS = len(BLOCK_SIZES)

_CHIRALITY_SLOT = {Chirality.NONE: 0, Chirality.CLOCKWISE: 1, Chirality.COUNTERCLOCKWISE: 2}


@dataclass(frozen=True)
class FeaturizedGraph:
    """Numeric form of one graph, or of a disjoint union of graphs.

    ``edge_index`` is an (E, 2) array of (source, target) pairs and
    ``graph_segment`` gives the graph id of every node.
    """

    node_features: np.ndarray
    edge_index: np.ndarray
    edge_relation: np.ndarray
    graph_segment: np.ndarray
    num_graphs: int = 1

    @property
    def num_nodes(self) -> int:
        return self.node_features.shape[0]

    @property
    def num_edges(self) -> int:
        return self.edge_index.shape[0]


def _slot(value: int, size: int) -> int:
    """Index for small non-negative counts, with the last slot as overflow."""
    return value if 0 <= value < size - 1 else size - 1


def node_slots(g: MolecularGraph) -> np.ndarray:
    """(n, 9) array of the active slot within each one-hot block."""
    n = g.num_atoms
    slots = np.zeros((n, NUM_BLOCKS), dtype=np.int64)
    degrees = g.degrees()
    for i, atom in enumerate(g.atoms):
        if atom.is_virtual:
            slots[i, 0] = ATOM_TYPES.index("virtual")
            slots[i, 6] = len(HYBRIDIZATIONS)
            continue
        slots[i, 0] = ATOM_TYPES.index(atom.element) if atom.element in ATOM_TYPES[:-2] \
            else ATOM_TYPES.index("other")
        slots[i, 1] = _CHIRALITY_SLOT.get(atom.chirality, CHIRALITY_SLOTS - 1)
        slots[i, 2] = _slot(degrees[i], DEGREE_SLOTS)
        q = atom.formal_charge
        slots[i, 3] = CHARGE_VALUES.index(q) if q in CHARGE_VALUES else len(CHARGE_VALUES)
        slots[i, 4] = _slot(atom.total_h, NUM_H_SLOTS)
        slots[i, 5] = _slot(atom.radical_electrons, RADICAL_SLOTS)
        slots[i, 6] = HYBRIDIZATIONS.index(hybridization(g, i))
        slots[i, 7] = int(atom.is_aromatic)
        slots[i, 8] = int(g.ring_membership[i])
    return slots


def featurize(g: MolecularGraph) -> FeaturizedGraph:
    """Concatenated one-hot node rows plus both bond directions and self-loops.

    Edge relations are the bond order ids 0..4 (single, double, triple,
    aromatic, virtual) and 5 for self-loops. Edges are sorted by source,
    then target.
    """
    n = g.num_atoms
    slots = node_slots(g)
    x = np.zeros((n, NUM_NODE_FEATURES))
    rows = np.repeat(np.arange(n), NUM_BLOCKS)
    cols = (slots + np.asarray(BLOCK_OFFSETS)).reshape(-1)
    x[rows, cols] = 1.0

    src, dst, rel = [], [], []
    for bond in g.bonds:
        src += [bond.a, bond.b]
        dst += [bond.b, bond.a]
        rel += [int(bond.order)] * 2
    src += range(n)
    dst += range(n)
    rel += [SELF_LOOP_RELATION] * n
    src_a = np.asarray(src, dtype=np.int64)
    dst_a = np.asarray(dst, dtype=np.int64)
    order = np.lexsort((dst_a, src_a))
    edge_index = np.stack([src_a[order], dst_a[order]], axis=1)
    edge_relation = np.asarray(rel, dtype=np.int64)[order]
    return FeaturizedGraph(x, edge_index, edge_relation, np.zeros(n, dtype=np.int64), 1)


def collate(graphs: list[FeaturizedGraph]) -> FeaturizedGraph:
    """Disjoint union; node ids are offset and segments renumbered 0..k-1."""
    if not graphs:
        raise ValueError("cannot collate an empty list of graphs")
    sizes = np.array([fg.num_nodes for fg in graphs])
    offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    x = np.concatenate([fg.node_features for fg in graphs], axis=0)
    edges = np.concatenate([fg.edge_index + off for fg, off in zip(graphs, offsets)], axis=0)
    rel = np.concatenate([fg.edge_relation for fg in graphs])
    seg = np.repeat(np.arange(len(graphs)), sizes)
    return FeaturizedGraph(x, edges, rel, seg, len(graphs))


def check_relations(fg: FeaturizedGraph) -> None:
    if fg.edge_relation.size and (fg.edge_relation.min() < 0 or fg.edge_relation.max() >= NUM_RELATIONS):
        raise ValueError("edge relation outside 0..5")
