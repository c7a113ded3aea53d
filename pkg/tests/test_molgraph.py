import itertools
import json
from pathlib import Path

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dsdock.molgraph import (
    NUM_NODE_FEATURES,
    AlreadyAugmented,
    BondOrder,
    BondStereo,
    Chirality,
    GeneratorParams,
    MolecularGraph,
    RingClosureError,
    SmilesSyntaxError,
    UnsupportedFeature,
    ValenceError,
    add_virtual_node,
    collate,
    featurize,
    generate_random_library,
    graph_signature,
    hybridization,
    parse_smiles,
    perceive_ring_atoms,
    write_smiles,
)
from dsdock.molgraph.features import BLOCK_OFFSETS, BLOCK_SIZES, NUM_BLOCKS
from dsdock.molgraph.graph import Atom, Bond

DATA = Path(__file__).parent / "data"


def load_reference() -> list[dict]:
    return json.loads((DATA / "corpus_reference.json").read_text())["molecules"]


def assert_matches_reference(g: MolecularGraph, entry: dict) -> None:
    smiles = entry["smiles"]
    assert len(g.atoms) == len(entry["atoms"]), smiles
    degree = g.degrees()
    for i, (atom, ref) in enumerate(zip(g.atoms, entry["atoms"])):
        ours = {
            "element": atom.element, "charge": atom.formal_charge, "total_h": atom.total_h,
            "aromatic": atom.is_aromatic, "in_ring": g.ring_membership[i],
            "degree": degree[i], "chiral": atom.chirality != Chirality.NONE,
        }
        assert ours == ref, (smiles, i)
    bonds = sorted([min(b.a, b.b), max(b.a, b.b), b.order.name] for b in g.bonds)
    assert bonds == entry["bonds"], smiles


def as_networkx(g: MolecularGraph) -> nx.Graph:
    nxg = nx.Graph()
    for i, a in enumerate(g.atoms):
        nxg.add_node(i, key=(a.element, a.formal_charge, a.total_h, a.is_aromatic,
                             a.chirality != Chirality.NONE, a.radical_electrons))
    for b in g.bonds:
        nxg.add_edge(b.a, b.b, key=(b.order, b.stereo != 0))
    return nxg


def isomorphic(g1: MolecularGraph, g2: MolecularGraph) -> bool:
    same = lambda x, y: x["key"] == y["key"]  # noqa: E731
    return nx.is_isomorphic(as_networkx(g1), as_networkx(g2), node_match=same, edge_match=same)


def block_slot(row: np.ndarray, block: int) -> int:
    start = BLOCK_OFFSETS[block]
    return int(np.argmax(row[start:start + BLOCK_SIZES[block]]))


# --- parsing ----------------------------------------------------------------

def test_methane():
    g = parse_smiles("C")
    assert len(g.atoms) == 1 and not g.bonds
    a = g.atoms[0]
    assert (a.element, a.implicit_h, a.is_aromatic, g.ring_membership[0]) == ("C", 4, False, False)


def test_benzene():
    g = parse_smiles("c1ccccc1")
    assert len(g.atoms) == 6
    assert all(a.is_aromatic and a.implicit_h == 1 for a in g.atoms)
    assert [b.order for b in g.bonds] == [BondOrder.AROMATIC] * 6
    assert all(g.ring_membership)


def test_ammonium():
    a = parse_smiles("[NH4+]").atoms[0]
    assert (a.element, a.formal_charge, a.explicit_h, a.implicit_h) == ("N", 1, 4, 0)


def test_acetic_acid():
    g = parse_smiles("CC(=O)O")
    assert len(g.atoms) == 4 and len(g.bonds) == 3
    assert sum(b.order == BondOrder.DOUBLE for b in g.bonds) == 1
    assert not any(g.ring_membership)


@pytest.mark.parametrize("text, charge", [("[Fe+2]", 2), ("[Fe++]", 2), ("[O-]", -1),
                                          ("[N+3]", 3), ("[C--]", -2)])
def test_charge_notations(text, charge):
    assert parse_smiles(text).atoms[0].formal_charge == charge


def test_isotope_ignored_and_chirality_read():
    assert parse_smiles("[13CH4]").atoms[0].element == "C"
    # tags are stored against the order (H, neighbours by ascending index)
    assert parse_smiles("[C@@H](F)(Cl)Br").atoms[0].chirality == Chirality.CLOCKWISE
    assert parse_smiles("[C@H](F)(Cl)Br").atoms[0].chirality == Chirality.COUNTERCLOCKWISE
    # here the written order (N, H, C, C) is one swap away from (H, N, C, C)
    assert parse_smiles("N[C@@H](C)C(=O)O").atoms[1].chirality == Chirality.COUNTERCLOCKWISE


def test_double_bond_stereo_read():
    trans, cis = parse_smiles("F/C=C/F"), parse_smiles("F/C=C\\F")
    assert [b.stereo for b in trans.bonds if b.order == BondOrder.DOUBLE] == [BondStereo.E]
    assert [b.stereo for b in cis.bonds if b.order == BondOrder.DOUBLE] == [BondStereo.Z]


def test_two_digit_ring_closure():
    g = parse_smiles("C%12CCCCC%12")
    assert len(g.bonds) == 6 and all(g.ring_membership)


@pytest.mark.parametrize("text", ["", "C(", "C)", "[CH4", "Cx", "C.C", "*", "C>>C", "C((C))",
                                  "C()C", "C(1)C", "C(=)C"])
def test_syntax_errors(text):
    with pytest.raises(SmilesSyntaxError):
        parse_smiles(text)


@pytest.mark.parametrize("text", ["C1CC", "C1CC2"])
def test_unmatched_ring_closure(text):
    with pytest.raises(RingClosureError):
        parse_smiles(text)


@pytest.mark.parametrize("text", ["C(C)(C)(C)(C)C", "O=O=O", "FC#F"])
def test_valence_errors(text):
    with pytest.raises(ValenceError):
        parse_smiles(text)


def test_node_order_and_implicit_h_rules():
    g = parse_smiles("OCC(=O)N")
    assert [a.element for a in g.atoms] == ["O", "C", "C", "O", "N"]
    assert [a.implicit_h for a in g.atoms] == [1, 2, 0, 0, 2]
    s = parse_smiles("CS(=O)(=O)C").atoms[1]
    assert s.implicit_h == 0  # valence 6 chosen
    assert parse_smiles("CSC").atoms[1].implicit_h == 0
    assert parse_smiles("S").atoms[0].implicit_h == 2
    assert parse_smiles("C[N+](C)(C)C").atoms[1].implicit_h == 0


def test_corpus_matches_reference_table():
    for entry in load_reference():
        assert_matches_reference(parse_smiles(entry["smiles"]), entry)


# --- writing ----------------------------------------------------------------

def test_write_simple_cases():
    assert write_smiles(parse_smiles("C")) == "C"
    benzene = parse_smiles(write_smiles(parse_smiles("c1ccccc1")))
    assert len(benzene.atoms) == 6 and all(a.is_aromatic for a in benzene.atoms)
    assert all(benzene.ring_membership)


def test_write_rejects_virtual_node():
    with pytest.raises(UnsupportedFeature):
        write_smiles(add_virtual_node(parse_smiles("CC")))


@pytest.mark.parametrize("entry", load_reference(), ids=lambda e: e["smiles"])
def test_corpus_round_trip(entry):
    g = parse_smiles(entry["smiles"])
    if any(b.stereo != BondStereo.NONE for b in g.bonds):
        # E/Z marks are read and stored but outside the writable subset
        with pytest.raises(UnsupportedFeature):
            write_smiles(g)
        return
    assert isomorphic(parse_smiles(write_smiles(g)), g)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_generated_round_trip_property(seed):
    for g in generate_random_library(GeneratorParams(seed=seed), 5):
        back = parse_smiles(write_smiles(g))
        assert isomorphic(back, g)
        assert graph_signature(back) == graph_signature(g)


def test_generated_round_trip_isomorphic_bulk():
    for g in generate_random_library(GeneratorParams(seed=123), 500):
        assert isomorphic(parse_smiles(write_smiles(g)), g)


# --- ring perception --------------------------------------------------------

def brute_force_ring_atoms(g: MolecularGraph) -> list[bool]:
    """An atom is in a ring iff it lies on some simple cycle; enumerate them all."""
    nxg = nx.Graph()
    nxg.add_nodes_from(range(len(g.atoms)))
    nxg.add_edges_from((b.a, b.b) for b in g.chemical_bonds())
    on_cycle = set()
    for cycle in nx.simple_cycles(nxg):
        on_cycle.update(cycle)
    return [i in on_cycle for i in range(len(g.atoms))]


@settings(max_examples=200, deadline=None)
@given(n=st.integers(1, 12), data=st.data())
def test_ring_perception_matches_brute_force(n, data):
    pairs = list(itertools.combinations(range(n), 2))
    chosen = data.draw(st.lists(st.sampled_from(pairs), unique=True, max_size=min(len(pairs), 16))
                       if pairs else st.just([]))
    atoms = tuple(Atom("C", 6) for _ in range(n))
    g = MolecularGraph(atoms, tuple(Bond(a, b) for a, b in chosen))
    assert perceive_ring_atoms(g) == brute_force_ring_atoms(g)


def test_ring_perception_on_generated_small_graphs():
    for g in generate_random_library(GeneratorParams(seed=9, atom_count_range=(3, 12),
                                                     ring_closure_count_range=(0, 3)), 300):
        assert list(g.ring_membership) == brute_force_ring_atoms(g)


# --- virtual node and featurization ----------------------------------------

def test_virtual_node_counts():
    g = parse_smiles("CCCC")
    v = add_virtual_node(g)
    assert v.num_atoms == 5 and len(v.bonds) == 7
    assert v.has_virtual_node and v.virtual_index == 4
    assert v.atoms[:4] == g.atoms and v.bonds[:3] == g.bonds
    one = add_virtual_node(parse_smiles("O"))
    assert one.num_atoms == 2 and len(one.bonds) == 1
    with pytest.raises(AlreadyAugmented):
        add_virtual_node(v)


def test_benzene_featurization_with_virtual_node():
    fg = featurize(add_virtual_node(parse_smiles("c1ccccc1")))
    assert fg.num_nodes == 7 and fg.num_edges == 31
    assert np.bincount(fg.edge_relation, minlength=6).tolist() == [0, 0, 0, 12, 12, 7]
    for row in fg.node_features[:6]:
        assert block_slot(row, 2) == 2          # degree counts chemical neighbours only
        assert block_slot(row, 6) == 1          # sp2
        assert block_slot(row, 7) == 1          # aromatic


def test_methane_feature_row():
    row = featurize(parse_smiles("C")).node_features[0]
    # atomic#=C, chirality none, degree 0, charge 0, 4 H, no radicals, sp3, not aromatic, not in ring
    assert [block_slot(row, b) for b in range(NUM_BLOCKS)] == [2, 0, 0, 2, 4, 0, 2, 0, 0]


def test_hybridization_rule():
    g = parse_smiles("C#CC=CC=C=C")
    assert [hybridization(g, i) for i in range(len(g.atoms))] == \
        ["sp", "sp", "sp2", "sp2", "sp2", "sp", "sp2"]


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), virtual=st.booleans())
def test_featurize_layout_property(seed, virtual):
    g = generate_random_library(GeneratorParams(seed=seed), 1)[0]
    g = add_virtual_node(g) if virtual else g
    fg = featurize(g)
    x = fg.node_features
    assert x.shape == (g.num_atoms, NUM_NODE_FEATURES)
    assert set(np.unique(x)) <= {0.0, 1.0}
    for b in range(NUM_BLOCKS):
        assert np.all(x[:, BLOCK_OFFSETS[b]:BLOCK_OFFSETS[b] + BLOCK_SIZES[b]].sum(axis=1) == 1)
    # two directed entries per bond plus one self-loop per node, sorted
    assert fg.num_edges == 2 * len(g.bonds) + g.num_atoms
    keys = fg.edge_index[:, 0] * fg.num_nodes + fg.edge_index[:, 1]
    assert np.all(np.diff(keys) > 0)
    assert np.all(fg.edge_relation[fg.edge_index[:, 0] == fg.edge_index[:, 1]] == 5)
    np.testing.assert_array_equal(featurize(g).node_features, x)


def test_collate_offsets_segments():
    a, b = featurize(parse_smiles("CC")), featurize(parse_smiles("CCO"))
    batch = collate([a, b])
    assert batch.num_graphs == 2 and batch.num_nodes == 5
    assert batch.graph_segment.tolist() == [0, 0, 1, 1, 1]
    assert batch.edge_index.min() == 0 and batch.edge_index[a.num_edges:].min() == 2


# --- generator ----------------------------------------------------------------

def test_generator_deterministic_and_bounded():
    p = GeneratorParams(seed=1)
    first = generate_random_library(p, 100)
    assert [write_smiles(g) for g in first] == [write_smiles(g) for g in generate_random_library(p, 100)]
    for g in first:
        assert 8 <= g.num_heavy_atoms <= 30
        nxg = as_networkx(g)
        assert nx.is_connected(nxg)


def test_generator_without_aromatic_rings():
    lib = generate_random_library(GeneratorParams(seed=2, aromatic_ring_probability=0.0), 200)
    assert not any(a.is_aromatic for g in lib for a in g.atoms)


@pytest.mark.parametrize("kwargs", [
    {"atom_count_range": (5, 3)}, {"atom_count_range": (0, 3)},
    {"aromatic_ring_probability": 1.5}, {"element_weights": {"Xe": 1.0}},
    {"element_weights": {"F": 1.0}},
])
def test_generator_rejects_bad_params(kwargs):
    with pytest.raises(ValueError):
        GeneratorParams(**kwargs)
