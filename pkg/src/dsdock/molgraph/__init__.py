"""Molecular graphs: SMILES I/O, chemistry features, virtual nodes, random libraries."""

from .canonical import graph_signature
from .features import (
    NUM_NODE_FEATURES,
    FeaturizedGraph,
    collate,
    featurize,
)
from .generate import GenerationFailure, GeneratorParams, generate_random_library
from .graph import (
    AlreadyAugmented,
    Atom,
    Bond,
    BondOrder,
    BondStereo,
    Chirality,
    MolecularGraph,
    ValenceError,
    add_virtual_node,
    hybridization,
    perceive_ring_atoms,
)
from .smiles import (
    RingClosureError,
    SmilesSyntaxError,
    UnsupportedFeature,
    parse_smiles,
    write_smiles,
)

__all__ = [
    "AlreadyAugmented", "Atom", "Bond", "BondOrder", "BondStereo", "Chirality",
    "FeaturizedGraph", "GenerationFailure", "GeneratorParams", "MolecularGraph",
    "NUM_NODE_FEATURES", "RingClosureError", "SmilesSyntaxError", "UnsupportedFeature",
    "ValenceError", "add_virtual_node", "collate", "featurize", "generate_random_library",
    "graph_signature", "hybridization", "parse_smiles", "perceive_ring_atoms", "write_smiles",
]
