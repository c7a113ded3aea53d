"""Isomorphism-invariant fingerprints of molecular graphs."""

from __future__ import annotations

import hashlib

from .graph import BondOrder, MolecularGraph


def _digest(text: str) -> str:
    return hashlib.blake2b(text.encode(), digest_size=12).hexdigest()


def atom_label(g: MolecularGraph, i: int) -> str:
    a = g.atoms[i]
    return f"{a.element}|{a.formal_charge}|{a.total_h}|{int(a.is_aromatic)}|{a.radical_electrons}"


def graph_signature(g: MolecularGraph, iterations: int = 4) -> str:
    """Weisfeiler-Lehman digest over atom labels and bond orders.

    Isomorphic graphs always share a signature. Chirality tags are left
    out because they depend on node numbering.
    """
    adj = g.adjacency()
    labels = [atom_label(g, i) for i in range(g.num_atoms)]
    history = [sorted(labels)]
    for _ in range(iterations):
        labels = [
            _digest(labels[i] + "(" + ",".join(sorted(
                f"{int(bond.order)}{labels[j]}" for j, bond in adj[i]
            )) + ")")
            for i in range(g.num_atoms)
        ]
        history.append(sorted(labels))
    chem = g.chemical_bonds()
    tail = f"#{g.num_atoms}#{len(chem)}#" + ",".join(
        str(sum(1 for b in chem if b.order is o)) for o in BondOrder
    )
    return _digest("/".join(";".join(h) for h in history) + tail)
