"""Molecular graph types, valence rules, and ring perception."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace


class Chirality(enum.IntEnum):
    NONE = 0
    CLOCKWISE = 1
    COUNTERCLOCKWISE = 2

    def flipped(self) -> "Chirality":
        if self is Chirality.CLOCKWISE:
            return Chirality.COUNTERCLOCKWISE
        if self is Chirality.COUNTERCLOCKWISE:
            return Chirality.CLOCKWISE
        return self


class BondOrder(enum.IntEnum):
    """Bond kinds; the integer value doubles as the edge relation id."""

    SINGLE = 0
    DOUBLE = 1
    TRIPLE = 2
    AROMATIC = 3
    VIRTUAL = 4

    @property
    def valence(self) -> float:
        return _BOND_VALENCE[self]


_BOND_VALENCE = {
    BondOrder.SINGLE: 1.0,
    BondOrder.DOUBLE: 2.0,
    BondOrder.TRIPLE: 3.0,
    BondOrder.AROMATIC: 1.5,
    BondOrder.VIRTUAL: 0.0,
}

SELF_LOOP_RELATION = 5
NUM_RELATIONS = 6


class BondStereo(enum.IntEnum):
    NONE = 0
    Z = 1
    E = 2


ATOMIC_NUMBERS = {
    "H": 1, "He": 2, "Li": 3, "Be": 4, "B": 5, "C": 6, "N": 7, "O": 8, "F": 9,
    "Ne": 10, "Na": 11, "Mg": 12, "Al": 13, "Si": 14, "P": 15, "S": 16,
    "Cl": 17, "Ar": 18, "K": 19, "Ca": 20, "Fe": 26, "Co": 27, "Ni": 28,
    "Cu": 29, "Zn": 30, "Ga": 31, "Ge": 32, "As": 33, "Se": 34, "Br": 35,
    "Kr": 36, "Rb": 37, "Sr": 38, "Ag": 47, "Sn": 50, "Sb": 51, "Te": 52,
    "I": 53, "Xe": 54, "Cs": 55, "Ba": 56, "Pt": 78, "Au": 79, "Hg": 80,
}
VIRTUAL_ELEMENT = "*virtual*"

# allowed valences for neutral atoms, smallest first
DEFAULT_VALENCES = {
    "B": (3,), "C": (4,), "N": (3,), "O": (2,), "P": (3, 5), "S": (2, 4, 6),
    "F": (1,), "Cl": (1,), "Br": (1,), "I": (1,), "H": (1,),
}


class ValenceError(ValueError):
    pass


@dataclass(frozen=True)
class Atom:
    element: str
    atomic_number: int
    formal_charge: int = 0
    explicit_h: int = 0
    implicit_h: int = 0
    is_aromatic: bool = False
    chirality: Chirality = Chirality.NONE
    radical_electrons: int = 0

    @property
    def total_h(self) -> int:
        return self.explicit_h + self.implicit_h

    @property
    def is_virtual(self) -> bool:
        return self.element == VIRTUAL_ELEMENT


@dataclass(frozen=True)
class Bond:
    a: int
    b: int
    order: BondOrder = BondOrder.SINGLE
    stereo: BondStereo = BondStereo.NONE
    is_conjugated: bool = False

    @property
    def endpoints(self) -> frozenset[int]:
        return frozenset((self.a, self.b))

    def other(self, i: int) -> int:
        return self.b if i == self.a else self.a


@dataclass(frozen=True)
class MolecularGraph:
    """Atoms plus undirected bonds.

    ``chirality`` of an atom is expressed relative to its neighbours listed
    hydrogen first, then by ascending node index.
    """

    atoms: tuple[Atom, ...]
    bonds: tuple[Bond, ...]
    ring_membership: tuple[bool, ...] = field(default=())
    has_virtual_node: bool = False
    virtual_index: int | None = None

    def __post_init__(self):
        n = len(self.atoms)
        seen = set()
        for bond in self.bonds:
            if not (0 <= bond.a < n and 0 <= bond.b < n) or bond.a == bond.b:
                raise ValueError(f"bond {bond.a}-{bond.b} invalid for {n} atoms")
            key = bond.endpoints
            if key in seen:
                raise ValueError(f"duplicate bond between {bond.a} and {bond.b}")
            seen.add(key)
        if not self.ring_membership:
            object.__setattr__(self, "ring_membership", tuple(perceive_ring_atoms(self)))
        elif len(self.ring_membership) != n:
            raise ValueError("ring_membership length differs from atom count")

    @property
    def num_atoms(self) -> int:
        return len(self.atoms)

    @property
    def num_heavy_atoms(self) -> int:
        return sum(1 for a in self.atoms if not a.is_virtual and a.element != "H")

    def chemical_bonds(self) -> list[Bond]:
        return [b for b in self.bonds if b.order is not BondOrder.VIRTUAL]

    def neighbors(self, i: int, include_virtual: bool = False) -> list[int]:
        out = []
        for bond in self.bonds:
            if not include_virtual and bond.order is BondOrder.VIRTUAL:
                continue
            if bond.a == i:
                out.append(bond.b)
            elif bond.b == i:
                out.append(bond.a)
        return sorted(out)

    def adjacency(self, include_virtual: bool = False) -> list[list[tuple[int, Bond]]]:
        adj: list[list[tuple[int, Bond]]] = [[] for _ in self.atoms]
        for bond in self.bonds:
            if not include_virtual and bond.order is BondOrder.VIRTUAL:
                continue
            adj[bond.a].append((bond.b, bond))
            adj[bond.b].append((bond.a, bond))
        for row in adj:
            row.sort(key=lambda item: item[0])
        return adj

    def degrees(self) -> list[int]:
        deg = [0] * self.num_atoms
        for bond in self.chemical_bonds():
            deg[bond.a] += 1
            deg[bond.b] += 1
        return deg

    def cycle_rank(self) -> int:
        """Independent ring count: |E| - |V| + components, virtual part excluded."""
        atoms = [i for i, a in enumerate(self.atoms) if not a.is_virtual]
        bonds = self.chemical_bonds()
        return len(bonds) - len(atoms) + count_components(self)


def count_components(g: MolecularGraph) -> int:
    parent = list(range(g.num_atoms))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for bond in g.chemical_bonds():
        ra, rb = find(bond.a), find(bond.b)
        if ra != rb:
            parent[ra] = rb
    return len({find(i) for i, a in enumerate(g.atoms) if not a.is_virtual})


def perceive_ring_atoms(g: MolecularGraph) -> list[bool]:
    """Ring atoms are the endpoints of non-bridge bonds (iterative Tarjan DFS)."""
    n = g.num_atoms
    adj = g.adjacency()
    disc = [-1] * n
    low = [0] * n
    in_ring = [False] * n
    timer = 0
    for root in range(n):
        if disc[root] != -1:
            continue
        disc[root] = low[root] = timer
        timer += 1
        # frames: (node, parent bond id, neighbour iterator position)
        stack = [(root, -1, 0)]
        while stack:
            v, via, pos = stack[-1]
            if pos < len(adj[v]):
                stack[-1] = (v, via, pos + 1)
                w, bond = adj[v][pos]
                if id(bond) == via:
                    continue
                if disc[w] == -1:
                    disc[w] = low[w] = timer
                    timer += 1
                    stack.append((w, id(bond), 0))
                else:
                    low[v] = min(low[v], disc[w])  # back edge closes a cycle
            else:
                stack.pop()
                if stack:
                    u = stack[-1][0]
                    low[u] = min(low[u], low[v])
                    if low[v] <= disc[u]:  # edge u-v is not a bridge
                        in_ring[u] = in_ring[v] = True
    return in_ring


def bond_valence_sum(orders) -> float:
    return sum(BondOrder(o).valence for o in orders)


def _charge_adjusted(element: str, valence: int, charge: int) -> int:
    if charge == 0:
        return valence
    if element in ("N", "P", "O", "S", "F", "Cl", "Br", "I"):
        return valence + charge
    if element == "B":
        return valence - charge
    return valence - abs(charge)


def implicit_hydrogens(atom: Atom, orders) -> int:
    """Implicit hydrogen count from the default-valence rule.

    Aromatic bonds count 1.5 and the bond sum is rounded half-up before
    subtraction. Aromatic atoms use their lowest default valence. The result
    is floored at zero. Elements without default valences get none.
    """
    valences = DEFAULT_VALENCES.get(atom.element)
    if valences is None:
        return 0
    used = math.floor(bond_valence_sum(orders) + 0.5) + atom.explicit_h
    if atom.is_aromatic:
        target = valences[0]
    else:
        target = next((v for v in valences if v >= used), valences[-1])
    target = _charge_adjusted(atom.element, target, atom.formal_charge)
    return max(0, target - used)


def check_valence(atom: Atom, orders) -> None:
    """Raise :class:`ValenceError` when bonds plus hydrogens exceed the maximum."""
    valences = DEFAULT_VALENCES.get(atom.element)
    if valences is None:
        return
    limit = _charge_adjusted(atom.element, valences[-1], atom.formal_charge)
    # aromatic bonds each use one unit here; the delocalised part is shared
    used = sum(1.0 if BondOrder(o) is BondOrder.AROMATIC else BondOrder(o).valence for o in orders)
    used += atom.explicit_h
    if used > limit + 1e-9:
        raise ValenceError(
            f"{atom.element} with charge {atom.formal_charge} has valence {used:g} > {limit}"
        )


def assign_conjugation(atoms, bonds) -> list[Bond]:
    """Mark aromatic bonds, and multiple/single bonds adjacent to unsaturation."""
    unsat: dict[int, list[int]] = {}
    for k, b in enumerate(bonds):
        if b.order in (BondOrder.DOUBLE, BondOrder.TRIPLE, BondOrder.AROMATIC):
            unsat.setdefault(b.a, []).append(k)
            unsat.setdefault(b.b, []).append(k)
    out = []
    for k, b in enumerate(bonds):
        if b.order is BondOrder.VIRTUAL:
            conj = False
        elif b.order is BondOrder.AROMATIC:
            conj = True
        elif b.order is BondOrder.SINGLE:
            conj = any(j != k for j in unsat.get(b.a, ())) and any(j != k for j in unsat.get(b.b, ()))
        else:
            conj = any(j != k for j in unsat.get(b.a, ()) + unsat.get(b.b, ()))
        out.append(replace(b, is_conjugated=conj))
    return out


class AlreadyAugmented(ValueError):
    pass


def add_virtual_node(g: MolecularGraph) -> MolecularGraph:
    """Append one node connected to every atom by a VIRTUAL bond."""
    if g.has_virtual_node:
        raise AlreadyAugmented("graph already carries a virtual node")
    if g.num_atoms < 1:
        raise ValueError("cannot augment an empty graph")
    v = g.num_atoms
    virtual = Atom(element=VIRTUAL_ELEMENT, atomic_number=0)
    extra = tuple(Bond(i, v, BondOrder.VIRTUAL) for i in range(v))
    return MolecularGraph(
        atoms=g.atoms + (virtual,),
        bonds=g.bonds + extra,
        ring_membership=g.ring_membership + (False,),
        has_virtual_node=True,
        virtual_index=v,
    )


def hybridization(g: MolecularGraph, i: int) -> str:
    """``sp``/``sp2``/``sp3`` from bond orders and aromaticity alone."""
    doubles = triples = 0
    for bond in g.bonds:
        if i in (bond.a, bond.b):
            if bond.order is BondOrder.DOUBLE:
                doubles += 1
            elif bond.order is BondOrder.TRIPLE:
                triples += 1
    if triples or doubles >= 2:
        return "sp"
    if g.atoms[i].is_aromatic or doubles == 1:
        return "sp2"
    return "sp3"
