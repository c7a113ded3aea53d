"""Reading and writing a practical subset of SMILES.

Supported: organic-subset atoms (B C N O P S F Cl Br I and aromatic
b c n o p s), bracket atoms with isotope (ignored), chirality ``@``/``@@``,
hydrogen count and charge, bonds ``- = # :`` plus ``/ \\`` direction marks,
branches, and ring closures ``1``-``9`` and ``%nn``. Dot-disconnected
inputs, wildcards, atom classes and reaction syntax are rejected.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, replace

from .graph import (
    ATOMIC_NUMBERS,
    Atom,
    Bond,
    BondOrder,
    BondStereo,
    Chirality,
    MolecularGraph,
    ValenceError,
    assign_conjugation,
    check_valence,
    implicit_hydrogens,
)

__all__ = [
    "SmilesSyntaxError",
    "RingClosureError",
    "ValenceError",
    "UnsupportedFeature",
    "parse_smiles",
    "write_smiles",
]


class SmilesSyntaxError(SyntaxError):
    pass


class RingClosureError(SmilesSyntaxError):
    pass


class UnsupportedFeature(ValueError):
    pass


ORGANIC = ("Cl", "Br", "B", "C", "N", "O", "P", "S", "F", "I")
AROMATIC_SYMBOLS = {"b": "B", "c": "C", "n": "N", "o": "O", "p": "P", "s": "S"}
BOND_SYMBOLS = {"-": BondOrder.SINGLE, "=": BondOrder.DOUBLE, "#": BondOrder.TRIPLE,
                ":": BondOrder.AROMATIC, "/": BondOrder.SINGLE, "\\": BondOrder.SINGLE}

_H = -1  # placeholder for an attached hydrogen in neighbour order lists


@dataclass
class _AtomState:
    element: str
    aromatic: bool
    bracket: bool
    charge: int = 0
    hcount: int = 0
    chirality: Chirality = Chirality.NONE
    order: list = field(default_factory=list)  # neighbour order as written
    has_from: bool = False


@dataclass
class _BondState:
    a: int
    b: int
    order: BondOrder
    direction: str | None = None  # '/' or '\\' written from a to b
    ring: bool = False


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0
        self.atoms: list[_AtomState] = []
        self.bonds: list[_BondState] = []
        self.pairs: set[frozenset[int]] = set()
        self.rings: dict[int, tuple[int, str | None, int]] = {}

    def error(self, msg: str, exc=SmilesSyntaxError):
        return exc(f"{msg} at position {self.pos} in {self.text!r}")

    def run(self) -> MolecularGraph:
        text = self.text
        prev: int | None = None
        pending: str | None = None
        branches: list[int] = []
        empty_branch = False  # a '(' has been read but no atom since
        while self.pos < len(text):
            ch = text[self.pos]
            if ch == "(":
                if prev is None or pending is not None or empty_branch:
                    raise self.error("branch opened without a preceding atom")
                branches.append(prev)
                empty_branch = True
                self.pos += 1
            elif ch == ")":
                if not branches:
                    raise self.error("unbalanced ')'")
                if pending is not None:
                    raise self.error("bond symbol before ')'")
                if empty_branch:
                    raise self.error("empty branch")
                prev = branches.pop()
                self.pos += 1
            elif ch in BOND_SYMBOLS:
                if prev is None or pending is not None:
                    raise self.error(f"misplaced bond symbol {ch!r}")
                pending = ch
                self.pos += 1
            elif ch.isdigit() or ch == "%":
                if prev is None or empty_branch:
                    raise self.error("ring closure without a preceding atom")
                self.ring_closure(prev, pending, self.ring_number())
                pending = None
            elif ch == "[":
                idx = self.bracket_atom()
                prev = self.attach(prev, idx, pending)
                pending, empty_branch = None, False
            elif ch == ".":
                raise self.error("disconnected (dot) SMILES are not supported")
            else:
                idx = self.organic_atom()
                prev = self.attach(prev, idx, pending)
                pending, empty_branch = None, False
        if branches:
            raise self.error("unclosed '('")
        if pending is not None:
            raise self.error("dangling bond symbol")
        if self.rings:
            digit = min(self.rings)
            raise self.error(f"ring closure {digit} never closed", RingClosureError)
        if not self.atoms:
            raise self.error("no atoms")
        return self.build()

    # ------------------------------------------------------------ tokens

    def ring_number(self) -> int:
        text = self.text
        if text[self.pos] == "%":
            digits = text[self.pos + 1:self.pos + 3]
            if len(digits) != 2 or not digits.isdigit():
                raise self.error("'%' must be followed by two digits")
            self.pos += 3
            return int(digits)
        self.pos += 1
        return int(text[self.pos - 1])

    def organic_atom(self) -> int:
        text = self.text
        two = text[self.pos:self.pos + 2]
        if two in ("Cl", "Br"):
            self.pos += 2
            return self.new_atom(_AtomState(two, False, False))
        ch = text[self.pos]
        if ch in ORGANIC:
            self.pos += 1
            return self.new_atom(_AtomState(ch, False, False))
        if ch in AROMATIC_SYMBOLS:
            self.pos += 1
            return self.new_atom(_AtomState(AROMATIC_SYMBOLS[ch], True, False))
        raise self.error(f"unknown symbol {ch!r}")

    def bracket_atom(self) -> int:
        text = self.text
        end = text.find("]", self.pos)
        if end < 0:
            raise self.error("unclosed '['")
        body = text[self.pos + 1:end]
        i = 0
        while i < len(body) and body[i].isdigit():
            i += 1  # isotope, ignored
        if i < len(body) and body[i] in AROMATIC_SYMBOLS:
            element, aromatic = AROMATIC_SYMBOLS[body[i]], True
            i += 1
        else:
            sym = body[i:i + 2]
            if len(sym) == 2 and sym[1].islower() and sym in ATOMIC_NUMBERS:
                element = sym
            elif sym[:1] in ATOMIC_NUMBERS:
                element = sym[:1]
            else:
                raise self.error(f"unknown element in bracket atom [{body}]")
            aromatic = False
            i += len(element)
        chirality = Chirality.NONE
        if body[i:i + 2] == "@@":
            chirality, i = Chirality.CLOCKWISE, i + 2
        elif body[i:i + 1] == "@":
            chirality, i = Chirality.COUNTERCLOCKWISE, i + 1
        if i < len(body) and body[i].isalpha() and body[i] != "H":
            raise self.error(f"unsupported chirality class in [{body}]")
        hcount = 0
        if body[i:i + 1] == "H":
            i += 1
            hcount = 1
            if i < len(body) and body[i].isdigit():
                hcount = int(body[i])
                i += 1
        charge = 0
        if i < len(body) and body[i] in "+-":
            sign = 1 if body[i] == "+" else -1
            j = i
            while j < len(body) and body[j] == body[i]:
                j += 1
            if j - i > 1:
                charge = sign * (j - i)
                i = j
            else:
                i += 1
                k = i
                while k < len(body) and body[k].isdigit():
                    k += 1
                charge = sign * (int(body[i:k]) if k > i else 1)
                i = k
        if i != len(body):
            raise self.error(f"cannot parse bracket atom [{body}]")
        if abs(charge) > 4:
            raise self.error(f"formal charge {charge} outside [-4, 4]")
        self.pos = end + 1
        return self.new_atom(_AtomState(element, aromatic, True, charge, hcount, chirality))

    # ------------------------------------------------------------ assembly

    def new_atom(self, state: _AtomState) -> int:
        self.atoms.append(state)
        return len(self.atoms) - 1

    def bond_order(self, a: int, b: int, symbol: str | None) -> BondOrder:
        if symbol is not None:
            return BOND_SYMBOLS[symbol]
        if self.atoms[a].aromatic and self.atoms[b].aromatic:
            return BondOrder.AROMATIC
        return BondOrder.SINGLE

    def add_bond(self, a: int, b: int, symbol: str | None, ring: bool = False) -> None:
        key = frozenset((a, b))
        if a == b:
            raise self.error("atom bonded to itself", RingClosureError)
        if key in self.pairs:
            raise self.error(f"second bond between atoms {a} and {b}", RingClosureError)
        self.pairs.add(key)
        direction = symbol if symbol in ("/", "\\") else None
        self.bonds.append(_BondState(a, b, self.bond_order(a, b, symbol), direction, ring))

    def attach(self, prev: int | None, idx: int, symbol: str | None) -> int:
        if prev is not None:
            self.add_bond(prev, idx, symbol)
            self.atoms[prev].order.append(idx)
            self.atoms[idx].order.append(prev)
            self.atoms[idx].has_from = True
        return idx

    def ring_closure(self, atom: int, symbol: str | None, number: int) -> None:
        if number in self.rings:
            other, other_symbol, slot = self.rings.pop(number)
            if symbol and other_symbol and BOND_SYMBOLS[symbol] != BOND_SYMBOLS[other_symbol]:
                raise self.error(f"conflicting bond symbols on ring closure {number}",
                                 RingClosureError)
            use = symbol or other_symbol
            if use in ("/", "\\"):
                use = "-"  # ring-closure direction marks are not interpreted
            self.add_bond(other, atom, use, ring=True)
            self.atoms[other].order[slot] = atom
            self.atoms[atom].order.append(other)
        else:
            self.atoms[atom].order.append(None)
            self.rings[number] = (atom, symbol, len(self.atoms[atom].order) - 1)

    def build(self) -> MolecularGraph:
        n = len(self.atoms)
        orders: list[list[BondOrder]] = [[] for _ in range(n)]
        for b in self.bonds:
            orders[b.a].append(b.order)
            orders[b.b].append(b.order)
        atoms = []
        for i, st in enumerate(self.atoms):
            atom = Atom(
                element=st.element,
                atomic_number=ATOMIC_NUMBERS[st.element],
                formal_charge=st.charge,
                explicit_h=st.hcount,
                is_aromatic=st.aromatic,
                chirality=_normalise_chirality(st),
            )
            try:
                check_valence(atom, orders[i])
            except ValenceError as exc:
                raise ValenceError(f"{exc} (atom {i} in {self.text!r})") from None
            if not st.bracket:
                atom = replace(atom, implicit_h=implicit_hydrogens(atom, orders[i]))
            atoms.append(atom)
        bonds = [Bond(b.a, b.b, b.order) for b in self.bonds]
        bonds = _assign_double_bond_stereo(bonds, self.bonds)
        bonds = assign_conjugation(atoms, bonds)
        return MolecularGraph(atoms=tuple(atoms), bonds=tuple(bonds))


def _permutation_parity(seq: list, target: list) -> int:
    """0 if ``seq`` is an even permutation of ``target``, else 1."""
    pos = {v: k for k, v in enumerate(target)}
    perm = [pos[v] for v in seq]
    parity = 0
    seen = [False] * len(perm)
    for i in range(len(perm)):
        if seen[i]:
            continue
        j, length = i, 0
        while not seen[j]:
            seen[j] = True
            j = perm[j]
            length += 1
        parity ^= (length - 1) & 1
    return parity


def _canonical_order(neighbours: list[int], has_h: bool) -> list[int]:
    return ([_H] if has_h else []) + sorted(neighbours)


def _normalise_chirality(st: _AtomState) -> Chirality:
    if st.chirality is Chirality.NONE:
        return st.chirality
    written = list(st.order)
    if st.hcount:
        written.insert(1 if st.has_from else 0, _H)
    canon = _canonical_order([v for v in written if v != _H], st.hcount > 0)
    return st.chirality.flipped() if _permutation_parity(written, canon) else st.chirality


def _assign_double_bond_stereo(bonds: list[Bond], states: list[_BondState]) -> list[Bond]:
    """E/Z for double bonds flanked by '/' or '\\' marks on both sides."""
    marks: dict[int, list[tuple[int, bool]]] = {}
    for st in states:
        if st.direction is None:
            continue
        up = st.direction == "/"
        # written toward b: the mark describes b relative to a
        marks.setdefault(st.b, []).append((st.a, up))
        marks.setdefault(st.a, []).append((st.b, not up))
    out = []
    for bond in bonds:
        if bond.order is BondOrder.DOUBLE and bond.a in marks and bond.b in marks:
            left = [m for m in marks[bond.a] if m[0] != bond.b]
            right = [m for m in marks[bond.b] if m[0] != bond.a]
            if left and right:
                # '/' before the left atom and '/' after the right atom is trans
                same = left[0][1] == (not right[0][1])
                stereo = BondStereo.E if same else BondStereo.Z
                bond = Bond(bond.a, bond.b, bond.order, stereo)
        out.append(bond)
    return out


def parse_smiles(text: str) -> MolecularGraph:
    """Parse a SMILES string into a :class:`MolecularGraph`.

    Nodes are numbered in order of first appearance. Raises
    :class:`SmilesSyntaxError`, :class:`RingClosureError` or
    :class:`ValenceError`.
    """
    if not text or not text.isascii():
        raise SmilesSyntaxError("SMILES must be non-empty ASCII")
    if any(c.isspace() for c in text):
        raise SmilesSyntaxError(f"whitespace inside SMILES {text!r}")
    return _Parser(text).run()


# ---------------------------------------------------------------- writer

_WRITE_ORGANIC = {"B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I"}


def _atom_token(g: MolecularGraph, i: int, orders, chirality: Chirality) -> str:
    atom = g.atoms[i]
    plain = Atom(atom.element, atom.atomic_number, is_aromatic=atom.is_aromatic)
    symbol = atom.element.lower() if atom.is_aromatic else atom.element
    if (
        atom.element in _WRITE_ORGANIC
        and atom.formal_charge == 0
        and chirality is Chirality.NONE
        and atom.explicit_h == 0
        and implicit_hydrogens(plain, orders) == atom.implicit_h
    ):
        return symbol
    parts = ["[", symbol]
    if chirality is Chirality.COUNTERCLOCKWISE:
        parts.append("@")
    elif chirality is Chirality.CLOCKWISE:
        parts.append("@@")
    h = atom.total_h
    if h:
        parts.append("H" if h == 1 else f"H{h}")
    q = atom.formal_charge
    if q:
        sign = "+" if q > 0 else "-"
        parts.append(sign if abs(q) == 1 else f"{sign}{abs(q)}")
    parts.append("]")
    return "".join(parts)


def _bond_token(g: MolecularGraph, bond: Bond) -> str:
    a, b = g.atoms[bond.a], g.atoms[bond.b]
    both_aromatic = a.is_aromatic and b.is_aromatic
    if bond.order is BondOrder.SINGLE:
        return "-" if both_aromatic else ""
    if bond.order is BondOrder.AROMATIC:
        return "" if both_aromatic else ":"
    return "=" if bond.order is BondOrder.DOUBLE else "#"


def _ring_label(k: int) -> str:
    return str(k) if k < 10 else f"%{k:02d}"


def write_smiles(g: MolecularGraph) -> str:
    """Emit a SMILES string whose parse is isomorphic to ``g``.

    Raises :class:`UnsupportedFeature` for virtual nodes, bond stereo,
    radicals, disconnected graphs or elements outside the known table.
    """
    if g.has_virtual_node:
        raise UnsupportedFeature("write_smiles does not accept virtual nodes")
    if g.num_atoms == 0:
        raise UnsupportedFeature("empty graph")
    for atom in g.atoms:
        if atom.radical_electrons:
            raise UnsupportedFeature("radical electrons are not writable")
        if atom.element not in ATOMIC_NUMBERS:
            raise UnsupportedFeature(f"element {atom.element!r} is not writable")
        if atom.is_aromatic and atom.element not in AROMATIC_SYMBOLS.values():
            raise UnsupportedFeature(f"aromatic {atom.element} is not writable")
    if any(b.stereo is not BondStereo.NONE for b in g.bonds):
        raise UnsupportedFeature("double-bond stereo is not writable")

    adj = g.adjacency()
    n = g.num_atoms
    # pass 1: spanning tree by DFS, remaining edges become ring closures
    visited = [False] * n
    children: list[list[tuple[int, Bond]]] = [[] for _ in range(n)]
    parent_bond: list[Bond | None] = [None] * n
    closures: list[list[tuple[int, Bond]]] = [[] for _ in range(n)]
    order = []
    used_edges: set[int] = set()
    stack = [(0, None)]
    while stack:
        v, pb = stack.pop()
        if visited[v]:
            continue
        visited[v] = True
        order.append(v)
        if pb is not None:
            parent_bond[v] = pb
            children[pb.other(v)].append((v, pb))
            used_edges.add(id(pb))
        for w, bond in reversed(adj[v]):
            if not visited[w]:
                stack.append((w, bond))
    if not all(visited):
        raise UnsupportedFeature("disconnected graphs are not writable")
    rank = {v: k for k, v in enumerate(order)}
    for bond in g.bonds:
        if id(bond) not in used_edges:
            first, second = sorted((bond.a, bond.b), key=rank.__getitem__)
            closures[first].append((second, bond))
            closures[second].append((first, bond))
    for row in closures:
        row.sort(key=lambda item: rank[item[0]])

    bond_orders = [[b.order for _, b in adj[i]] for i in range(n)]
    out: list[str] = []
    free_labels: list[int] = []
    next_label = 1
    open_labels: dict[int, int] = {}  # id(bond) -> label

    def emit(v: int) -> None:
        nonlocal next_label
        written: list[int] = []
        if parent_bond[v] is not None:
            written.append(parent_bond[v].other(v))
        ring_tokens = []
        for w, bond in closures[v]:
            if id(bond) in open_labels:
                label = open_labels.pop(id(bond))
                free_labels.append(label)
                free_labels.sort()
                ring_tokens.append(_ring_label(label))
            else:
                if free_labels:
                    label = free_labels.pop(0)
                else:
                    label = next_label
                    next_label += 1
                if label > 99:
                    raise UnsupportedFeature("more than 99 simultaneous ring closures")
                open_labels[id(bond)] = label
                ring_tokens.append(_bond_token(g, bond) + _ring_label(label))
            written.append(w)
        kids = sorted(children[v], key=lambda item: rank[item[0]])
        written.extend(w for w, _ in kids)
        atom = g.atoms[v]
        chir = atom.chirality
        if chir is not Chirality.NONE:
            seq = list(written)
            if atom.total_h:
                seq.insert(1 if parent_bond[v] is not None else 0, _H)
            canon = _canonical_order(g.neighbors(v), atom.total_h > 0)
            if _permutation_parity(seq, canon):
                chir = chir.flipped()
        out.append(_atom_token(g, v, bond_orders[v], chir))
        out.extend(ring_tokens)
        for k, (w, bond) in enumerate(kids):
            last = k == len(kids) - 1
            if not last:
                out.append("(")
            out.append(_bond_token(g, bond))
            emit(w)
            if not last:
                out.append(")")

    limit = sys.getrecursionlimit()
    if n + 100 > limit:
        sys.setrecursionlimit(n + 100)
    try:
        emit(0)
    finally:
        sys.setrecursionlimit(limit)
    return "".join(out)
