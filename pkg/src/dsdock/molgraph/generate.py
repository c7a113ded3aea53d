"""Seeded random libraries of small drug-like graphs."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .canonical import graph_signature
from .graph import ATOMIC_NUMBERS, Atom, Bond, BondOrder, MolecularGraph, assign_conjugation, implicit_hydrogens
from .smiles import parse_smiles, write_smiles

log = logging.getLogger(__name__)

GENERATOR_ELEMENTS = ("C", "N", "O", "S", "F", "Cl")
_CAPACITY = {"C": 4, "N": 3, "O": 2, "S": 2, "F": 1, "Cl": 1}


class GenerationFailure(RuntimeError):
    pass


def _default_weights() -> dict[str, float]:
    return {"C": 0.72, "N": 0.12, "O": 0.11, "S": 0.02, "F": 0.015, "Cl": 0.015}


@dataclass(frozen=True)
class GeneratorParams:
    atom_count_range: tuple[int, int] = (8, 30)
    element_weights: dict[str, float] = field(default_factory=_default_weights)
    ring_closure_count_range: tuple[int, int] = (0, 2)
    aromatic_ring_probability: float = 0.35
    seed: int = 0
    double_bond_probability: float = 0.08
    triple_bond_probability: float = 0.01
    aromatic_nitrogen_probability: float = 0.12
    max_retries: int = 200

    def __post_init__(self):
        lo, hi = self.atom_count_range
        if not 1 <= lo <= hi:
            raise ValueError(f"atom_count_range must satisfy 1 <= lo <= hi, got {self.atom_count_range}")
        rlo, rhi = self.ring_closure_count_range
        if not 0 <= rlo <= rhi:
            raise ValueError(f"bad ring_closure_count_range {self.ring_closure_count_range}")
        unknown = set(self.element_weights) - set(GENERATOR_ELEMENTS)
        if unknown:
            raise ValueError(f"element_weights has unsupported elements {sorted(unknown)}")
        weights = np.array(list(self.element_weights.values()), dtype=float)
        if weights.size == 0 or np.any(weights < 0) or weights.sum() <= 0:
            raise ValueError("element_weights must be non-negative with positive total")
        if sum(w for e, w in self.element_weights.items() if _CAPACITY[e] > 1) <= 0:
            raise ValueError("element_weights needs at least one non-halogen element")
        for name in ("aromatic_ring_probability", "double_bond_probability",
                     "triple_bond_probability", "aromatic_nitrogen_probability"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {p}")


class _Builder:
    def __init__(self):
        self.elements: list[str] = []
        self.aromatic: list[bool] = []
        self.bonds: list[tuple[int, int, BondOrder]] = []
        self.used: list[float] = []

    def spare(self, i: int) -> int:
        return _CAPACITY[self.elements[i]] - int(np.floor(self.used[i] + 0.5))

    def add_atom(self, element: str, aromatic: bool = False) -> int:
        self.elements.append(element)
        self.aromatic.append(aromatic)
        self.used.append(0.0)
        return len(self.elements) - 1

    def bond(self, a: int, b: int, order: BondOrder) -> None:
        self.bonds.append((a, b, order))
        self.used[a] += order.valence
        self.used[b] += order.valence

    def aromatic_ring(self, rng, p_nitrogen: float) -> int:
        first = len(self.elements)
        for k in range(6):
            element = "N" if k > 0 and rng.random() < p_nitrogen else "C"
            self.add_atom(element, aromatic=True)
        for k in range(6):
            self.bond(first + k, first + (k + 1) % 6, BondOrder.AROMATIC)
        return first

    def distances_from(self, src: int) -> list[int]:
        n = len(self.elements)
        adj = [[] for _ in range(n)]
        for a, b, _ in self.bonds:
            adj[a].append(b)
            adj[b].append(a)
        dist = [-1] * n
        dist[src] = 0
        frontier = [src]
        while frontier:
            nxt = []
            for v in frontier:
                for w in adj[v]:
                    if dist[w] < 0:
                        dist[w] = dist[v] + 1
                        nxt.append(w)
            frontier = nxt
        return dist

    def graph(self) -> MolecularGraph:
        orders: list[list[BondOrder]] = [[] for _ in self.elements]
        for a, b, o in self.bonds:
            orders[a].append(o)
            orders[b].append(o)
        atoms = []
        for i, el in enumerate(self.elements):
            atom = Atom(el, ATOMIC_NUMBERS[el], is_aromatic=self.aromatic[i])
            atoms.append(Atom(el, ATOMIC_NUMBERS[el], is_aromatic=self.aromatic[i],
                              implicit_h=implicit_hydrogens(atom, orders[i])))
        bonds = assign_conjugation(atoms, [Bond(a, b, o) for a, b, o in self.bonds])
        return MolecularGraph(tuple(atoms), tuple(bonds))


def _sample_molecule(p: GeneratorParams, rng: np.random.Generator) -> MolecularGraph:
    lo, hi = p.atom_count_range
    target = int(rng.integers(lo, hi + 1))
    elements = list(p.element_weights)
    weights = np.array([p.element_weights[e] for e in elements], dtype=float)
    weights /= weights.sum()
    heavy = np.array([_CAPACITY[e] > 1 for e in elements])
    heavy_weights = np.where(heavy, weights, 0.0)
    heavy_weights /= heavy_weights.sum()

    rings = 0
    for _ in range(target // 10 + 1):
        if (rings + 1) * 6 <= target and rng.random() < p.aromatic_ring_probability:
            rings += 1
    units = ["ring"] * rings + ["atom"] * (target - 6 * rings)
    rng.shuffle(units)

    b = _Builder()
    for k, unit in enumerate(units):
        if k == 0:
            if unit == "ring":
                b.aromatic_ring(rng, p.aromatic_nitrogen_probability)
            else:
                b.add_atom(elements[rng.choice(len(elements), p=heavy_weights)])
            continue
        candidates = [i for i in range(len(b.elements)) if b.spare(i) >= 1]
        if not candidates:
            raise GenerationFailure("no atom with spare valence to grow from")
        parent = candidates[int(rng.integers(len(candidates)))]
        if unit == "ring":
            child = b.aromatic_ring(rng, p.aromatic_nitrogen_probability)
            b.bond(parent, child, BondOrder.SINGLE)
            continue
        child = b.add_atom(elements[rng.choice(len(elements), p=weights)])
        room = min(b.spare(parent), b.spare(child))
        order = BondOrder.SINGLE
        u = rng.random()
        if room >= 3 and u < p.triple_bond_probability:
            order = BondOrder.TRIPLE
        elif room >= 2 and u < p.triple_bond_probability + p.double_bond_probability:
            order = BondOrder.DOUBLE
        b.bond(parent, child, order)

    closures = int(rng.integers(p.ring_closure_count_range[0], p.ring_closure_count_range[1] + 1))
    for _ in range(closures):
        open_atoms = [i for i in range(len(b.elements)) if b.spare(i) >= 1]
        pairs = []
        for i in open_atoms:
            dist = b.distances_from(i)
            pairs += [(i, j) for j in open_atoms
                      if j > i and dist[j] >= 3 and not (b.aromatic[i] and b.aromatic[j])]
        if not pairs:
            raise GenerationFailure("no atom pair at distance >= 3 with spare valence")
        i, j = pairs[int(rng.integers(len(pairs)))]
        b.bond(i, j, BondOrder.SINGLE)
    return b.graph()


def generate_random_library(p: GeneratorParams, count: int) -> list[MolecularGraph]:
    """``count`` connected, valence-legal graphs, deterministic in ``p.seed``.

    Every returned graph is the parse of its own SMILES, so node order is
    first appearance in that string.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    rng = np.random.default_rng(p.seed)
    library = []
    for _ in range(count):
        for _attempt in range(p.max_retries):
            try:
                g = _sample_molecule(p, rng)
            except GenerationFailure:
                continue
            reparsed = parse_smiles(write_smiles(g))
            if graph_signature(reparsed) == graph_signature(g):
                library.append(reparsed)
                break
            log.debug("round-trip mismatch, resampling")
        else:
            raise GenerationFailure(f"gave up after {p.max_retries} attempts")
    return library
