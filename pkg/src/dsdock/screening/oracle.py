"""Synthetic docking oracle: a structural score plus content-keyed noise."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..molgraph.canonical import graph_signature
from ..molgraph.graph import MolecularGraph

DEFAULT_WEIGHTS = (1.0, 2.0, 1.5, 0.5, 0.1)
NOISE_BASE_FRACTION = 0.25


@dataclass(frozen=True)
class OracleParams:
    """Weights order: aromatic atoms, rings, heteroatoms, mean degree, heavy atoms.

    ``noise_base`` and ``median_raw`` left as None are filled in by
    :func:`calibrate` from a library. Without a reference median the
    slope term has nothing to measure against and is dropped.
    """

    weights: tuple[float, float, float, float, float] = DEFAULT_WEIGHTS
    noise_base: float | None = None
    noise_slope: float = 0.1
    nan_fraction: float = 0.01
    seed: int = 0
    median_raw: float | None = None

    def __post_init__(self):
        w = tuple(float(x) for x in self.weights)
        if len(w) != 5:
            raise ValueError(f"expected 5 oracle weights, got {len(w)}")
        object.__setattr__(self, "weights", w)
        if self.noise_base is not None and self.noise_base < 0:
            raise ValueError("noise_base must be non-negative")
        if not 0.0 <= self.nan_fraction <= 1.0:
            raise ValueError("nan_fraction must lie in [0, 1]")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")

    @property
    def calibrated(self) -> bool:
        return self.noise_base is not None

    def to_dict(self) -> dict:
        return {"weights": list(self.weights), "noise_base": self.noise_base,
                "noise_slope": self.noise_slope, "nan_fraction": self.nan_fraction,
                "seed": self.seed, "median_raw": self.median_raw}


def structural_terms(g: MolecularGraph) -> np.ndarray:
    """[aromatic atoms, ring count, heteroatoms, mean heavy-atom degree, heavy atoms]."""
    heavy = [i for i, a in enumerate(g.atoms) if not a.is_virtual and a.element != "H"]
    degrees = g.degrees()
    n_heavy = len(heavy)
    return np.array([
        sum(1 for i in heavy if g.atoms[i].is_aromatic),
        g.cycle_rank(),
        sum(1 for i in heavy if g.atoms[i].element != "C"),
        float(np.mean([degrees[i] for i in heavy])) if heavy else 0.0,
        n_heavy,
    ], dtype=np.float64)


def raw_score(g: MolecularGraph, p: OracleParams) -> float:
    return -float(np.dot(p.weights, structural_terms(g)))


def _noise_rng(g: MolecularGraph, seed: int) -> np.random.Generator:
    digest = int(graph_signature(g), 16)
    words = [(digest >> (32 * k)) & 0xFFFFFFFF for k in range(3)]
    return np.random.default_rng(np.random.SeedSequence([seed, *words]))


def oracle_dock(g: MolecularGraph, p: OracleParams, noise_free: bool = False) -> float:
    """Docking score of one molecule; NaN marks a failed docking run.

    Noise and failures are drawn from a stream keyed by the seed and the
    molecule's isomorphism-invariant signature, so call order and node
    numbering never matter.
    """
    raw = raw_score(g, p)
    if noise_free:
        return raw
    if not p.calibrated:
        raise ValueError("oracle noise is not calibrated; call calibrate() or set noise_base")
    rng = _noise_rng(g, p.seed)
    if rng.random() < p.nan_fraction:
        return float("nan")
    excess = 0.0 if p.median_raw is None else max(0.0, raw - p.median_raw)
    sd = p.noise_base + p.noise_slope * excess
    return raw + sd * float(rng.standard_normal())


def dock_many(graphs: list[MolecularGraph], p: OracleParams, noise_free: bool = False) -> np.ndarray:
    return np.array([oracle_dock(g, p, noise_free) for g in graphs], dtype=np.float64)


def calibrate(p: OracleParams, library: list[MolecularGraph]) -> OracleParams:
    """Fill unset ``noise_base`` (a quarter of the raw-score spread) and ``median_raw``."""
    raw = dock_many(library, p, noise_free=True)
    updates = {}
    if p.noise_base is None:
        updates["noise_base"] = NOISE_BASE_FRACTION * float(np.std(raw))
    if p.median_raw is None:
        updates["median_raw"] = float(np.median(raw))
    return replace(p, **updates)
