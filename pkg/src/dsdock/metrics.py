"""Rank-based screening metrics.

Lower scores are better throughout: the "top" fraction of a score vector
is its smallest entries. Recall surfaces use log-spaced fractions.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import rankdata


class BadFraction(ValueError):
    pass


class TooFewItems(ValueError):
    pass


class CoarseGridWarning(UserWarning):
    """The fraction grid is finer than the number of items can resolve."""


def _check_fraction(f: float, name: str = "fraction") -> float:
    f = float(f)
    if not 0.0 < f <= 1.0:
        raise BadFraction(f"{name} must lie in (0, 1], got {f}")
    return f


def top_count(f: float, n: int) -> int:
    """k = ceil(f * n), ignoring representation error below 1e-9.

    Without the rounding, 0.07 * 100 would give 8 rather than 7.
    """
    f = _check_fraction(f)
    if n < 1:
        raise TooFewItems("need at least one item")
    return max(1, min(n, math.ceil(round(f * n, 9))))


def _as_scores(x, name: str) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64).reshape(-1)
    if a.size == 0:
        raise TooFewItems(f"{name} is empty")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite values; drop them first")
    return a


def ranks(scores) -> np.ndarray:
    """Position of every item in the stable ascending order (0 = best)."""
    order = np.argsort(scores, kind="stable")
    r = np.empty(order.size, dtype=np.int64)
    r[order] = np.arange(order.size)
    return r


def top_fraction(scores, f: float) -> np.ndarray:
    """Indices of the ceil(f*n) smallest scores, ties to the lower index."""
    s = _as_scores(scores, "scores")
    k = top_count(f, s.size)
    return np.sort(np.argsort(s, kind="stable")[:k])


@dataclass(frozen=True)
class RankedPair:
    y_true: np.ndarray
    y_pred: np.ndarray

    def __post_init__(self):
        t = _as_scores(self.y_true, "y_true")
        p = _as_scores(self.y_pred, "y_pred")
        if t.size != p.size:
            raise ValueError(f"y_true has {t.size} items, y_pred {p.size}")
        object.__setattr__(self, "y_true", t)
        object.__setattr__(self, "y_pred", p)

    @property
    def n(self) -> int:
        return self.y_true.size


def _pair(rp_or_true, y_pred=None) -> RankedPair:
    if isinstance(rp_or_true, RankedPair):
        return rp_or_true
    return RankedPair(rp_or_true, y_pred)


def hits(rp: RankedPair, sigma: float, zeta: float) -> tuple[int, int, int]:
    """(|top_sigma(pred) & top_zeta(true)|, k_sigma, k_zeta)."""
    ks, kz = top_count(sigma, rp.n), top_count(zeta, rp.n)
    both = (ranks(rp.y_pred) < ks) & (ranks(rp.y_true) < kz)
    return int(both.sum()), ks, kz


def recall_at(rp: RankedPair, sigma: float, zeta: float) -> float:
    """R_{sigma,zeta}: share of the true top-zeta found in the predicted top-sigma."""
    _check_fraction(sigma, "sigma")
    _check_fraction(zeta, "zeta")
    tp, _, kz = hits(rp, sigma, zeta)
    return tp / kz


def log_grid(points: int = 50, low: float = 1e-3) -> np.ndarray:
    if points < 2:
        raise ValueError("grid needs at least two points")
    return np.logspace(math.log10(low), 0.0, points)


def _hit_counts(rp: RankedPair, k_sigma: np.ndarray, k_zeta: np.ndarray) -> np.ndarray:
    """Intersection sizes for every (k_sigma[i], k_zeta[j]) via a 2-D cumulative count.

    Thresholds must be non-decreasing.
    """
    # an item is inside top-k iff its rank < k; bin each item by the first
    # threshold that admits it, then accumulate
    bs = np.searchsorted(k_sigma, ranks(rp.y_pred), side="right")
    bz = np.searchsorted(k_zeta, ranks(rp.y_true), side="right")
    counts = np.zeros((k_sigma.size + 1, k_zeta.size + 1), dtype=np.int64)
    np.add.at(counts, (bs, bz), 1)
    return counts.cumsum(axis=0).cumsum(axis=1)[:-1, :-1]


@dataclass
class ResSurface:
    sigma_grid: np.ndarray
    zeta_grid: np.ndarray
    recall: np.ndarray  # recall[i, j] at (sigma_grid[i], zeta_grid[j])
    res_score: float

    def rows(self):
        for i, s in enumerate(self.sigma_grid):
            for j, z in enumerate(self.zeta_grid):
                yield float(s), float(z), float(self.recall[i, j])


def res_surface(rp: RankedPair, grid_points: int = 50, low: float = 1e-3) -> ResSurface:
    """Normalized recall |hits| / min(k_sigma, k_zeta) over a log grid, and its mean."""
    if rp.n < round(1.0 / low):
        warnings.warn(f"{rp.n} items cannot resolve fractions down to {low}; "
                      "neighbouring grid points will share rank cut-offs", CoarseGridWarning,
                      stacklevel=2)
    grid = log_grid(grid_points, low)
    k = np.array([top_count(f, rp.n) for f in grid])
    tp = _hit_counts(rp, k, k)
    rec = tp / np.minimum.outer(k, k)
    return ResSurface(grid, grid.copy(), rec, float(rec.mean()))


@dataclass
class RecallCurve:
    zeta: float
    sigma_grid: np.ndarray
    recall: np.ndarray


def rtc(rp: RankedPair, zeta: float, grid_points: int = 50, low: float = 1e-3) -> RecallCurve:
    """Normalized recall against sigma on the log grid, zeta fixed."""
    _check_fraction(zeta, "zeta")
    grid = log_grid(grid_points, low)
    ks = np.array([top_count(f, rp.n) for f in grid])
    kz = top_count(zeta, rp.n)
    tp = _hit_counts(rp, ks, np.array([kz]))[:, 0]
    return RecallCurve(float(zeta), grid, tp / np.minimum(ks, kz))


def aurtc(curve: RecallCurve) -> float:
    """Trapezoid area over log10(sigma), divided by the log-range width."""
    x = np.log10(curve.sigma_grid)
    return float(np.trapezoid(curve.recall, x) / (x[-1] - x[0]))


def auroc(rp: RankedPair, zeta: float) -> float:
    """Area under ROC for recovering the true top-zeta from -y_pred, midrank ties.

    Undefined (NaN) when every item is a positive.
    """
    kz = top_count(zeta, rp.n)
    positive = ranks(rp.y_true) < kz
    n_pos, n_neg = int(positive.sum()), int(rp.n - positive.sum())
    if n_neg == 0:
        return float("nan")
    r = rankdata(-rp.y_pred, method="average")
    return float((r[positive].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


@dataclass(frozen=True)
class Classification:
    precision: float
    recall: float
    f1: float
    auroc: float
    true_positives: int
    k_sigma: int
    k_zeta: int


def classification_metrics(rp: RankedPair, sigma: float, zeta: float) -> Classification:
    """Precision TP/k_sigma, recall TP/k_zeta, F1, and the (sigma-free) AUROC."""
    _check_fraction(sigma, "sigma")
    _check_fraction(zeta, "zeta")
    tp, ks, kz = hits(rp, sigma, zeta)
    precision, recall = tp / ks, tp / kz
    f1 = 0.0 if tp == 0 else 2 * precision * recall / (precision + recall)
    return Classification(precision, recall, f1, auroc(rp, zeta), tp, ks, kz)


@dataclass
class MetricReport:
    n: int
    res_score: float
    grid_points: int
    aurtc: dict[float, float] = field(default_factory=dict)
    auroc: dict[float, float] = field(default_factory=dict)
    pairs: list[dict] = field(default_factory=list)

    def recall(self, sigma: float, zeta: float) -> float:
        for row in self.pairs:
            if row["sigma"] == sigma and row["zeta"] == zeta:
                return row["recall"]
        raise KeyError((sigma, zeta))

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "res_score": self.res_score,
            "grid_points": self.grid_points,
            "aurtc": [{"zeta": z, "value": v} for z, v in self.aurtc.items()],
            "auroc": [{"zeta": z, "value": _nan_to_none(v)} for z, v in self.auroc.items()],
            "pairs": self.pairs,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MetricReport":
        return cls(
            n=doc["n"], res_score=doc["res_score"], grid_points=doc["grid_points"],
            aurtc={d["zeta"]: d["value"] for d in doc["aurtc"]},
            auroc={d["zeta"]: (float("nan") if d["value"] is None else d["value"])
                   for d in doc["auroc"]},
            pairs=list(doc["pairs"]),
        )


def _nan_to_none(v: float):
    return None if isinstance(v, float) and math.isnan(v) else v


def evaluate(rp: RankedPair, sigmas, zetas, grid_points: int = 50) -> MetricReport:
    """Everything in one report: RES score, AURTC and AUROC per zeta, and
    recall, precision and F1 per (sigma, zeta)."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CoarseGridWarning)
        surface = res_surface(rp, grid_points)
    report = MetricReport(rp.n, surface.res_score, grid_points)
    for z in zetas:
        report.aurtc[float(z)] = aurtc(rtc(rp, z, grid_points))
        report.auroc[float(z)] = auroc(rp, z)
    for s in sigmas:
        for z in zetas:
            c = classification_metrics(rp, s, z)
            report.pairs.append({
                "sigma": float(s), "zeta": float(z), "recall": c.recall,
                "precision": c.precision, "f1": c.f1, "true_positives": c.true_positives,
                "k_sigma": c.k_sigma, "k_zeta": c.k_zeta,
            })
    return report


def write_res_csv(surface: ResSurface, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sigma", "zeta", "recall"])
        for s, z, r in surface.rows():
            w.writerow([repr(s), repr(z), repr(r)])
