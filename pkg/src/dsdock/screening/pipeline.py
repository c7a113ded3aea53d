"""Surrogate screening: dock a sample, learn, rank everything, re-dock the best."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from ..gnn.model import ModelConfig
from ..metrics import MetricReport, RankedPair, evaluate, top_count, top_fraction
from ..molgraph.features import FeaturizedGraph, featurize
from ..molgraph.graph import MolecularGraph, add_virtual_node
from ..training.loop import LabeledDataset, ModelCheckpoint, TrainConfig, TrainHistory, train
from ..training.loss import wmse
from .oracle import OracleParams, calibrate, dock_many

log = logging.getLogger(__name__)

# average seconds per molecule of the reference campaign: 1728 GPU-hours over 128M molecules
REFERENCE_DOCK_SECONDS = 1728.0 * 3600.0 / 128e6
MIN_LABELED = 100
MIN_LIBRARY = 1000


class InsufficientData(ValueError):
    pass


class BadInput(ValueError):
    pass


def compute_speedup(t_dock: float, t_inf: float, sigma: float) -> float:
    """Full docking time over surrogate time, ``t_D / (t_inf + sigma * t_D)``."""
    if not (math.isfinite(t_dock) and t_dock > 0):
        raise BadInput(f"t_D must be positive, got {t_dock}")
    if not (math.isfinite(t_inf) and t_inf >= 0):
        raise BadInput(f"t_inf must be non-negative, got {t_inf}")
    if not 0.0 < sigma <= 1.0:
        raise BadInput(f"sigma must lie in (0, 1], got {sigma}")
    return t_dock / (t_inf + sigma * t_dock)


@dataclass(frozen=True)
class PipelineConfig:
    rho: float = 0.1
    sigma: float = 0.1
    zeta_list: tuple[float, ...] = (0.01, 0.001)
    split: tuple[float, float, float] = (0.8, 0.1, 0.1)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    seed: int = 0
    virtual_node: bool = True
    grid_points: int = 50
    dock_seconds_per_molecule: float = REFERENCE_DOCK_SECONDS
    inference_batch_size: int = 512

    def __post_init__(self):
        if not 0.0 < self.rho <= 1.0:
            raise ValueError(f"rho must lie in (0, 1], got {self.rho}")
        if not 0.0 < self.sigma <= 1.0:
            raise ValueError(f"sigma must lie in (0, 1], got {self.sigma}")
        object.__setattr__(self, "zeta_list", tuple(float(z) for z in self.zeta_list))
        object.__setattr__(self, "split", tuple(float(s) for s in self.split))
        if not self.zeta_list or any(not 0.0 < z <= 1.0 for z in self.zeta_list):
            raise ValueError(f"zeta values must lie in (0, 1], got {self.zeta_list}")
        if len(self.split) != 3 or min(self.split) < 0 or abs(sum(self.split) - 1.0) > 1e-9:
            raise ValueError(f"split must be three non-negative fractions summing to 1, got {self.split}")
        if self.dock_seconds_per_molecule <= 0:
            raise ValueError("dock_seconds_per_molecule must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["zeta_list"] = list(self.zeta_list)
        d["split"] = list(self.split)
        return d


@dataclass
class ScreeningResult:
    predictions: np.ndarray  # surrogate scores for every library molecule
    selected: np.ndarray  # indices of P, ascending
    redocked: np.ndarray  # oracle scores for P, aligned with ``selected``
    truth: np.ndarray  # noise-free oracle scores for every molecule
    sample: np.ndarray  # indices docked for training, sampling order
    surrogate_report: MetricReport  # ranking quality of the predictions on the whole library
    dsd_recall: dict[float, float]  # recall of the re-docked set with NaN failures excluded
    test_wmse: float | None
    nan_in_selection: int
    labeled_count: int
    checkpoint: ModelCheckpoint
    history: TrainHistory
    oracle: OracleParams
    timing: dict[str, float]

    @property
    def speedup(self) -> float:
        return self.timing["speedup"]

    def report(self, cfg: PipelineConfig) -> dict:
        """Deterministic summary: configuration, counts and metrics, no wall-clock values."""
        return {
            "n_library": int(self.predictions.size),
            "n_sampled": int(self.sample.size),
            "n_labeled": self.labeled_count,
            "n_selected": int(self.selected.size),
            "nan_in_selection": self.nan_in_selection,
            "sigma": cfg.sigma,
            "zeta_list": list(cfg.zeta_list),
            "dsd_recall": [{"zeta": z, "recall": r} for z, r in self.dsd_recall.items()],
            "test_wmse": self.test_wmse,
            "best_val_wmse": self.checkpoint.best_val_loss,
            "epoch_of_best": self.checkpoint.epoch_of_best,
            "epochs_run": len(self.history),
            "surrogate_metrics": self.surrogate_report.to_dict(),
            "oracle": self.oracle.to_dict(),
            "config": cfg.to_dict(),
        }


def featurize_library(graphs: list[MolecularGraph], virtual_node: bool = True) -> list[FeaturizedGraph]:
    return [featurize(add_virtual_node(g) if virtual_node else g) for g in graphs]


def split_indices(n: int, fractions: tuple[float, float, float],
                  rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Seeded shuffle cut into train/val/test by rounded fractions."""
    perm = rng.permutation(n)
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    return perm[:n_train], perm[n_train:n_train + n_val], perm[n_train + n_val:]


def dsd_recall(truth: np.ndarray, selected: np.ndarray, redocked: np.ndarray, zeta: float) -> float:
    """Share of the true top-zeta recovered by the re-docked selection.

    Selected molecules whose re-docking failed (NaN) are removed from both
    the hits and the pool of true top-zeta molecules.
    """
    kz = top_count(zeta, truth.size)
    true_top = set(np.argsort(truth, kind="stable")[:kz].tolist())
    failed = set(selected[np.isnan(redocked)].tolist())
    found = set(selected[~np.isnan(redocked)].tolist())
    pool = true_top - failed
    if not pool:
        return float("nan")
    return len(found & pool) / len(pool)


def run_dsd(library: list[MolecularGraph], cfg: PipelineConfig, oracle: OracleParams,
            featurized: list[FeaturizedGraph] | None = None) -> ScreeningResult:
    """The full workflow on ``library``; see :class:`ScreeningResult` for outputs.

    ``featurized`` may carry precomputed features for the library (same
    order, same virtual-node setting) to skip recomputation.
    """
    n = len(library)
    if n < MIN_LIBRARY:
        raise InsufficientData(f"library has {n} molecules, need at least {MIN_LIBRARY}")
    sample_ss, split_ss = np.random.SeedSequence(cfg.seed).spawn(2)
    oracle = calibrate(oracle, library)
    truth = dock_many(library, oracle, noise_free=True)

    sample = np.random.default_rng(sample_ss).choice(n, size=top_count(cfg.rho, n), replace=False)
    labels = dock_many([library[i] for i in sample], oracle)
    keep = ~np.isnan(labels)
    labeled, labels = sample[keep], labels[keep]
    if labeled.size < MIN_LABELED:
        raise InsufficientData(f"only {labeled.size} labeled molecules after dropping NaN, "
                               f"need {MIN_LABELED}")
    log.info("docked %d of %d sampled molecules", labeled.size, sample.size)

    if featurized is None:
        featurized = featurize_library(library, cfg.virtual_node)
    elif len(featurized) != n:
        raise ValueError("featurized list does not match the library")
    tr, va, te = split_indices(labeled.size, cfg.split, np.random.default_rng(split_ss))
    parts = {
        name: LabeledDataset([featurized[i] for i in labeled[idx]], labels[idx], name)
        for name, idx in (("train", tr), ("val", va), ("test", te))
    }
    start = time.perf_counter()
    ckpt, history = train(cfg.model, cfg.train, parts)
    t_train = time.perf_counter() - start
    test_wmse = None
    if len(parts["test"]):
        z = ckpt.scaler.transform(ckpt.predict(parts["test"].graphs, cfg.inference_batch_size))
        test_wmse = wmse(z, ckpt.scaler.transform(parts["test"].labels), cfg.train.alpha)

    start = time.perf_counter()
    predictions = ckpt.predict(featurized, cfg.inference_batch_size)
    t_inf = time.perf_counter() - start

    selected = top_fraction(predictions, cfg.sigma)
    redocked = dock_many([library[i] for i in selected], oracle)
    report = evaluate(RankedPair(truth, predictions), [cfg.sigma], cfg.zeta_list, cfg.grid_points)
    recall = {z: dsd_recall(truth, selected, redocked, z) for z in cfg.zeta_list}

    t_dock_hours = n * cfg.dock_seconds_per_molecule / 3600.0
    t_inf_hours = t_inf / 3600.0
    timing = {
        "train_seconds": t_train,
        "inference_seconds": t_inf,
        "t_dock_hours_modeled": t_dock_hours,
        "t_inf_hours": t_inf_hours,
        "speedup": compute_speedup(t_dock_hours, t_inf_hours, cfg.sigma),
    }
    return ScreeningResult(
        predictions=predictions, selected=selected, redocked=redocked, truth=truth,
        sample=sample, surrogate_report=report, dsd_recall=recall, test_wmse=test_wmse,
        nan_in_selection=int(np.isnan(redocked).sum()), labeled_count=int(labeled.size),
        checkpoint=ckpt, history=history, oracle=oracle, timing=timing,
    )
