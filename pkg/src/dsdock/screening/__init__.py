"""Docking oracle, the surrogate screening workflow and its files."""

from .io import (
    LibraryError,
    read_labeled,
    read_library,
    read_scores,
    write_labeled,
    write_library,
    write_predictions,
    write_screening_result,
)
from .oracle import OracleParams, calibrate, dock_many, oracle_dock, raw_score, structural_terms
from .pipeline import (
    REFERENCE_DOCK_SECONDS,
    BadInput,
    InsufficientData,
    PipelineConfig,
    ScreeningResult,
    compute_speedup,
    dsd_recall,
    featurize_library,
    run_dsd,
    split_indices,
)

__all__ = [
    "BadInput", "InsufficientData", "LibraryError", "OracleParams", "PipelineConfig",
    "REFERENCE_DOCK_SECONDS", "ScreeningResult", "calibrate", "compute_speedup", "dock_many",
    "dsd_recall", "featurize_library", "oracle_dock", "raw_score", "read_labeled",
    "read_library", "read_scores", "run_dsd", "split_indices", "structural_terms",
    "write_labeled", "write_library", "write_predictions", "write_screening_result",
]
