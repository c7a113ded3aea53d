"""Library, labeled-data and screening-result files."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from ..molgraph.graph import MolecularGraph
from ..molgraph.smiles import SmilesSyntaxError, UnsupportedFeature, parse_smiles, write_smiles
from ..training.checkpoint import save_checkpoint, write_history
from .pipeline import PipelineConfig, ScreeningResult


class LibraryError(ValueError):
    """A library or dataset line could not be read; ``line`` is 1-based."""

    def __init__(self, path, line: int, reason: str):
        super().__init__(f"{path}, line {line}: {reason}")
        self.line = line


def format_float(x: float) -> str:
    """Round-trip decimal text; NaN is written as ``NaN``."""
    return "NaN" if math.isnan(x) else repr(float(x))


def read_library(path: str | Path) -> tuple[list[str], list[MolecularGraph]]:
    """One SMILES per line; blank lines are errors so line numbers stay meaningful."""
    smiles, graphs = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.rstrip("\n").rstrip("\r")
            try:
                graphs.append(parse_smiles(text))
            except (SmilesSyntaxError, ValueError) as exc:
                raise LibraryError(path, lineno, str(exc)) from None
            smiles.append(text)
    return smiles, graphs


def write_library(graphs: list[MolecularGraph], path: str | Path) -> list[str]:
    try:
        smiles = [write_smiles(g) for g in graphs]
    except UnsupportedFeature as exc:
        raise ValueError(f"cannot write library: {exc}") from None
    Path(path).write_text("".join(s + "\n" for s in smiles))
    return smiles


def write_labeled(smiles: list[str], scores, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["smiles", "dock_score"])
        for s, y in zip(smiles, scores):
            w.writerow([s, format_float(y)])


def read_labeled(path: str | Path) -> tuple[list[str], list[MolecularGraph], np.ndarray]:
    smiles, graphs, scores = [], [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["smiles", "dock_score"]:
            raise LibraryError(path, 1, f"expected header smiles,dock_score, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 2:
                raise LibraryError(path, lineno, f"expected 2 fields, got {len(row)}")
            try:
                graphs.append(parse_smiles(row[0]))
                scores.append(float(row[1]))
            except (SmilesSyntaxError, ValueError) as exc:
                raise LibraryError(path, lineno, str(exc)) from None
            smiles.append(row[0])
    return smiles, graphs, np.array(scores, dtype=np.float64)


def write_predictions(smiles: list[str], scores, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "smiles", "pred_score"])
        for i, (s, y) in enumerate(zip(smiles, scores)):
            w.writerow([i, s, format_float(y)])


def read_scores(path: str | Path, column: str) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or column not in reader.fieldnames:
            raise LibraryError(path, 1, f"no {column!r} column")
        return np.array([float(row[column]) for row in reader], dtype=np.float64)


def write_json(doc, path: str | Path) -> None:
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True, allow_nan=False) + "\n")


def _json_safe(x):
    if isinstance(x, float) and math.isnan(x):
        return None
    if isinstance(x, dict):
        return {k: _json_safe(v) for k, v in x.items()}
    if isinstance(x, list):
        return [_json_safe(v) for v in x]
    return x


def write_screening_result(result: ScreeningResult, smiles: list[str], cfg: PipelineConfig,
                           outdir: str | Path) -> dict[str, Path]:
    """Predictions, selection, report, timing, checkpoint and training history.

    Everything except ``timing.json`` and ``history.csv`` is a pure
    function of the inputs and seeds.
    """
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {name: out / name for name in (
        "predictions.csv", "selection.csv", "report.json", "timing.json",
        "checkpoint.json", "history.csv")}
    write_predictions(smiles, result.predictions, paths["predictions.csv"])
    with open(paths["selection.csv"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "smiles", "pred_score", "dock_score"])
        for i, y in zip(result.selected, result.redocked):
            w.writerow([int(i), smiles[i], format_float(result.predictions[i]), format_float(y)])
    write_json(_json_safe(result.report(cfg)), paths["report.json"])
    write_json(result.timing, paths["timing.json"])
    save_checkpoint(result.checkpoint, paths["checkpoint.json"])
    write_history(result.history, paths["history.csv"])
    return paths
