"""Versioned JSON checkpoints and the training-history CSV."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from ..gnn.model import ModelConfig, parameter_shapes
from .loop import ModelCheckpoint, TrainConfig, TrainHistory

FORMAT_VERSION = "1"


class FormatError(ValueError):
    pass


class VersionMismatch(FormatError):
    pass


def checkpoint_to_dict(ckpt: ModelCheckpoint) -> dict:
    # float repr is the shortest string that parses back to the same double
    return {
        "format_version": FORMAT_VERSION,
        "architecture": ckpt.model_config.architecture,
        "model_config": ckpt.model_config.to_dict(),
        "params": {
            name: {"shape": list(value.shape), "data": [float(x) for x in value.reshape(-1)]}
            for name, value in ckpt.params.items()
        },
        "label_mean": ckpt.label_mean,
        "label_std": ckpt.label_std,
        "train_config": ckpt.train_config.to_dict(),
        "best_val_loss": ckpt.best_val_loss,
        "epoch_of_best": ckpt.epoch_of_best,
    }


def _field(doc: dict, key: str):
    if key not in doc:
        raise FormatError(f"checkpoint is missing {key!r}")
    return doc[key]


def _finite(value, key: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise FormatError(f"{key!r} must be a finite number, got {value!r}")
    return float(value)


def checkpoint_from_dict(doc: dict) -> ModelCheckpoint:
    if not isinstance(doc, dict):
        raise FormatError("checkpoint document must be a mapping")
    version = _field(doc, "format_version")
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"checkpoint format {version!r}, expected {FORMAT_VERSION!r}")
    try:
        config = ModelConfig(**_field(doc, "model_config"))
        train_config = TrainConfig(**_field(doc, "train_config"))
    except (TypeError, ValueError) as exc:
        raise FormatError(f"bad configuration block: {exc}") from None
    if _field(doc, "architecture") != config.architecture:
        raise FormatError("architecture field disagrees with model_config")
    shapes = parameter_shapes(config)
    raw = _field(doc, "params")
    if not isinstance(raw, dict) or set(raw) != set(shapes):
        raise FormatError("parameter names do not match the architecture")
    params = {}
    for name, shape in shapes.items():
        entry = raw[name]
        try:
            stored_shape = tuple(int(s) for s in entry["shape"])
            data = np.array(entry["data"], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"parameter {name!r} is malformed: {exc}") from None
        if stored_shape != shape or data.size != int(np.prod(shape, dtype=np.int64)):
            raise FormatError(f"parameter {name!r} has shape {stored_shape}, expected {shape}")
        if not np.all(np.isfinite(data)):
            raise FormatError(f"parameter {name!r} has non-finite entries")
        params[name] = data.reshape(shape)
    label_std = _finite(_field(doc, "label_std"), "label_std")
    if label_std <= 0:
        raise FormatError("label_std must be positive")
    epoch = _field(doc, "epoch_of_best")
    if isinstance(epoch, bool) or not isinstance(epoch, int):
        raise FormatError("epoch_of_best must be an integer")
    return ModelCheckpoint(
        model_config=config,
        params=params,
        label_mean=_finite(_field(doc, "label_mean"), "label_mean"),
        label_std=label_std,
        train_config=train_config,
        best_val_loss=_finite(_field(doc, "best_val_loss"), "best_val_loss"),
        epoch_of_best=epoch,
    )


def save_checkpoint(ckpt: ModelCheckpoint, path: str | Path) -> None:
    Path(path).write_text(json.dumps(checkpoint_to_dict(ckpt), indent=1) + "\n")


def load_checkpoint(path: str | Path) -> ModelCheckpoint:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not a JSON document ({exc})") from None
    return checkpoint_from_dict(doc)


def write_history(history: TrainHistory, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_wmse", "val_wmse", "seconds"])
        for row in zip(history.epoch, history.train_wmse, history.val_wmse, history.seconds):
            w.writerow([row[0], repr(row[1]), repr(row[2]), f"{row[3]:.3f}"])


def read_history(path: str | Path) -> TrainHistory:
    h = TrainHistory()
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["epoch", "train_wmse", "val_wmse", "seconds"]:
            raise FormatError(f"{path}: unexpected history header {reader.fieldnames}")
        for row in reader:
            h.append(int(row["epoch"]), float(row["train_wmse"]), float(row["val_wmse"]),
                     float(row["seconds"]))
    return h
