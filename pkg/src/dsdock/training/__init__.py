"""Loss, optimizer, training loop and checkpoint files for the surrogate."""

from .checkpoint import (
    FORMAT_VERSION,
    FormatError,
    VersionMismatch,
    checkpoint_from_dict,
    checkpoint_to_dict,
    load_checkpoint,
    read_history,
    save_checkpoint,
    write_history,
)
from .loop import Divergence, LabeledDataset, ModelCheckpoint, TrainConfig, TrainHistory, train
from .loss import DegenerateLabels, LabelScaler, sample_weights, standardize_labels, wmse, wmse_loss
from .optim import Adam, AdamState, adam_step

__all__ = [
    "Adam", "AdamState", "DegenerateLabels", "Divergence", "FORMAT_VERSION", "FormatError",
    "LabelScaler", "LabeledDataset", "ModelCheckpoint", "TrainConfig", "TrainHistory",
    "VersionMismatch", "adam_step", "checkpoint_from_dict", "checkpoint_to_dict",
    "load_checkpoint", "read_history", "sample_weights", "save_checkpoint", "standardize_labels",
    "train", "wmse", "wmse_loss", "write_history",
]
