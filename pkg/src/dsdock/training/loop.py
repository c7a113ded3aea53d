"""Mini-batch training with best-validation checkpointing."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .. import diffcore as dc
from ..gnn.layers import Topology
from ..gnn.model import ModelConfig, SurrogateModel, predict_graphs
from ..molgraph.features import FeaturizedGraph, collate
from .loss import DegenerateLabels, LabelScaler, wmse, wmse_loss
from .optim import Adam

log = logging.getLogger(__name__)


class Divergence(RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, message: str, history: "TrainHistory"):
        super().__init__(message)
        self.history = history


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 128
    max_epochs: int = 300
    alpha: float = 0.8
    seed: int = 0
    early_stop_patience: int | None = 50

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.alpha < 0:
            raise ValueError(f"alpha must be non-negative, got {self.alpha}")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch_size and max_epochs must be positive")
        if self.early_stop_patience is not None and self.early_stop_patience < 1:
            raise ValueError("early_stop_patience must be positive or None")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class LabeledDataset:
    graphs: list[FeaturizedGraph]
    labels: np.ndarray
    split_tag: str = "train"

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.float64).reshape(-1)
        if len(self.graphs) != self.labels.size:
            raise ValueError(f"{len(self.graphs)} graphs but {self.labels.size} labels")
        if not np.all(np.isfinite(self.labels)):
            raise ValueError("labels must be finite; drop NaN rows before training")
        if self.split_tag not in ("train", "val", "test"):
            raise ValueError(f"unknown split tag {self.split_tag!r}")

    def __len__(self) -> int:
        return self.labels.size


@dataclass
class TrainHistory:
    epoch: list[int] = field(default_factory=list)
    train_wmse: list[float] = field(default_factory=list)
    val_wmse: list[float] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)

    def append(self, epoch: int, train: float, val: float, seconds: float) -> None:
        self.epoch.append(epoch)
        self.train_wmse.append(train)
        self.val_wmse.append(val)
        self.seconds.append(seconds)

    def __len__(self) -> int:
        return len(self.epoch)


@dataclass
class ModelCheckpoint:
    model_config: ModelConfig
    params: dict[str, np.ndarray]
    label_mean: float
    label_std: float
    train_config: TrainConfig
    best_val_loss: float
    epoch_of_best: int

    def __post_init__(self):
        if not self.label_std > 0:
            raise DegenerateLabels("label_std must be positive")

    def model(self) -> SurrogateModel:
        return SurrogateModel(self.model_config, self.params)

    @property
    def scaler(self) -> LabelScaler:
        return LabelScaler(self.label_mean, self.label_std)

    def predict(self, graphs: list[FeaturizedGraph], batch_size: int = 512) -> np.ndarray:
        """Scores in docking-score units (standardization undone)."""
        z = predict_graphs(self.model(), graphs, batch_size)
        return self.scaler.inverse_transform(z)


def _streams(seed: int) -> tuple[int, np.random.Generator, np.random.Generator]:
    init, shuffle, drop = np.random.SeedSequence(seed).spawn(3)
    init_seed = int(init.generate_state(1, dtype=np.uint32)[0])
    return init_seed, np.random.default_rng(shuffle), np.random.default_rng(drop)


def train(model_config: ModelConfig, train_config: TrainConfig,
          datasets: dict[str, LabeledDataset]) -> tuple[ModelCheckpoint, TrainHistory]:
    """Fit a fresh surrogate on ``datasets['train']``, selecting on ``datasets['val']``.

    Labels are standardized with training statistics. Each epoch reshuffles
    the training set with a seeded generator, takes one Adam step per
    mini-batch, then scores the validation set with dropout off. The
    returned checkpoint holds the parameters of the best validation epoch.
    """
    train_set, val_set = datasets["train"], datasets["val"]
    if len(train_set) == 0 or len(val_set) == 0:
        raise ValueError("train and val splits must be non-empty")
    if {id(g) for g in train_set.graphs} & {id(g) for g in val_set.graphs}:
        raise ValueError("train and val splits share graph objects")
    scaler = LabelScaler.fit(train_set.labels)
    y_train = scaler.transform(train_set.labels)
    y_val = scaler.transform(val_set.labels)
    tc = train_config

    init_seed, shuffle_rng, dropout_rng = _streams(tc.seed)
    model = SurrogateModel(model_config, seed=init_seed)
    params = model.parameters()
    opt = Adam([p.data for p in params], lr=tc.learning_rate)

    history = TrainHistory()
    best = (np.inf, 0, model.state_dict())
    n = len(train_set)
    for epoch in range(1, tc.max_epochs + 1):
        start = time.perf_counter()
        order = shuffle_rng.permutation(n)
        total = 0.0
        for lo in range(0, n, tc.batch_size):
            idx = order[lo:lo + tc.batch_size]
            batch = collate([train_set.graphs[i] for i in idx])
            z = model.forward(Topology(batch), batch.node_features, training=True, rng=dropout_rng)
            loss = wmse_loss(z, y_train[idx], tc.alpha)
            grads = dc.backward(loss, params)
            opt.step(grads)
            total += loss.item() * idx.size
        train_loss = total / n
        val_loss = wmse(predict_graphs(model, val_set.graphs), y_val, tc.alpha)
        history.append(epoch, train_loss, val_loss, time.perf_counter() - start)
        if not (np.isfinite(train_loss) and np.isfinite(val_loss)):
            raise Divergence(f"non-finite loss at epoch {epoch}: train={train_loss} val={val_loss}",
                             history)
        if val_loss < best[0]:
            best = (val_loss, epoch, model.state_dict())
        log.debug("epoch %d train %.5f val %.5f", epoch, train_loss, val_loss)
        if tc.early_stop_patience is not None and epoch - best[1] >= tc.early_stop_patience:
            log.info("early stop at epoch %d (best %d)", epoch, best[1])
            break

    ckpt = ModelCheckpoint(model_config, best[2], scaler.mean, scaler.std, tc, float(best[0]), best[1])
    return ckpt, history
