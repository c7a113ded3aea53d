"""scikit-learn style wrappers around featurization and the surrogate model."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.exceptions import NotFittedError

from .gnn.model import ModelConfig
from .molgraph.features import FeaturizedGraph, featurize
from .molgraph.graph import MolecularGraph, add_virtual_node
from .molgraph.smiles import SmilesSyntaxError, parse_smiles
from .screening.pipeline import split_indices
from .training.loop import LabeledDataset, TrainConfig, train


def check_molecules(X) -> list[MolecularGraph]:
    """Accept SMILES strings or parsed graphs; return graphs."""
    if isinstance(X, (str, bytes)):
        raise TypeError("expected a sequence of molecules, got a single string")
    try:
        items = list(X)
    except TypeError:
        raise TypeError(f"expected a sequence of molecules, got {type(X).__name__}") from None
    if not items:
        raise ValueError("no molecules given")
    out = []
    for i, item in enumerate(items):
        if isinstance(item, MolecularGraph):
            out.append(item)
        elif isinstance(item, str):
            try:
                out.append(parse_smiles(item))
            except (SmilesSyntaxError, ValueError) as exc:
                raise ValueError(f"molecule {i}: {exc}") from None
        else:
            raise TypeError(f"molecule {i} is a {type(item).__name__}, not SMILES or a graph")
    return out


def check_targets(y, n: int) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if y.size != n:
        raise ValueError(f"{n} molecules but {y.size} targets")
    return y


class MolecularGraphFeaturizer(TransformerMixin, BaseEstimator):
    """SMILES or graphs in, :class:`FeaturizedGraph` list out. Stateless."""

    def __init__(self, virtual_node: bool = True):
        self.virtual_node = virtual_node

    def fit(self, X, y=None):
        check_molecules(X)
        return self

    def transform(self, X) -> list[FeaturizedGraph]:
        graphs = check_molecules(X)
        return [featurize(add_virtual_node(g) if self.virtual_node else g) for g in graphs]


class SurrogateDockingRegressor(RegressorMixin, BaseEstimator):
    """Graph-network regressor for docking scores.

    ``fit`` drops NaN targets, holds out ``validation_fraction`` of the
    rest for checkpoint selection and trains with the weighted loss.
    ``predict`` returns scores in the units of ``y``.
    """

    def __init__(self, architecture: str = "FiLMv2", hidden_dim: int = 64, num_layers: int = 4,
                 dropout_rate: float = 0.1, learning_rate: float = 1e-3, batch_size: int = 128,
                 max_epochs: int = 300, alpha: float = 0.8, early_stop_patience: int | None = 50,
                 validation_fraction: float = 0.1, virtual_node: bool = True, random_state: int = 0):
        self.architecture = architecture
        self.hidden_dim = hidden_dim
        self.num_layers = num_layers
        self.dropout_rate = dropout_rate
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.alpha = alpha
        self.early_stop_patience = early_stop_patience
        self.validation_fraction = validation_fraction
        self.virtual_node = virtual_node
        self.random_state = random_state

    def _featurizer(self) -> MolecularGraphFeaturizer:
        return MolecularGraphFeaturizer(self.virtual_node)

    def fit(self, X, y):
        graphs = check_molecules(X)
        y = check_targets(y, len(graphs))
        keep = np.flatnonzero(~np.isnan(y))
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must lie in (0, 1)")
        feats = self._featurizer().transform([graphs[i] for i in keep])
        rng = np.random.default_rng(np.random.SeedSequence([self.random_state, 1]))
        tr, va, _ = split_indices(keep.size, (1.0 - self.validation_fraction,
                                              self.validation_fraction, 0.0), rng)
        if tr.size < 2 or va.size < 1:
            raise ValueError(f"{keep.size} labeled molecules are too few to train and validate")
        model_config = ModelConfig(self.architecture, self.hidden_dim, self.num_layers,
                                   self.dropout_rate)
        train_config = TrainConfig(self.learning_rate, self.batch_size, self.max_epochs,
                                   self.alpha, self.random_state, self.early_stop_patience)
        yk = y[keep]
        self.checkpoint_, self.history_ = train(model_config, train_config, {
            "train": LabeledDataset([feats[i] for i in tr], yk[tr], "train"),
            "val": LabeledDataset([feats[i] for i in va], yk[va], "val"),
        })
        self.n_features_in_ = model_config.input_dim
        return self

    def predict(self, X) -> np.ndarray:
        if not hasattr(self, "checkpoint_"):
            raise NotFittedError("call fit before predict")
        return self.checkpoint_.predict(self._featurizer().transform(X))
