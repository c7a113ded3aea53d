"""Stacked backbone, mean pooling and regression head."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .. import diffcore as dc
from ..molgraph.features import NUM_NODE_FEATURES, FeaturizedGraph, collate
from ..molgraph.graph import NUM_RELATIONS
from . import layers

ARCHITECTURES = ("GIN", "GATv2", "FiLM", "FiLMv2", "FiLMv2Tanh", "FiLMv2SourceAct")
FILM_FAMILY = ("FiLM", "FiLMv2", "FiLMv2Tanh", "FiLMv2SourceAct")


class EmptyBatch(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    architecture: str = "FiLMv2"
    hidden_dim: int = 64
    num_layers: int = 4
    dropout_rate: float = 0.1
    input_dim: int = NUM_NODE_FEATURES

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise ValueError(f"architecture must be one of {ARCHITECTURES}, got {self.architecture!r}")
        if self.hidden_dim < 1 or self.num_layers < 1 or self.input_dim < 1:
            raise ValueError("hidden_dim, num_layers and input_dim must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")

    def to_dict(self) -> dict:
        return asdict(self)


def glorot(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def parameter_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    d, r = config.hidden_dim, NUM_RELATIONS
    shapes: dict[str, tuple[int, ...]] = {
        "input.weight": (config.input_dim, d),
        "input.bias": (d,),
    }
    for k in range(config.num_layers):
        pre = f"layers.{k}."
        if config.architecture in FILM_FAMILY:
            for name in ("w_gamma", "w_alpha", "w_beta"):
                shapes[pre + name] = (r, d, d)
        elif config.architecture == "GIN":
            shapes[pre + "w_rel"] = (r, d, d)
            shapes[pre + "eps"] = ()
            shapes[pre + "mlp_w1"] = (d, d)
            shapes[pre + "mlp_b1"] = (d,)
            shapes[pre + "mlp_w2"] = (d, d)
            shapes[pre + "mlp_b2"] = (d,)
        else:
            shapes[pre + "w_source"] = (r, d, d)
            shapes[pre + "w_target"] = (r, d, d)
            shapes[pre + "attention"] = (d, 1)
    for k in range(config.num_layers - 1):
        shapes[f"norms.{k}.gain"] = (d,)
        shapes[f"norms.{k}.bias"] = (d,)
    shapes["head.weight"] = (d, 1)
    shapes["head.bias"] = (1,)
    return shapes


def init_parameters(config: ModelConfig, seed: int) -> dict[str, np.ndarray]:
    """Glorot-uniform matrices, zero biases and eps, unit layer-norm gains."""
    rng = np.random.default_rng(seed)
    out = {}
    for name, shape in parameter_shapes(config).items():
        leaf = name.rsplit(".", 1)[1]
        if leaf == "gain":
            out[name] = np.ones(shape)
        elif len(shape) <= 1:
            out[name] = np.zeros(shape)
        elif len(shape) == 3:
            out[name] = glorot(rng, shape, shape[1], shape[2])
        else:
            out[name] = glorot(rng, shape, shape[0], shape[1])
    return out


_LAYERS = {
    "FiLM": layers.film_layer,
    "FiLMv2": layers.filmv2_layer,
    "FiLMv2Tanh": lambda h, t, p: layers.filmv2_variant_layer("tanh", h, t, p),
    "FiLMv2SourceAct": lambda h, t, p: layers.filmv2_variant_layer("source_act", h, t, p),
    "GIN": layers.gin_layer,
    "GATv2": layers.gatv2_layer,
}


class SurrogateModel:
    """Parameters plus the forward pass of the surrogate regressor.

    Scores come out in standardized label space; lower means a better
    predicted docking score.
    """

    def __init__(self, config: ModelConfig, params: dict[str, np.ndarray] | None = None,
                 seed: int = 0):
        self.config = config
        if params is None:
            params = init_parameters(config, seed)
        expected = parameter_shapes(config)
        if set(params) != set(expected):
            missing = sorted(set(expected) - set(params))
            extra = sorted(set(params) - set(expected))
            raise ValueError(f"parameter names differ: missing {missing}, unexpected {extra}")
        self.params: dict[str, dc.Tensor] = {}
        for name, shape in expected.items():
            value = np.asarray(params[name], dtype=np.float64)
            if value.shape != shape:
                raise dc.ShapeMismatch(f"{name}: expected {shape}, got {value.shape}")
            self.params[name] = dc.Tensor(value.copy(), requires_grad=True)
        self._per_layer = [self._layer_params(k) for k in range(config.num_layers)]

    def parameters(self) -> list[dc.Tensor]:
        return list(self.params.values())

    def num_parameters(self) -> int:
        return int(sum(p.data.size for p in self.params.values()))

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        for k, v in state.items():
            self.params[k].data[...] = v

    def _layer_params(self, k: int) -> dict[str, dc.Tensor]:
        pre = f"layers.{k}."
        return {name[len(pre):]: t for name, t in self.params.items() if name.startswith(pre)}

    def forward(self, batch: FeaturizedGraph | layers.Topology, x: np.ndarray | None = None,
                training: bool = False, rng: np.random.Generator | None = None) -> dc.Tensor:
        """Scores of shape (num_graphs, 1).

        ``batch`` may be a prepared :class:`Topology`, in which case node
        features ``x`` must be passed alongside.
        """
        if isinstance(batch, FeaturizedGraph):
            x = batch.node_features
            top = layers.Topology(batch)
        else:
            top = batch
        if top.num_nodes == 0 or top.num_graphs == 0:
            raise EmptyBatch("forward on an empty batch")
        if x.shape[1] != self.config.input_dim:
            raise dc.ShapeMismatch(f"node features have {x.shape[1]} columns, "
                                   f"model expects {self.config.input_dim}")
        p = self.params
        layer = _LAYERS[self.config.architecture]
        h = dc.add_bias(dc.Tensor(x) @ p["input.weight"], p["input.bias"])
        for k in range(self.config.num_layers):
            if k > 0:
                h = dc.layer_norm(h, p[f"norms.{k - 1}.gain"], p[f"norms.{k - 1}.bias"])
                h = dc.dropout(h, self.config.dropout_rate, rng, training)
                h = dc.relu(h)
            h = layer(h, top, self._per_layer[k])
        pooled = dc.segment_mean(h, top.graph_segment, top.num_graphs)
        return dc.add_bias(pooled @ p["head.weight"], p["head.bias"])

    def predict(self, batch: FeaturizedGraph) -> np.ndarray:
        with dc.no_grad():
            return self.forward(batch).data[:, 0].copy()


def forward(model: SurrogateModel, batch: FeaturizedGraph) -> np.ndarray:
    """Evaluation-mode scores, one per graph in ``batch``."""
    return model.predict(batch)


def predict_graphs(model: SurrogateModel, graphs: list[FeaturizedGraph],
                   batch_size: int = 512) -> np.ndarray:
    """Evaluation-mode scores for many graphs, collated ``batch_size`` at a time."""
    if not graphs:
        raise EmptyBatch("no graphs to score")
    if batch_size < 1:
        raise ValueError("batch_size must be positive")
    out = np.empty(len(graphs))
    for start in range(0, len(graphs), batch_size):
        chunk = graphs[start:start + batch_size]
        out[start:start + len(chunk)] = model.predict(collate(chunk))
    return out
