"""Relational GNN layers and the surrogate scoring model."""

from .layers import (
    Topology,
    film_layer,
    filmv2_layer,
    filmv2_variant_layer,
    gatv2_layer,
    gin_layer,
)
from .model import (
    ARCHITECTURES,
    EmptyBatch,
    ModelConfig,
    SurrogateModel,
    forward,
    init_parameters,
    parameter_shapes,
    predict_graphs,
)

__all__ = [
    "ARCHITECTURES", "EmptyBatch", "ModelConfig", "SurrogateModel", "Topology",
    "film_layer", "filmv2_layer", "filmv2_variant_layer", "forward", "gatv2_layer",
    "gin_layer", "init_parameters", "parameter_shapes", "predict_graphs",
]
