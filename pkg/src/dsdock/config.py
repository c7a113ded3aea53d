"""The run configuration document: sections, defaults and strict key checking."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .gnn.model import ModelConfig
from .molgraph.generate import GeneratorParams
from .screening.oracle import OracleParams
from .screening.pipeline import PipelineConfig
from .training.loop import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class MetricsOptions:
    grid_points: int = 50
    zeta_list: tuple[float, ...] = (0.01, 0.001)
    sigma_list: tuple[float, ...] = (0.1,)

    def __post_init__(self):
        object.__setattr__(self, "zeta_list", tuple(float(z) for z in self.zeta_list))
        object.__setattr__(self, "sigma_list", tuple(float(s) for s in self.sigma_list))
        if self.grid_points < 2:
            raise ValueError("grid_points must be at least 2")


# pipeline keys that live in their own sections
_PIPELINE_KEYS = tuple(f.name for f in dataclasses.fields(PipelineConfig)
                       if f.name not in ("model", "train", "seed"))
_SECTIONS = {
    "generator": GeneratorParams,
    "oracle": OracleParams,
    "pipeline": None,
    "model": ModelConfig,
    "train": TrainConfig,
    "metrics": MetricsOptions,
}
_SEEDED = ("generator", "oracle", "pipeline", "train")


@dataclass
class RunConfig:
    seed: int = 0
    generator: GeneratorParams = field(default_factory=GeneratorParams)
    oracle: OracleParams = field(default_factory=OracleParams)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    metrics: MetricsOptions = field(default_factory=MetricsOptions)

    def to_dict(self) -> dict:
        pipe = {k: _plain(getattr(self.pipeline, k)) for k in _PIPELINE_KEYS}
        pipe["seed"] = self.pipeline.seed
        return {
            "seed": self.seed,
            "generator": _plain(dataclasses.asdict(self.generator)),
            "oracle": _plain(self.oracle.to_dict()),
            "pipeline": pipe,
            "model": _plain(self.model.to_dict()),
            "train": _plain(self.train.to_dict()),
            "metrics": _plain(dataclasses.asdict(self.metrics)),
        }

    def with_overrides(self, **sections) -> "RunConfig":
        """Replace fields section by section, e.g. ``train={"alpha": 0.0}``."""
        doc = self.to_dict()
        for name, values in sections.items():
            doc[name].update(values)
        return build_config(doc)


def _plain(x):
    if isinstance(x, tuple):
        return [_plain(v) for v in x]
    if isinstance(x, list):
        return [_plain(v) for v in x]
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    return x


def _check_keys(section: str, given: dict, allowed) -> None:
    unknown = sorted(set(given) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(unknown)}; "
                          f"allowed: {', '.join(sorted(allowed))}")


def _fields(cls) -> tuple[str, ...]:
    return tuple(f.name for f in dataclasses.fields(cls))


def _tupled(values: dict) -> dict:
    return {k: tuple(v) if isinstance(v, list) and k != "weights" else v for k, v in values.items()}


def build_config(doc: dict | None) -> RunConfig:
    """Validate a parsed document and fill defaults.

    Section seeds that are not given explicitly follow the top-level seed.
    """
    doc = {} if doc is None else doc
    if not isinstance(doc, dict):
        raise ConfigError("config must be a mapping of sections")
    _check_keys("top level", doc, ("seed", *_SECTIONS))
    seed = doc.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError(f"seed must be a non-negative integer, got {seed!r}")
    built = {}
    for name, cls in _SECTIONS.items():
        values = doc.get(name) or {}
        if not isinstance(values, dict):
            raise ConfigError(f"section [{name}] must be a mapping")
        allowed = (*_PIPELINE_KEYS, "seed") if cls is None else _fields(cls)
        _check_keys(name, values, allowed)
        values = dict(values)
        if name in _SEEDED:
            values.setdefault("seed", seed)
        built[name] = values
    try:
        generator = GeneratorParams(**_tupled(built["generator"]))
        oracle = OracleParams(**built["oracle"])
        model = ModelConfig(**built["model"])
        train = TrainConfig(**built["train"])
        metrics = MetricsOptions(**built["metrics"])
        pipeline = PipelineConfig(model=model, train=train, **_tupled(built["pipeline"]))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    return RunConfig(seed, generator, oracle, pipeline, model, train, metrics)


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return build_config({})
    try:
        doc = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        return build_config(doc)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def dump_config(cfg: RunConfig, path: str | Path) -> None:
    Path(path).write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=True))
