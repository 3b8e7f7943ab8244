"""Run configuration: loading, validation, and persistence.

A run is configured by one flat JSON object whose keys are exactly the field
names of ``RunConfig``:

    {
        "_comment": "keys prefixed with _ are ignored",
        "layer_widths": [16, 32, 32, 4],
        "sparsity_hyperparameter": 0.5,
        "branching_factor": -0.7,
        "rewire_interval": 10,
        "eta_new": 0.1
    }

``RunConfig`` assembles the nested sub-configs (``InitConfig``,
``RewireConfig``, ``OptimizerConfig``) that the engine modules consume.
"""

import json
from pathlib import Path
from typing import Self

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from livewire.models import (
    CredibilityDecay,
    InitMode,
    LivewireError,
    LossKind,
    NodeRef,
    ScoringMode,
    StrengthAggregate,
    WeightScaleRule,
)


class ConfigError(LivewireError):
    """Raised when a config file exists but cannot be parsed or validated."""


def parse_node_ref(text: str) -> NodeRef:
    """Parse the ``L:I`` text form of a node reference."""
    layer, sep, index = text.strip().partition(":")
    if not sep:
        raise ValueError(f"node reference '{text}' must look like LAYER:INDEX")
    try:
        ref = NodeRef(int(layer), int(index))
    except ValueError as exc:
        raise ValueError(f"node reference '{text}' must use integer layer and index") from exc
    if ref.layer < 0 or ref.index < 0:
        raise ValueError(f"node reference '{text}' must be non-negative")
    return ref


class CyclicSchedule(BaseModel):
    """Triangular ramp: base → peak over warmup, peak → floor over decay, then floor."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    base: float = Field(ge=0)
    peak: float = Field(ge=0)
    floor: float = Field(ge=0)
    warmup_steps: int = Field(gt=0)
    decay_steps: int = Field(gt=0)

    @classmethod
    def constant(cls, value: float) -> Self:
        return cls(base=value, peak=value, floor=value, warmup_steps=1, decay_steps=1)


class InitConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    sparsity_hyperparameter: float = Field(default=0.5, gt=0, le=1)
    # Negative so density shrinks exponentially with layer distance.
    branching_factor: float = Field(default=-0.7, lt=0)
    weight_scale_rule: WeightScaleRule = WeightScaleRule.FAN_IN
    weight_sigma: float = Field(default=0.1, gt=0)
    seed: int = 0


class RewireConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    queue_capacity: int = Field(default=16, ge=1)
    growth_schedule: CyclicSchedule = CyclicSchedule.constant(0.0)
    prune_ratio_schedule: CyclicSchedule = CyclicSchedule.constant(1.0)
    min_layer_gap: int = Field(default=1, ge=1)
    distance_preference: float = Field(default=0.0, ge=0)
    scoring: ScoringMode = ScoringMode.GRADIENT
    new_edge_init: InitMode = InitMode.ZERO
    strength_aggregate: StrengthAggregate = StrengthAggregate.MEAN
    queue_outputs: bool = False


class CredibilitySchedule(BaseModel):
    """Per-edge learning rate as a function of edge age.

    hyperbolic: eta(age) = floor + (new - floor) * halflife / (halflife + age)
    exponential: eta(age) = floor + (new - floor) * 0.5 ** (age / halflife)
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    eta_new: float = Field(default=0.1, gt=0)
    eta_floor: float = Field(default=0.01, ge=0)
    halflife: float = Field(default=100.0, gt=0)
    decay: CredibilityDecay = CredibilityDecay.HYPERBOLIC
    global_scale: CyclicSchedule = CyclicSchedule.constant(1.0)

    @model_validator(mode="after")
    def _floor_below_new(self) -> Self:
        if self.eta_floor > self.eta_new:
            raise ValueError("eta_floor must not exceed eta_new")
        return self


class OptimizerConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    momentum_coeff: float = Field(default=0.9, ge=0, lt=1)
    schedule: CredibilitySchedule = CredibilitySchedule()
    gradient_clip: float | None = Field(default=None, gt=0)
    rate_boost: bool = False
    rate_boost_factor: float = Field(default=2.0, ge=1)
    rate_boost_percentile: float = Field(default=90.0, gt=0, lt=100)
    grad_ema_decay: float = Field(default=0.9, ge=0, lt=1)


class RunConfig(BaseModel):
    """Flat run configuration; field names are the config-file keys."""

    model_config = ConfigDict(extra="forbid")

    # Topology and initialization.
    layer_widths: list[int] = Field(default_factory=lambda: [8, 16, 16, 2], min_length=2)
    sparsity_hyperparameter: float = Field(default=0.5, gt=0, le=1)
    branching_factor: float = Field(default=-0.7, lt=0)
    weight_scale_rule: WeightScaleRule = WeightScaleRule.FAN_IN
    weight_sigma: float = Field(default=0.1, gt=0)

    # Rewiring.
    queue_capacity: int = Field(default=16, ge=1)
    growth_base: float = Field(default=0.0, ge=0)
    growth_peak: float = Field(default=0.0, ge=0)
    growth_floor: float = Field(default=0.0, ge=0)
    growth_warmup_steps: int = Field(default=1, gt=0)
    growth_decay_steps: int = Field(default=1, gt=0)
    prune_ratio_base: float = Field(default=1.0, ge=0)
    prune_ratio_peak: float = Field(default=1.0, ge=0)
    prune_ratio_floor: float = Field(default=1.0, ge=0)
    prune_ratio_warmup_steps: int = Field(default=1, gt=0)
    prune_ratio_decay_steps: int = Field(default=1, gt=0)
    min_layer_gap: int = Field(default=1, ge=1)
    distance_preference: float = Field(default=0.0, ge=0)
    scoring: ScoringMode = ScoringMode.GRADIENT
    new_edge_init: InitMode = InitMode.ZERO
    strength_aggregate: StrengthAggregate = StrengthAggregate.MEAN
    queue_outputs: bool = False
    rewire_interval: int = Field(default=10, gt=0)
    adaptive_rewire: bool = False
    adaptive_loss_threshold: float = Field(default=0.0, ge=0)
    loss_smoothing: float = Field(default=0.9, ge=0, lt=1)

    # Optimizer.
    momentum_coeff: float = Field(default=0.9, ge=0, lt=1)
    eta_new: float = Field(default=0.1, gt=0)
    eta_floor: float = Field(default=0.01, ge=0)
    halflife: float = Field(default=100.0, gt=0)
    credibility_decay: CredibilityDecay = CredibilityDecay.HYPERBOLIC
    lr_base: float = Field(default=1.0, ge=0)
    lr_peak: float = Field(default=1.0, ge=0)
    lr_floor: float = Field(default=1.0, ge=0)
    lr_warmup_steps: int = Field(default=1, gt=0)
    lr_decay_steps: int = Field(default=1, gt=0)
    gradient_clip: float | None = Field(default=None, gt=0)
    rate_boost: bool = False
    rate_boost_factor: float = Field(default=2.0, ge=1)
    rate_boost_percentile: float = Field(default=90.0, gt=0, lt=100)
    grad_ema_decay: float = Field(default=0.9, ge=0, lt=1)

    # Propagation.
    loss: LossKind = LossKind.SOFTMAX_CROSS_ENTROPY
    dropout_rate: float = Field(default=0.0, ge=0, lt=1)
    batch_size: int = Field(default=32, ge=1)

    # Loop.
    epochs: int = Field(default=1, ge=1)
    log_interval: int = Field(default=1, ge=1)
    mi_interval: int = Field(default=0, ge=0)
    event_threshold: float = 1.0
    track_nodes: list[str] = Field(default_factory=list)
    output_dir: str = "runs/latest"

    # Seeds, one per stochastic subsystem.
    init_seed: int = 0
    dropout_seed: int = 1
    growth_seed: int = 2
    data_seed: int = 3

    @field_validator("layer_widths")
    @classmethod
    def _positive_widths(cls, widths: list[int]) -> list[int]:
        if any(w < 1 for w in widths):
            raise ValueError("every layer width must be at least 1")
        return widths

    @field_validator("track_nodes")
    @classmethod
    def _parsable_nodes(cls, nodes: list[str]) -> list[str]:
        for text in nodes:
            parse_node_ref(text)
        return nodes

    @model_validator(mode="after")
    def _sub_configs_valid(self) -> Self:
        # Building the nested configs runs their own validators.
        self.init_config()
        self.rewire_config()
        self.optimizer_config()
        for ref in self.tracked_nodes:
            if ref.layer >= len(self.layer_widths) or ref.index >= self.layer_widths[ref.layer]:
                raise ValueError(f"tracked node {ref} is outside layer_widths")
        return self

    @property
    def tracked_nodes(self) -> list[NodeRef]:
        return [parse_node_ref(text) for text in self.track_nodes]

    def init_config(self) -> InitConfig:
        return InitConfig(
            sparsity_hyperparameter=self.sparsity_hyperparameter,
            branching_factor=self.branching_factor,
            weight_scale_rule=self.weight_scale_rule,
            weight_sigma=self.weight_sigma,
            seed=self.init_seed,
        )

    def rewire_config(self) -> RewireConfig:
        return RewireConfig(
            queue_capacity=self.queue_capacity,
            growth_schedule=CyclicSchedule(
                base=self.growth_base,
                peak=self.growth_peak,
                floor=self.growth_floor,
                warmup_steps=self.growth_warmup_steps,
                decay_steps=self.growth_decay_steps,
            ),
            prune_ratio_schedule=CyclicSchedule(
                base=self.prune_ratio_base,
                peak=self.prune_ratio_peak,
                floor=self.prune_ratio_floor,
                warmup_steps=self.prune_ratio_warmup_steps,
                decay_steps=self.prune_ratio_decay_steps,
            ),
            min_layer_gap=self.min_layer_gap,
            distance_preference=self.distance_preference,
            scoring=self.scoring,
            new_edge_init=self.new_edge_init,
            strength_aggregate=self.strength_aggregate,
            queue_outputs=self.queue_outputs,
        )

    def optimizer_config(self) -> OptimizerConfig:
        return OptimizerConfig(
            momentum_coeff=self.momentum_coeff,
            schedule=CredibilitySchedule(
                eta_new=self.eta_new,
                eta_floor=self.eta_floor,
                halflife=self.halflife,
                decay=self.credibility_decay,
                global_scale=CyclicSchedule(
                    base=self.lr_base,
                    peak=self.lr_peak,
                    floor=self.lr_floor,
                    warmup_steps=self.lr_warmup_steps,
                    decay_steps=self.lr_decay_steps,
                ),
            ),
            gradient_clip=self.gradient_clip,
            rate_boost=self.rate_boost,
            rate_boost_factor=self.rate_boost_factor,
            rate_boost_percentile=self.rate_boost_percentile,
            grad_ema_decay=self.grad_ema_decay,
        )


def read_json_object(path: Path) -> dict[str, object]:
    """Read a JSON object from disk, dropping reserved ``_``-prefixed keys."""
    try:
        raw: object = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"{path}: cannot be read: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON: {exc}") from exc

    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: must be a JSON object at the top level")

    return {k: v for k, v in raw.items() if not k.startswith("_")}


def load_model[M: BaseModel](path: Path, model: type[M]) -> M:
    """Load and validate a flat JSON file into ``model``."""
    data = read_json_object(path)
    try:
        return model.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"{path}: invalid {model.__name__}: {exc}") from exc


def load_run_config(path: Path) -> RunConfig:
    return load_model(path, RunConfig)


def save_run_config(cfg: RunConfig, path: Path) -> None:
    """Persist a config to disk, creating directories as needed."""
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(cfg.model_dump_json(indent=2) + "\n", encoding="utf-8")
