"""Synthetic tasks with known relational ground truth.

Coincidence task: the input is split into equal feature groups. Each sample
picks one correlated pair of groups and drives both strongly (~N(3, 0.3),
truncated to 3 +- 0.6); every other feature stays at noise level. The label is
the pair index.

After per-column standardization, a strong value clears one standard
deviation only if its group is strong in at most about a quarter of the
samples. A column with a fraction p of strong values has sd >= 3 sqrt(p(1-p)),
so the weakest strong value 2.4 stands out only while 3p + 3 sqrt(p(1-p)) < 2.4.
That holds from four correlated pairs up; with two or three pairs the
standardized check fails and ``active_groups`` should be read on raw inputs.

Few-shot task: Gaussian clusters on orthogonal axes. Base classes are drawn
first, novel classes come from held-out centers.
"""

import math
from dataclasses import dataclass
from typing import Self

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from livewire.constants import (
    NOISE_TRUNCATION,
    STRONG_GROUP_MEAN,
    STRONG_GROUP_STD,
    STRONG_GROUP_TRUNCATION,
)
from livewire.data.dataset import Dataset
from livewire.models import LivewireError


class TaskError(LivewireError):
    """Raised for task parameters a generator cannot honour."""


class CoincidenceTask(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    n_groups: int = Field(default=4, ge=2)
    group_width: int = Field(default=2, ge=1)
    correlated_pairs: list[tuple[int, int]] = Field(
        default_factory=lambda: [(0, 2), (1, 3)], min_length=1
    )
    noise: float = Field(default=0.5, ge=0, lt=1)
    seed: int = 0

    @model_validator(mode="after")
    def _disjoint_pairs(self) -> Self:
        used: set[int] = set()
        for a, b in self.correlated_pairs:
            if a == b:
                raise ValueError(f"pair ({a}, {b}) must join two different groups")
            for g in (a, b):
                if not 0 <= g < self.n_groups:
                    raise ValueError(f"group {g} outside [0, {self.n_groups})")
                if g in used:
                    raise ValueError(f"group {g} appears in more than one correlated pair")
                used.add(g)
        return self

    @property
    def input_width(self) -> int:
        return self.n_groups * self.group_width

    @property
    def n_classes(self) -> int:
        return len(self.correlated_pairs)

    def group_of(self, feature: int) -> int:
        if not 0 <= feature < self.input_width:
            raise TaskError(f"feature {feature} outside [0, {self.input_width})")
        return feature // self.group_width

    def features_of(self, group: int) -> range:
        return range(group * self.group_width, (group + 1) * self.group_width)


class CoincidenceData(CoincidenceTask):
    """A coincidence task plus the sample count, as read from a task file."""

    n_samples: int = Field(default=1000, ge=2)


def _truncated_normal(
    rng: np.random.Generator, mean: float, std: float, bound: float, size: tuple[int, ...]
) -> np.ndarray:
    return np.clip(rng.normal(mean, std, size), mean - bound, mean + bound)


def gen_coincidence(task: CoincidenceTask, n: int) -> Dataset:
    """Draw ``n`` samples; ``meta['pairs']`` records the active pair of each sample."""
    if n < 1:
        raise TaskError(f"sample count must be positive, got {n}")
    rng = np.random.default_rng(task.seed)
    labels = rng.integers(0, task.n_classes, size=n)
    inputs = task.noise * _truncated_normal(
        rng, 0.0, 1.0, NOISE_TRUNCATION, (n, task.input_width)
    )
    strong = _truncated_normal(
        rng,
        STRONG_GROUP_MEAN,
        STRONG_GROUP_STD,
        STRONG_GROUP_TRUNCATION * STRONG_GROUP_STD,
        (n, 2 * task.group_width),
    )
    for sample, label in enumerate(labels):
        a, b = task.correlated_pairs[label]
        features = [*task.features_of(a), *task.features_of(b)]
        inputs[sample, features] = strong[sample]
    return Dataset.classification(
        inputs, labels, task.n_classes, pairs=labels.copy(), task=task.model_dump()
    )


def active_groups(task: CoincidenceTask, sample: np.ndarray, threshold: float = 1.0) -> set[int]:
    """Groups whose every feature exceeds ``threshold`` in ``sample``."""
    return {
        g
        for g in range(task.n_groups)
        if np.all(sample[list(task.features_of(g))] > threshold)
    }


class FewShotProtocol(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    base_classes: int = Field(default=4, ge=1)
    novel_classes: int = Field(default=2, ge=1)
    shots: int = Field(default=10, ge=1, le=20)
    # Per-class sample counts.
    base_train: int = Field(default=100, ge=1)
    base_test: int = Field(default=50, ge=1)
    novel_query: int = Field(default=50, ge=1)
    input_dim: int = Field(default=8, ge=1)
    separation: float = Field(default=6.0, gt=0)
    adaptation_steps: int = Field(default=50, ge=0)
    seed: int = 0

    @model_validator(mode="after")
    def _room_for_centers(self) -> Self:
        if self.shots * self.novel_classes < 2:
            raise ValueError("the support set needs at least 2 samples (shots x novel_classes)")
        if self.input_dim < self.total_classes:
            raise ValueError(
                f"input_dim {self.input_dim} must be >= base + novel classes ({self.total_classes})"
            )
        return self

    @property
    def total_classes(self) -> int:
        return self.base_classes + self.novel_classes


@dataclass
class FewShotSplits:
    base_train: Dataset
    base_test: Dataset
    novel_support: Dataset
    novel_query: Dataset


def cluster_centers(protocol: FewShotProtocol) -> np.ndarray:
    """One center per class on its own axis; any two are ``separation`` apart."""
    centers = np.zeros((protocol.total_classes, protocol.input_dim))
    scale = protocol.separation / math.sqrt(2.0)
    for c in range(protocol.total_classes):
        centers[c, c] = scale
    return centers


def gen_fewshot(protocol: FewShotProtocol) -> FewShotSplits:
    """Draw the four disjoint splits. Labels are global class indices."""
    rng = np.random.default_rng(protocol.seed)
    centers = cluster_centers(protocol)
    base = range(protocol.base_classes)
    novel = range(protocol.base_classes, protocol.total_classes)

    def draw(classes: range, per_class: int, n_classes: int, split: str) -> Dataset:
        labels = np.repeat(np.array(classes, dtype=np.int64), per_class)
        inputs = centers[labels] + rng.standard_normal((labels.size, protocol.input_dim))
        return Dataset.classification(inputs, labels, n_classes, split=split)

    return FewShotSplits(
        base_train=draw(base, protocol.base_train, protocol.base_classes, "base_train"),
        base_test=draw(base, protocol.base_test, protocol.base_classes, "base_test"),
        novel_support=draw(novel, protocol.shots, protocol.total_classes, "novel_support"),
        novel_query=draw(novel, protocol.novel_query, protocol.total_classes, "novel_query"),
    )
