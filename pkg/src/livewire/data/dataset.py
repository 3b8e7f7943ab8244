"""In-memory datasets and the batch-stream protocol the trainer consumes."""

from collections.abc import Iterator
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from livewire.models import LivewireError


class DatasetError(LivewireError):
    """Raised for inconsistent arrays handed to a dataset or batch."""


@dataclass(frozen=True)
class Batch:
    inputs: np.ndarray
    targets: np.ndarray

    def __post_init__(self) -> None:
        if self.inputs.ndim != 2 or self.targets.ndim != 2:
            raise DatasetError("inputs and targets must be 2-D matrices")
        if self.inputs.shape[0] != self.targets.shape[0]:
            raise DatasetError(
                f"{self.inputs.shape[0]} input rows but {self.targets.shape[0]} target rows"
            )
        if self.inputs.shape[0] < 1:
            raise DatasetError("a batch needs at least one sample")

    @property
    def size(self) -> int:
        return int(self.inputs.shape[0])


class BatchSource(Protocol):
    """Anything the training loop can draw batches from."""

    @property
    def input_width(self) -> int: ...

    @property
    def output_width(self) -> int: ...

    def __len__(self) -> int: ...

    def batches(
        self, batch_size: int, *, seed: int | None = None, epoch: int = 0
    ) -> Iterator[Batch]:
        """Yield consecutive batches; the order depends only on (seed, epoch)."""
        ...


def one_hot(labels: np.ndarray, n_classes: int) -> np.ndarray:
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise DatasetError(f"labels outside [0, {n_classes})")
    out = np.zeros((labels.shape[0], n_classes))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


@dataclass
class Dataset:
    """Feature matrix with integer labels (classification) or raw targets."""

    inputs: np.ndarray
    targets: np.ndarray
    labels: np.ndarray | None = None
    n_classes: int = 0
    meta: dict[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.inputs.shape[0] != self.targets.shape[0]:
            raise DatasetError(
                f"{self.inputs.shape[0]} input rows but {self.targets.shape[0]} target rows"
            )

    @classmethod
    def classification(
        cls, inputs: np.ndarray, labels: np.ndarray, n_classes: int, **meta: object
    ) -> "Dataset":
        labels = np.asarray(labels, dtype=np.int64)
        return cls(inputs, one_hot(labels, n_classes), labels, n_classes, dict(meta))

    @property
    def input_width(self) -> int:
        return int(self.inputs.shape[1])

    @property
    def output_width(self) -> int:
        return int(self.targets.shape[1])

    def __len__(self) -> int:
        return int(self.inputs.shape[0])

    def batches(
        self, batch_size: int, *, seed: int | None = None, epoch: int = 0
    ) -> Iterator[Batch]:
        n = len(self)
        if seed is None:
            order = np.arange(n)
        else:
            order = np.random.default_rng((seed, epoch)).permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            yield Batch(self.inputs[idx], self.targets[idx])

    def batch_count(self, batch_size: int) -> int:
        return -(-len(self) // batch_size)

    def as_batch(self) -> Batch:
        return Batch(self.inputs, self.targets)

    def with_classes(self, n_classes: int) -> "Dataset":
        """Re-encode labels one-hot over a larger class set."""
        if self.labels is None:
            raise DatasetError("dataset has no labels to re-encode")
        return Dataset.classification(self.inputs, self.labels, n_classes, **self.meta)
