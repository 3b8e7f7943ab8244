"""Domain models."""

from dataclasses import dataclass, field
from enum import StrEnum


class LivewireError(Exception):
    """Base class for every error raised by livewire."""


@dataclass(frozen=True, order=True, slots=True)
class NodeRef:
    """A node addressed by layer (0 = input) and index within the layer.

    Ordering is lexicographic on (layer, index); every deterministic
    tie-break in the package relies on it.
    """

    layer: int
    index: int

    def __str__(self) -> str:
        return f"{self.layer}:{self.index}"


EdgeKey = tuple[NodeRef, NodeRef]


@dataclass(slots=True)
class Edge:
    """A directed weighted connection between nodes of two different layers.

    ``age`` counts optimizer steps survived since creation; ``grad_ema`` is the
    smoothed |gradient| used by the optional rate boost.
    """

    src: NodeRef
    dst: NodeRef
    weight: float
    momentum: float = 0.0
    age: int = 0
    grad_ema: float = 0.0

    @property
    def key(self) -> EdgeKey:
        return (self.src, self.dst)

    def order_key(self) -> tuple[int, int, int, int]:
        """Lexicographic endpoint tuple used for tie-breaking."""
        return (self.src.layer, self.src.index, self.dst.layer, self.dst.index)


class LossKind(StrEnum):
    SOFTMAX_CROSS_ENTROPY = "softmax_cross_entropy"
    MEAN_SQUARED_ERROR = "mean_squared_error"


class InitMode(StrEnum):
    ZERO = "zero"
    SCALED_RANDOM = "scaled_random"


class WeightScaleRule(StrEnum):
    FAN_IN = "fan_in"
    FIXED = "fixed"


class ScoringMode(StrEnum):
    GRADIENT = "gradient"
    GRADIENT_FREE = "gradient_free"


class StrengthAggregate(StrEnum):
    MEAN = "mean"
    MAX = "max"


class CredibilityDecay(StrEnum):
    HYPERBOLIC = "hyperbolic"
    EXPONENTIAL = "exponential"


class ViolationKind(StrEnum):
    NODE_OUT_OF_RANGE = "node out of range"
    INTRA_LAYER = "intra-layer edge"
    BACKWARD = "backward edge"
    DUPLICATE = "duplicate edge"
    NEGATIVE_AGE = "negative age"
    NON_FINITE = "non-finite value"
    NORM_SHAPE = "norm state shape mismatch"
    NEGATIVE_VARIANCE = "negative running variance"


@dataclass(frozen=True)
class Violation:
    """A broken structural invariant, reported as data."""

    kind: ViolationKind
    message: str
    location: str = ""

    def __str__(self) -> str:
        where = f"{self.location}: " if self.location else ""
        return f"{where}{self.kind}: {self.message}"


@dataclass(frozen=True, slots=True)
class QueueEntry:
    node: NodeRef
    strength: float


@dataclass
class ActivationQueue:
    """Bounded collection of the strongest-activated nodes of one pass.

    Entries are ordered by descending strength, ties by ascending NodeRef.
    """

    capacity: int
    entries: list[QueueEntry] = field(default_factory=list)

    @property
    def nodes(self) -> list[NodeRef]:
        return [e.node for e in self.entries]

    def strength_of(self, node: NodeRef) -> float:
        for entry in self.entries:
            if entry.node == node:
                return entry.strength
        raise KeyError(node)

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True, slots=True)
class ScoredPair:
    src: NodeRef
    dst: NodeRef
    score: float

    @property
    def key(self) -> EdgeKey:
        return (self.src, self.dst)


@dataclass
class RewirePlan:
    """Outcome of one rewiring round. A plan never mutates the network itself."""

    candidates: list[ScoredPair] = field(default_factory=list)
    to_grow: list[EdgeKey] = field(default_factory=list)
    to_prune: list[Edge] = field(default_factory=list)

    @property
    def is_empty(self) -> bool:
        return not self.to_grow and not self.to_prune
