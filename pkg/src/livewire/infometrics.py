"""Information measures over binary activation events.

A node "fires" on a sample when its normalized activation exceeds the
threshold (one standard deviation by default). The 2x2 joint table of two
nodes' events drives coincidence ratios and mutual information. Both use
add-one smoothing on that table so no log term is ever infinite; the
resulting bias is small at the sample sizes the estimator accepts.

All logarithms are base 2.
"""

import json
import math
from collections.abc import Iterable
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, ValidationError

from livewire.config import parse_node_ref
from livewire.constants import DEFAULT_EVENT_THRESHOLD, MI_MIN_OBSERVATIONS
from livewire.models import LivewireError, NodeRef
from livewire.propagation import ActivationTrace


class InfoMetricsError(LivewireError):
    """Raised for untracked nodes, too few observations, or a bad event log."""


def surprise(p: float) -> float:
    """Surprise of an observation with probability ``p``, in bits."""
    if not 0.0 < p <= 1.0:
        raise InfoMetricsError(f"probability must be in (0, 1], got {p}")
    return 0.0 - math.log2(p)


def entropy(probabilities: Iterable[float]) -> float:
    """Shannon entropy in bits, with 0 * log 0 taken as 0."""
    return 0.0 - math.fsum(p * math.log2(p) for p in probabilities if p > 0)


class EventLogDocument(BaseModel):
    model_config = ConfigDict(extra="forbid")

    threshold: float
    # One string of '0'/'1' per node, keyed by "L:I".
    events: dict[str, str]


class EventLog:
    """Per-node binary event sequences of equal length.

    Single writer: the training loop appends with ``record``; every
    estimator below only reads.
    """

    def __init__(
        self, nodes: Iterable[NodeRef], threshold: float = DEFAULT_EVENT_THRESHOLD
    ) -> None:
        self.threshold = threshold
        self._events: dict[NodeRef, list[np.ndarray]] = {node: [] for node in nodes}

    @classmethod
    def from_arrays(
        cls, events: dict[NodeRef, np.ndarray], threshold: float = DEFAULT_EVENT_THRESHOLD
    ) -> "EventLog":
        lengths = {len(v) for v in events.values()}
        if len(lengths) > 1:
            raise InfoMetricsError(f"event sequences differ in length: {sorted(lengths)}")
        log = cls(events, threshold)
        for node, values in events.items():
            log._events[node].append(np.asarray(values, dtype=bool))
        return log

    @property
    def nodes(self) -> list[NodeRef]:
        return sorted(self._events)

    @property
    def n_obs(self) -> int:
        first = next(iter(self._events.values()), [])
        return sum(len(chunk) for chunk in first)

    def tracks(self, node: NodeRef) -> bool:
        return node in self._events

    def record(self, trace: ActivationTrace) -> None:
        """Append one event per sample of ``trace`` for every tracked node."""
        for node, chunks in self._events.items():
            if node.layer >= len(trace.normalized) or node.index >= trace.layer_widths[node.layer]:
                raise InfoMetricsError(f"tracked node {node} is not in the traced network")
            chunks.append(trace.normalized[node.layer][:, node.index] > self.threshold)

    def events(self, node: NodeRef) -> np.ndarray:
        if node not in self._events:
            raise InfoMetricsError(f"node {node} is not tracked")
        chunks = self._events[node]
        return np.concatenate(chunks) if chunks else np.zeros(0, dtype=bool)

    def save(self, path: Path) -> None:
        doc = EventLogDocument(
            threshold=self.threshold,
            events={
                str(node): "".join("1" if e else "0" for e in self.events(node))
                for node in self.nodes
            },
        )
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(doc.model_dump_json(indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: Path) -> "EventLog":
        try:
            doc = EventLogDocument.model_validate(json.loads(path.read_text(encoding="utf-8")))
        except OSError as exc:
            raise InfoMetricsError(f"{path}: cannot be read: {exc}") from exc
        except (json.JSONDecodeError, ValidationError) as exc:
            raise InfoMetricsError(f"{path}: not a valid event log: {exc}") from exc

        events: dict[NodeRef, np.ndarray] = {}
        for key, bits in doc.events.items():
            try:
                node = parse_node_ref(key)
            except ValueError as exc:
                raise InfoMetricsError(f"{path}: {exc}") from exc
            if set(bits) - {"0", "1"}:
                raise InfoMetricsError(f"{path}: events of {key} must be a string of 0 and 1")
            events[node] = np.frombuffer(bits.encode(), dtype=np.uint8) == ord("1")
        return cls.from_arrays(events, doc.threshold)


def joint_counts(log: EventLog, a: NodeRef, b: NodeRef) -> np.ndarray:
    """Raw 2x2 table: rows are a's event (0, 1), columns b's."""
    ea, eb = log.events(a), log.events(b)
    both = int(np.sum(ea & eb))
    only_a = int(np.sum(ea & ~eb))
    only_b = int(np.sum(~ea & eb))
    neither = len(ea) - both - only_a - only_b
    return np.array([[neither, only_b], [only_a, both]], dtype=np.int64)


@dataclass(frozen=True)
class CoincidenceStats:
    p_a: float
    p_b: float
    p_joint: float
    ratio: float


def coincidence_stats(log: EventLog, a: NodeRef, b: NodeRef) -> CoincidenceStats:
    """Firing probabilities and how far joint firing exceeds independence.

    ``ratio`` > 1 means the nodes fire together more often than chance.
    """
    smoothed = joint_counts(log, a, b) + 1
    total = float(smoothed.sum())
    p_a = float(smoothed[1, :].sum()) / total
    p_b = float(smoothed[:, 1].sum()) / total
    p_joint = float(smoothed[1, 1]) / total
    return CoincidenceStats(p_a, p_b, p_joint, p_joint / (p_a * p_b))


@dataclass(frozen=True)
class MiEstimate:
    value_bits: float
    n_obs: int
    cells: np.ndarray
    entropy_a: float
    entropy_b: float


def _mi_term(p_xy: float, p_x: float, p_y: float) -> float:
    if p_xy <= 0:
        return 0.0
    return p_xy * math.log2(p_xy / (p_x * p_y))


def mutual_information(log: EventLog, a: NodeRef, b: NodeRef) -> MiEstimate:
    """Plug-in mutual information of two nodes' events over the smoothed table.

    The off-diagonal terms are summed as a pair, so swapping ``a`` and ``b``
    returns the same float.
    """
    cells = joint_counts(log, a, b)
    n_obs = int(cells.sum())
    if n_obs < MI_MIN_OBSERVATIONS:
        raise InfoMetricsError(
            f"mutual information needs at least {MI_MIN_OBSERVATIONS} observations, got {n_obs}"
        )
    p = (cells + 1) / float(n_obs + 4)
    pa = (float(p[0, 0] + p[0, 1]), float(p[1, 0] + p[1, 1]))
    pb = (float(p[0, 0] + p[1, 0]), float(p[0, 1] + p[1, 1]))
    on_diagonal = _mi_term(float(p[1, 1]), pa[1], pb[1]) + _mi_term(float(p[0, 0]), pa[0], pb[0])
    off_diagonal = _mi_term(float(p[1, 0]), pa[1], pb[0]) + _mi_term(float(p[0, 1]), pa[0], pb[1])
    value = max(0.0, on_diagonal + off_diagonal)
    return MiEstimate(value, n_obs, cells, entropy(pa), entropy(pb))
