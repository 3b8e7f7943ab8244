"""Mutable layered-DAG network representation and structural mutation.

The network is a list of layers (0 = input, last = output) plus a sparse set
of strictly forward edges that may skip any number of layers. Hidden layers
carry batch-normalization state; the input and output layers do not.

All mutation goes through ``grow_edges``, ``prune_edges`` and
``Network.add_output_nodes``. ``validate`` reports broken invariants as data
so callers at a boundary (checkpoint load, CLI) decide whether to fail.
"""

import dataclasses
import hashlib
import logging
import math
from collections import defaultdict
from collections.abc import Iterable, Iterator
from dataclasses import dataclass

import numpy as np

from livewire.constants import FAN_IN_GAIN
from livewire.models import (
    Edge,
    EdgeKey,
    InitMode,
    LivewireError,
    NodeRef,
    Violation,
    ViolationKind,
)

logger = logging.getLogger(__name__)


class TopologyError(LivewireError):
    """Raised when a structural operation cannot be honoured."""


@dataclass
class NormState:
    """Per-node normalization parameters and statistics of one hidden layer."""

    scale: np.ndarray
    shift: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    scale_momentum: np.ndarray
    shift_momentum: np.ndarray

    @classmethod
    def fresh(cls, width: int) -> "NormState":
        return cls(
            scale=np.ones(width),
            shift=np.zeros(width),
            running_mean=np.zeros(width),
            running_var=np.ones(width),
            scale_momentum=np.zeros(width),
            shift_momentum=np.zeros(width),
        )

    def arrays(self) -> dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}

    def copy(self) -> "NormState":
        return NormState(**{name: arr.copy() for name, arr in self.arrays().items()})


class Network:
    """Layered DAG with a sparse, mutable set of forward edges.

    The constructor accepts any edge list without checking it, so that a
    loaded or hand-built network can be inspected with ``validate``.
    Edges are kept in insertion order; every traversal is deterministic.
    """

    def __init__(
        self,
        layer_widths: Iterable[int],
        edges: Iterable[Edge] = (),
        norm_state: dict[int, NormState] | None = None,
        step_count: int = 0,
    ) -> None:
        self.layer_widths: list[int] = list(layer_widths)
        self._edges: list[Edge] = []
        self._by_pair: dict[EdgeKey, Edge] = {}
        self._out: dict[NodeRef, list[Edge]] = defaultdict(list)
        self._in: dict[NodeRef, list[Edge]] = defaultdict(list)
        for edge in edges:
            self._attach(edge)
        if norm_state is None:
            norm_state = {
                layer: NormState.fresh(self.layer_widths[layer]) for layer in self.hidden_layers
            }
        self.norm_state: dict[int, NormState] = norm_state
        self.step_count = step_count

    # -- shape ------------------------------------------------------------

    @property
    def n_layers(self) -> int:
        return len(self.layer_widths)

    @property
    def output_layer(self) -> int:
        return self.n_layers - 1

    @property
    def hidden_layers(self) -> range:
        return range(1, self.n_layers - 1)

    @property
    def node_count(self) -> int:
        return sum(self.layer_widths)

    def contains(self, node: NodeRef) -> bool:
        return 0 <= node.layer < self.n_layers and 0 <= node.index < self.layer_widths[node.layer]

    def nodes(self) -> Iterator[NodeRef]:
        for layer, width in enumerate(self.layer_widths):
            for index in range(width):
                yield NodeRef(layer, index)

    # -- edges ------------------------------------------------------------

    @property
    def edges(self) -> tuple[Edge, ...]:
        return tuple(self._edges)

    @property
    def edge_count(self) -> int:
        return len(self._edges)

    def has_edge(self, src: NodeRef, dst: NodeRef) -> bool:
        return (src, dst) in self._by_pair

    def get_edge(self, src: NodeRef, dst: NodeRef) -> Edge | None:
        return self._by_pair.get((src, dst))

    def outgoing(self, node: NodeRef) -> list[Edge]:
        return list(self._out.get(node, ()))

    def incoming(self, node: NodeRef) -> list[Edge]:
        return list(self._in.get(node, ()))

    def in_degree(self, node: NodeRef) -> int:
        return len(self._in.get(node, ()))

    def out_degree(self, node: NodeRef) -> int:
        return len(self._out.get(node, ()))

    def add_edge(self, edge: Edge) -> None:
        """Attach a legal edge. Raises TopologyError for anything validate would flag."""
        reason = self.rejection_reason(edge.src, edge.dst)
        if reason is not None:
            raise TopologyError(f"cannot add {edge.src}->{edge.dst}: {reason}")
        self._attach(edge)

    def rejection_reason(self, src: NodeRef, dst: NodeRef) -> str | None:
        """Why a new (src, dst) edge would break an invariant, or None if it is legal."""
        if not self.contains(src) or not self.contains(dst):
            return str(ViolationKind.NODE_OUT_OF_RANGE)
        if src.layer == dst.layer:
            return str(ViolationKind.INTRA_LAYER)
        if src.layer > dst.layer:
            return str(ViolationKind.BACKWARD)
        if (src, dst) in self._by_pair:
            return str(ViolationKind.DUPLICATE)
        return None

    def remove_edges(self, doomed: Iterable[Edge]) -> None:
        ids = {id(e) for e in doomed}
        if not ids:
            return
        survivors = [e for e in self._edges if id(e) not in ids]
        self._edges = []
        self._by_pair = {}
        self._out = defaultdict(list)
        self._in = defaultdict(list)
        for edge in survivors:
            self._attach(edge)

    def _attach(self, edge: Edge) -> None:
        self._edges.append(edge)
        self._by_pair.setdefault(edge.key, edge)
        self._out[edge.src].append(edge)
        self._in[edge.dst].append(edge)

    # -- growth of the output layer ----------------------------------------

    def add_output_nodes(self, count: int) -> list[NodeRef]:
        """Append disconnected nodes to the output layer and return them."""
        if count < 0:
            raise TopologyError(f"cannot add {count} output nodes")
        start = self.layer_widths[-1]
        self.layer_widths[-1] += count
        return [NodeRef(self.output_layer, start + i) for i in range(count)]

    # -- identity ----------------------------------------------------------

    def structure_hash(self) -> str:
        """Digest of layer widths and the sorted edge pairs (weights excluded)."""
        digest = hashlib.sha256()
        digest.update(repr(self.layer_widths).encode())
        for edge in sorted(self._edges, key=Edge.order_key):
            digest.update(repr(edge.order_key()).encode())
        return digest.hexdigest()

    def copy(self) -> "Network":
        return Network(
            self.layer_widths,
            (dataclasses.replace(e) for e in self._edges),
            {layer: state.copy() for layer, state in self.norm_state.items()},
            self.step_count,
        )


def max_edge_count(layer_widths: list[int]) -> int:
    """Number of admissible forward edges between all layer pairs."""
    total = 0
    for i, wi in enumerate(layer_widths):
        total += wi * sum(layer_widths[i + 1 :])
    return total


def density(net: Network) -> float:
    possible = max_edge_count(net.layer_widths)
    return net.edge_count / possible if possible else 0.0


def density_by_distance(net: Network) -> dict[int, float]:
    """Realized edge density for every layer distance d = dst.layer - src.layer."""
    widths = net.layer_widths
    possible: dict[int, int] = defaultdict(int)
    for i in range(net.n_layers):
        for j in range(i + 1, net.n_layers):
            possible[j - i] += widths[i] * widths[j]
    realized: dict[int, int] = defaultdict(int)
    for edge in net.edges:
        realized[edge.dst.layer - edge.src.layer] += 1
    return {d: realized[d] / n for d, n in sorted(possible.items())}


def validate(net: Network) -> list[Violation]:
    """Return every violated structural invariant; empty means valid."""
    violations: list[Violation] = []
    seen: set[EdgeKey] = set()

    for i, edge in enumerate(net.edges):
        where = f"edges[{i}]"
        pair = f"{edge.src}->{edge.dst}"
        out_of_range = [n for n in (edge.src, edge.dst) if not net.contains(n)]
        if out_of_range:
            violations.append(
                Violation(
                    ViolationKind.NODE_OUT_OF_RANGE,
                    f"{pair} references {out_of_range[0]} outside widths {net.layer_widths}",
                    where,
                )
            )
            continue
        if edge.src.layer == edge.dst.layer:
            violations.append(Violation(ViolationKind.INTRA_LAYER, pair, where))
        elif edge.src.layer > edge.dst.layer:
            violations.append(Violation(ViolationKind.BACKWARD, pair, where))
        if edge.key in seen:
            violations.append(Violation(ViolationKind.DUPLICATE, pair, where))
        seen.add(edge.key)
        if edge.age < 0:
            violations.append(
                Violation(ViolationKind.NEGATIVE_AGE, f"{pair} age {edge.age}", where)
            )
        if not (math.isfinite(edge.weight) and math.isfinite(edge.momentum)):
            violations.append(Violation(ViolationKind.NON_FINITE, f"{pair} weight/momentum", where))

    hidden = set(net.hidden_layers)
    for layer in sorted(hidden ^ set(net.norm_state)):
        violations.append(
            Violation(
                ViolationKind.NORM_SHAPE,
                f"norm state present for {'non-hidden' if layer not in hidden else 'no'} layer",
                f"norm_state[{layer}]",
            )
        )
    for layer in sorted(hidden & set(net.norm_state)):
        where = f"norm_state[{layer}]"
        width = net.layer_widths[layer]
        for name, arr in net.norm_state[layer].arrays().items():
            if arr.shape != (width,):
                violations.append(
                    Violation(
                        ViolationKind.NORM_SHAPE, f"{name} shape {arr.shape} != ({width},)", where
                    )
                )
            elif not np.all(np.isfinite(arr)):
                violations.append(Violation(ViolationKind.NON_FINITE, name, where))
        running_var = net.norm_state[layer].running_var
        if running_var.shape == (width,) and np.any(running_var < 0):
            violations.append(Violation(ViolationKind.NEGATIVE_VARIANCE, "running_var < 0", where))

    return violations


@dataclass
class GrowthResult:
    grown: list[Edge]
    skipped: list[tuple[EdgeKey, str]]

    @property
    def count(self) -> int:
        return len(self.grown)


def grow_edges(
    net: Network,
    pairs: Iterable[EdgeKey],
    init_mode: InitMode = InitMode.ZERO,
    seed: int | tuple[int, ...] | None = None,
) -> GrowthResult:
    """Add one edge per legal pair; illegal or duplicate pairs are skipped.

    New edges start with age 0 and momentum 0. ``scaled_random`` draws each
    weight uniformly in ±1/sqrt(fan_in) where fan_in is the in-degree of the
    destination once the edge exists.
    """
    rng: np.random.Generator | None = None
    if init_mode is InitMode.SCALED_RANDOM:
        if seed is None:
            raise TopologyError("scaled_random growth requires a seed")
        rng = np.random.default_rng(seed)

    grown: list[Edge] = []
    skipped: list[tuple[EdgeKey, str]] = []
    for src, dst in pairs:
        reason = net.rejection_reason(src, dst)
        if reason is not None:
            skipped.append(((src, dst), reason))
            continue
        edge = Edge(src, dst, 0.0)
        net.add_edge(edge)
        if rng is not None:
            bound = FAN_IN_GAIN / math.sqrt(max(1, net.in_degree(dst)))
            edge.weight = float(rng.uniform(-bound, bound))
        grown.append(edge)

    if skipped:
        logger.debug("grow_edges skipped %d pair(s)", len(skipped))
    return GrowthResult(grown, skipped)


def prune_edges(net: Network, count: int, protected: Iterable[EdgeKey] = ()) -> list[Edge]:
    """Remove ``count`` unprotected edges in ascending |weight| order.

    Ties are broken by the (src.layer, src.index, dst.layer, dst.index) tuple.
    """
    if count < 0:
        raise TopologyError(f"prune count must be non-negative, got {count}")
    protected = set(protected)
    candidates = [e for e in net.edges if e.key not in protected]
    if count > len(candidates):
        raise TopologyError(
            f"cannot prune {count} edges: only {len(candidates)} unprotected "
            f"(schedule misconfiguration)"
        )
    doomed = sorted(candidates, key=lambda e: (abs(e.weight), e.order_key()))[:count]
    net.remove_edges(doomed)
    return doomed
