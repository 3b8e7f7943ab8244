"""Read-only topology report for a saved network."""

from collections import Counter
from collections.abc import Sequence
from pathlib import Path

import numpy as np
from pydantic import BaseModel

from livewire.checkpoint import load_checkpoint
from livewire.infometrics import EventLog
from livewire.models import Edge, NodeRef
from livewire.topology import Network, density, density_by_distance
from livewire.training.metrics import MiSnapshot
from livewire.training.trainer import mi_snapshots


class EdgeView(BaseModel):
    src: str
    dst: str
    weight: float
    age: int


class NodeEdges(BaseModel):
    node: str
    incoming: list[EdgeView]
    outgoing: list[EdgeView]


class AgeBin(BaseModel):
    low: int
    high: int
    count: int


class InspectReport(BaseModel):
    layer_widths: list[int]
    step_count: int
    edge_count: int
    density: float
    density_by_distance: dict[int, float]
    # degree -> number of nodes with that degree
    in_degree: dict[int, int]
    out_degree: dict[int, int]
    age_histogram: list[AgeBin]
    nodes: list[NodeEdges]
    mi: list[MiSnapshot] | None = None


def _view(edge: Edge) -> EdgeView:
    return EdgeView(src=str(edge.src), dst=str(edge.dst), weight=edge.weight, age=edge.age)


def age_histogram(net: Network, max_bins: int = 10) -> list[AgeBin]:
    """Integer-aligned age bins; a single bin when every edge has the same age."""
    ages = np.array([e.age for e in net.edges], dtype=np.int64)
    if ages.size == 0:
        return []
    low, high = int(ages.min()), int(ages.max())
    if low == high:
        return [AgeBin(low=low, high=high, count=int(ages.size))]
    width = -(-(high - low + 1) // max_bins)
    bins = []
    for start in range(low, high + 1, width):
        stop = min(start + width - 1, high)
        count = int(np.sum((ages >= start) & (ages <= stop)))
        bins.append(AgeBin(low=start, high=stop, count=count))
    return bins


def degree_distribution(net: Network, incoming: bool) -> dict[int, int]:
    layers = range(1, net.n_layers) if incoming else range(net.n_layers - 1)
    degree = net.in_degree if incoming else net.out_degree
    counts = Counter(
        degree(NodeRef(layer, i)) for layer in layers for i in range(net.layer_widths[layer])
    )
    return dict(sorted(counts.items()))


def inspect_network(
    net: Network, nodes: Sequence[NodeRef] = (), events: EventLog | None = None
) -> InspectReport:
    views = [
        NodeEdges(
            node=str(node),
            incoming=[_view(e) for e in net.incoming(node)],
            outgoing=[_view(e) for e in net.outgoing(node)],
        )
        for node in nodes
    ]
    mi = None
    if events is not None:
        if nodes:
            wanted = [n for n in nodes if events.tracks(n)]
            subset = EventLog.from_arrays({n: events.events(n) for n in wanted}, events.threshold)
            mi = mi_snapshots(subset) if len(wanted) > 1 else []
        else:
            mi = mi_snapshots(events)
    return InspectReport(
        layer_widths=list(net.layer_widths),
        step_count=net.step_count,
        edge_count=net.edge_count,
        density=density(net),
        density_by_distance=density_by_distance(net),
        in_degree=degree_distribution(net, incoming=True),
        out_degree=degree_distribution(net, incoming=False),
        age_histogram=age_histogram(net),
        nodes=views,
        mi=mi,
    )


def inspect(
    checkpoint_path: Path, nodes: Sequence[NodeRef] = (), events_path: Path | None = None
) -> InspectReport:
    """Topology statistics, incident edges of ``nodes``, MI if an event log is given."""
    net = load_checkpoint(checkpoint_path)
    for node in nodes:
        if not net.contains(node):
            raise ValueError(f"node {node} is outside layer widths {net.layer_widths}")
    events = EventLog.load(events_path) if events_path is not None else None
    return inspect_network(net, nodes, events)
