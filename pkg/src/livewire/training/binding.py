"""Coincidence-binding experiment.

Trains on a coincidence task and asks two questions:

1. Does mutual information between designated hidden nodes (the most
   pair-selective node in the first and in the last hidden layer) rise above
   its value at initialization? Asked twice: for the pair re-picked on the
   trained network and for the pair picked at initialization.
2. Do grown edges join nodes that prefer the same correlated pair more often
   than uniform random growth over admissible pairs would? Answered with a
   one-sided exact binomial test.

A node prefers the pair whose samples make it fire most often. Input nodes
prefer the pair their group belongs to; inputs of uncorrelated groups prefer
nothing.
"""

import logging

import numpy as np
from pydantic import BaseModel
from scipy.stats import binomtest

from livewire.config import RunConfig
from livewire.constants import MI_MIN_OBSERVATIONS
from livewire.data.dataset import Dataset
from livewire.data.tasks import CoincidenceTask, gen_coincidence
from livewire.infometrics import EventLog, mutual_information
from livewire.initializer import init_network
from livewire.models import EdgeKey, NodeRef
from livewire.propagation import EVAL, forward
from livewire.topology import Network
from livewire.training.trainer import TrainingError, train

logger = logging.getLogger(__name__)


class BindingReport(BaseModel):
    """One seed of the binding experiment.

    ``designated`` is re-picked on the trained network; ``initial_designated``
    is the pair picked at initialization, and ``mi_initial_pair_trained_bits``
    measures that same pair after training.
    """

    seed: int
    initial_designated: tuple[str, str]
    designated: tuple[str, str]
    mi_init_bits: float
    mi_initial_pair_trained_bits: float
    mi_trained_bits: float
    edges_grown: int
    same_pair_grown: int
    same_pair_expected_rate: float
    p_value: float

    @property
    def mi_increased(self) -> bool:
        return self.mi_trained_bits > self.mi_init_bits

    @property
    def mi_increased_for_initial_pair(self) -> bool:
        return self.mi_initial_pair_trained_bits > self.mi_init_bits


def node_events(net: Network, data: Dataset, threshold: float) -> dict[NodeRef, np.ndarray]:
    """Event stream of every node over the whole dataset, in eval mode."""
    trace = forward(net, data.as_batch(), EVAL)
    events: dict[NodeRef, np.ndarray] = {}
    for layer, values in enumerate(trace.normalized):
        for index in range(values.shape[1]):
            events[NodeRef(layer, index)] = values[:, index] > threshold
    return events


def selectivity(fired: np.ndarray, labels: np.ndarray, pair: int) -> float:
    """|P(fire | pair) - P(fire | other pairs)|."""
    inside = labels == pair
    if not inside.any() or inside.all():
        return 0.0
    return abs(float(fired[inside].mean()) - float(fired[~inside].mean()))


def preferred_pairs(
    events: dict[NodeRef, np.ndarray], labels: np.ndarray, task: CoincidenceTask
) -> dict[NodeRef, int | None]:
    pair_of_group = {g: p for p, pair in enumerate(task.correlated_pairs) for g in pair}
    prefs: dict[NodeRef, int | None] = {}
    for node, fired in events.items():
        if node.layer == 0:
            prefs[node] = pair_of_group.get(task.group_of(node.index))
            continue
        rates = [
            float(fired[labels == p].mean()) if (labels == p).any() else 0.0
            for p in range(task.n_classes)
        ]
        prefs[node] = int(np.argmax(rates)) if max(rates) > 0 else None
    return prefs


def designated_nodes(
    events: dict[NodeRef, np.ndarray], labels: np.ndarray, net: Network, pair: int = 0
) -> tuple[NodeRef, NodeRef]:
    """Most ``pair``-selective node of the first and of the last hidden layer."""
    first, last = 1, net.n_layers - 2

    def best(layer: int) -> NodeRef:
        nodes = [NodeRef(layer, i) for i in range(net.layer_widths[layer])]
        return max(nodes, key=lambda n: (selectivity(events[n], labels, pair), -n.index))

    return best(first), best(last)


def _mi(events: dict[NodeRef, np.ndarray], a: NodeRef, b: NodeRef, threshold: float) -> float:
    log = EventLog.from_arrays({a: events[a], b: events[b]}, threshold)
    return mutual_information(log, a, b).value_bits


def same_pair_rate(net: Network, prefs: dict[NodeRef, int | None], min_gap: int) -> float:
    """Share of admissible forward pairs whose endpoints prefer the same pair."""
    hits = total = 0
    by_layer: list[list[int | None]] = [
        [prefs.get(NodeRef(layer, i)) for i in range(width)]
        for layer, width in enumerate(net.layer_widths)
    ]
    for i in range(net.n_layers):
        for j in range(i + min_gap, net.n_layers):
            total += len(by_layer[i]) * len(by_layer[j])
            for p in {p for p in by_layer[i] if p is not None}:
                hits += by_layer[i].count(p) * by_layer[j].count(p)
    return hits / total if total else 0.0


def count_same_pair(grown: list[EdgeKey], prefs: dict[NodeRef, int | None]) -> int:
    return sum(
        1 for u, v in grown if prefs.get(u) is not None and prefs.get(u) == prefs.get(v)
    )


def run_binding(cfg: RunConfig, task: CoincidenceTask, n_samples: int = 1000) -> BindingReport:
    """Train one seed on ``task`` and compare the network before and after."""
    widths = [task.input_width, *cfg.layer_widths[1:-1], task.n_classes]
    if len(widths) < 4:
        raise TrainingError("the binding experiment needs at least two hidden layers")
    if n_samples < MI_MIN_OBSERVATIONS:
        raise TrainingError(f"the binding experiment needs >= {MI_MIN_OBSERVATIONS} samples")
    cfg = cfg.model_copy(update={"layer_widths": widths})
    data = gen_coincidence(task, n_samples)
    labels = data.labels if data.labels is not None else np.zeros(len(data), dtype=np.int64)
    threshold = cfg.event_threshold

    initial = init_network(widths, cfg.init_config())
    before = node_events(initial, data, threshold)
    a0, b0 = designated_nodes(before, labels, initial)
    mi_init = _mi(before, a0, b0, threshold)

    result = train(cfg, data, network=initial.copy())
    trained = result.network
    after = node_events(trained, data, threshold)
    a1, b1 = designated_nodes(after, labels, trained)
    mi_trained = _mi(after, a1, b1, threshold)
    mi_fixed = _mi(after, a0, b0, threshold)

    prefs = preferred_pairs(after, labels, task)
    rate = same_pair_rate(trained, prefs, cfg.min_layer_gap)
    hits = count_same_pair(result.grown, prefs)
    grown = len(result.grown)
    p_value = binomtest(hits, grown, rate, alternative="greater").pvalue if grown else 1.0
    logger.info(
        "binding seed %d: MI %.4f -> %.4f bits (initial pair %.4f), "
        "%d/%d grown edges bind a pair (chance %.3f)",
        task.seed,
        mi_init,
        mi_trained,
        mi_fixed,
        hits,
        grown,
        rate,
    )
    return BindingReport(
        seed=task.seed,
        initial_designated=(str(a0), str(b0)),
        designated=(str(a1), str(b1)),
        mi_init_bits=mi_init,
        mi_initial_pair_trained_bits=mi_fixed,
        mi_trained_bits=mi_trained,
        edges_grown=grown,
        same_pair_grown=hits,
        same_pair_expected_rate=rate,
        p_value=float(p_value),
    )


def pooled_p_value(reports: list[BindingReport]) -> float:
    """One-sided binomial p-value over all seeds, chance rate weighted by growth."""
    grown = sum(r.edges_grown for r in reports)
    if grown == 0:
        return 1.0
    hits = sum(r.same_pair_grown for r in reports)
    rate = sum(r.same_pair_expected_rate * r.edges_grown for r in reports) / grown
    return float(binomtest(hits, grown, rate, alternative="greater").pvalue)
