"""Livewiring: grow edges between strongly activated nodes, prune weak ones.

One rewiring round over the trace of a batch:

1. ``collect_queue`` keeps the globally strongest nodes (mean |normalized|).
2. ``enumerate_candidates`` lists every absent forward pair among them that
   spans at least ``min_layer_gap`` layers.
3. ``score_candidates`` rates each pair by the |loss gradient| it would get as
   a zero-weight edge (or by the product of strengths, gradient-free).
4. ``plan_rewire`` takes the top K(step) and the round(r(step) * K) weakest
   existing edges; ``apply_plan`` grows then prunes.

Queue state never outlives the batch it was read from.
"""

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from livewire.config import RewireConfig
from livewire.domain.schedules import cyclic_rate, growth_count, round_half_up
from livewire.models import (
    ActivationQueue,
    Edge,
    EdgeKey,
    LivewireError,
    NodeRef,
    QueueEntry,
    RewirePlan,
    ScoredPair,
    ScoringMode,
    StrengthAggregate,
)
from livewire.propagation import ActivationTrace, edge_gradients, standardize
from livewire.topology import GrowthResult, Network, density, grow_edges, prune_edges

logger = logging.getLogger(__name__)


class RewireError(LivewireError):
    """Raised when a rewiring stage is run out of order."""


def node_strengths(
    trace: ActivationTrace,
    aggregate: StrengthAggregate = StrengthAggregate.MEAN,
    include_outputs: bool = False,
) -> dict[NodeRef, float]:
    """Strength of every eligible node: aggregate of |normalized| over the batch.

    Input and hidden nodes are always eligible. Output nodes join only with
    ``include_outputs``; their strength is read from the standardized targets,
    the value supervision clamps them to.
    """
    reduce = np.mean if aggregate is StrengthAggregate.MEAN else np.max
    layers: list[tuple[int, np.ndarray]] = [
        (layer, trace.normalized[layer]) for layer in range(len(trace.layer_widths) - 1)
    ]
    if include_outputs:
        layers.append((len(trace.layer_widths) - 1, standardize(trace.targets)))

    strengths: dict[NodeRef, float] = {}
    for layer, values in layers:
        per_node = reduce(np.abs(values), axis=0)
        for index, value in enumerate(per_node):
            strengths[NodeRef(layer, index)] = float(value)
    return strengths


def collect_queue(
    trace: ActivationTrace,
    capacity: int,
    aggregate: StrengthAggregate = StrengthAggregate.MEAN,
    include_outputs: bool = False,
) -> ActivationQueue:
    """The ``capacity`` strongest nodes, ties broken by ascending NodeRef."""
    strengths = node_strengths(trace, aggregate, include_outputs)
    ranked = sorted(strengths.items(), key=lambda kv: (-kv[1], kv[0]))
    entries = [QueueEntry(node, strength) for node, strength in ranked[:capacity]]
    return ActivationQueue(capacity, entries)


def enumerate_candidates(
    queue: ActivationQueue, net: Network, cfg: RewireConfig
) -> list[EdgeKey]:
    """All absent forward pairs of queue nodes at least ``min_layer_gap`` layers apart."""
    nodes = sorted(queue.nodes)
    return [
        (u, v)
        for u in nodes
        for v in nodes
        if v.layer - u.layer >= cfg.min_layer_gap and not net.has_edge(u, v)
    ]


def distance_factor(src: NodeRef, dst: NodeRef, cfg: RewireConfig) -> float:
    return math.exp(cfg.distance_preference * (dst.layer - src.layer))


def score_candidates(
    pairs: Sequence[EdgeKey], trace: ActivationTrace, cfg: RewireConfig
) -> list[ScoredPair]:
    """Score each candidate pair, scaled by the layer-distance preference."""
    match cfg.scoring:
        case ScoringMode.GRADIENT:
            if not trace.has_backward:
                raise RewireError("gradient scoring needs backward() on the trace first")
            grads = edge_gradients(trace, pairs)
            raw = {pair: abs(grads[pair]) for pair in pairs}
        case ScoringMode.GRADIENT_FREE:
            strengths = node_strengths(trace, cfg.strength_aggregate, include_outputs=True)
            raw = {(u, v): strengths[u] * strengths[v] for u, v in pairs}
    return [ScoredPair(u, v, raw[(u, v)] * distance_factor(u, v, cfg)) for u, v in pairs]


def plan_rewire(
    net: Network,
    trace: ActivationTrace,
    cfg: RewireConfig,
    step: int,
    candidates: list[ScoredPair] | None = None,
) -> RewirePlan:
    """Choose the edges to grow and prune this round. Never mutates ``net``.

    Runs the queue, enumeration and scoring stages unless ``candidates`` are
    supplied. K(step) and the prune count are clipped to what is feasible.
    """
    if candidates is None:
        queue = collect_queue(trace, cfg.queue_capacity, cfg.strength_aggregate, cfg.queue_outputs)
        candidates = score_candidates(enumerate_candidates(queue, net, cfg), trace, cfg)

    wanted = growth_count(step, cfg.growth_schedule)
    if wanted > len(candidates):
        logger.debug("growth clipped from %d to %d candidate(s)", wanted, len(candidates))
    ranked = sorted(candidates, key=lambda c: (-c.score, c.src, c.dst))
    to_grow = [c.key for c in ranked[:wanted]]

    ratio = cyclic_rate(step, cfg.prune_ratio_schedule)
    n_prune = round_half_up(ratio * len(to_grow))
    growing = set(to_grow)
    prunable = [e for e in net.edges if e.key not in growing]
    if n_prune > len(prunable):
        logger.debug("prune clipped from %d to %d edge(s)", n_prune, len(prunable))
        n_prune = len(prunable)
    to_prune = sorted(prunable, key=lambda e: (abs(e.weight), e.order_key()))[:n_prune]

    return RewirePlan(candidates=candidates, to_grow=to_grow, to_prune=to_prune)


@dataclass
class MutationReport:
    grown: list[Edge] = field(default_factory=list)
    pruned: list[Edge] = field(default_factory=list)
    skipped: list[tuple[EdgeKey, str]] = field(default_factory=list)
    edge_count: int = 0
    density: float = 0.0


def apply_plan(
    net: Network, plan: RewirePlan, cfg: RewireConfig, seed: int | tuple[int, ...] | None = None
) -> MutationReport:
    """Grow then prune per ``plan``; edges grown this round are protected."""
    growth: GrowthResult = grow_edges(net, plan.to_grow, cfg.new_edge_init, seed)
    protected = {e.key for e in growth.grown}
    pruned = prune_edges(net, len(plan.to_prune), protected)
    report = MutationReport(
        grown=growth.grown,
        pruned=pruned,
        skipped=growth.skipped,
        edge_count=net.edge_count,
        density=density(net),
    )
    if report.grown or report.pruned:
        logger.info(
            "rewired: +%d -%d edges (now %d, density %.4f)",
            len(report.grown),
            len(report.pruned),
            report.edge_count,
            report.density,
        )
    return report
