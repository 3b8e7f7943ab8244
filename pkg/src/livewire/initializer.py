"""Fractal sparse initialization.

Every layer connects to every later layer. Each of the width(i) x width(j)
possible edges between layers i < j exists independently with probability

    p(d) = clamp(s0 * exp(b * d), 0, 1),   d = j - i,   b < 0

so density shrinks exponentially with layer distance and the effective depth
of the network stays short.
"""

import logging
import math
from collections import deque

import numpy as np

from livewire.config import InitConfig
from livewire.constants import FAN_IN_GAIN
from livewire.models import Edge, LivewireError, NodeRef, WeightScaleRule
from livewire.topology import Network


logger = logging.getLogger(__name__)


class InitializerError(LivewireError):
    """Raised for layer shapes that cannot form a network."""


def connection_probability(layer_difference: int, cfg: InitConfig) -> float:
    p = cfg.sparsity_hyperparameter * math.exp(cfg.branching_factor * layer_difference)
    return min(1.0, max(0.0, p))


def init_network(layer_widths: list[int], cfg: InitConfig) -> Network:
    """Build a fresh network: distance-decaying topology, fresh norm state, age-0 edges."""
    if len(layer_widths) < 2:
        raise InitializerError(f"need at least 2 layers, got {len(layer_widths)}")
    if any(w < 1 for w in layer_widths):
        raise InitializerError(f"every layer width must be >= 1, got {layer_widths}")

    rng = np.random.default_rng(cfg.seed)
    pairs: list[tuple[NodeRef, NodeRef]] = []
    n_layers = len(layer_widths)
    for i in range(n_layers - 1):
        for j in range(i + 1, n_layers):
            p = connection_probability(j - i, cfg)
            mask = rng.random((layer_widths[i], layer_widths[j])) < p
            for a, b in zip(*np.nonzero(mask), strict=True):
                pairs.append((NodeRef(i, int(a)), NodeRef(j, int(b))))

    fan_in: dict[NodeRef, int] = {}
    for _, dst in pairs:
        fan_in[dst] = fan_in.get(dst, 0) + 1

    edges = []
    for src, dst in pairs:
        match cfg.weight_scale_rule:
            case WeightScaleRule.FAN_IN:
                bound = FAN_IN_GAIN / math.sqrt(max(1, fan_in[dst]))
                weight = float(rng.uniform(-bound, bound))
            case WeightScaleRule.FIXED:
                weight = float(rng.normal(0.0, cfg.weight_sigma))
        edges.append(Edge(src, dst, weight))

    net = Network(layer_widths, edges)
    unreachable = unreachable_outputs(net)
    if unreachable:
        logger.warning(
            "degenerate initialization: %d of %d output node(s) unreachable from the input "
            "(s0=%g, b=%g)",
            len(unreachable),
            layer_widths[-1],
            cfg.sparsity_hyperparameter,
            cfg.branching_factor,
        )
    logger.debug("initialized %s with %d edges", layer_widths, net.edge_count)
    return net


def unreachable_outputs(net: Network) -> list[NodeRef]:
    """Output nodes with no directed path from any input node."""
    frontier = deque(NodeRef(0, i) for i in range(net.layer_widths[0]))
    reached = set(frontier)
    while frontier:
        node = frontier.popleft()
        for edge in net.outgoing(node):
            if edge.dst not in reached:
                reached.add(edge.dst)
                frontier.append(edge.dst)
    return [
        NodeRef(net.output_layer, i)
        for i in range(net.layer_widths[-1])
        if NodeRef(net.output_layer, i) not in reached
    ]
