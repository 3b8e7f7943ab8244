"""Credibility-weighted momentum optimizer.

Every edge learns at a rate that depends on how long it has existed:

    rate(edge) = global_scale(step) * eta(edge.age)

so freshly grown edges adapt quickly while established ones settle. Norm
scale/shift parameters exist from the start, so their age is the network's
step count.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from livewire.config import CredibilitySchedule, OptimizerConfig
from livewire.domain.schedules import credibility_eta, cyclic_rate
from livewire.models import Edge, EdgeKey, LivewireError
from livewire.propagation import Gradients
from livewire.topology import Network

logger = logging.getLogger(__name__)


class PlasticityError(LivewireError):
    """Raised for gradients the optimizer refuses to apply."""


def effective_rate(age: int, step: int, schedule: CredibilitySchedule) -> float:
    return cyclic_rate(step, schedule.global_scale) * credibility_eta(age, schedule)


@dataclass
class UpdateReport:
    step: int
    updated: int
    stale: list[EdgeKey] = field(default_factory=list)
    mean_abs_update: float = 0.0
    clip_scale: float = 1.0
    boosted: int = 0
    rates: dict[EdgeKey, float] = field(default_factory=dict, repr=False)
    age_quantiles: tuple[float, float, float] = (0.0, 0.0, 0.0)


def _global_norm(edge_grads: list[float], grads: Gradients) -> float:
    total = math.fsum(g * g for g in edge_grads)
    for dscale, dshift in grads.norm.values():
        total += float(np.sum(dscale**2) + np.sum(dshift**2))
    return math.sqrt(total)


def _boost_threshold(edges: list[Edge], percentile: float) -> float:
    return float(np.percentile([e.grad_ema for e in edges], percentile))


def step(
    net: Network, grads: Gradients, cfg: OptimizerConfig, step_index: int | None = None
) -> UpdateReport:
    """Apply one optimizer step to every edge currently in ``net``.

    Gradients for edges that no longer exist are reported as stale and
    ignored. Edges without an entry in ``grads`` get a zero gradient.
    """
    if step_index is None:
        step_index = net.step_count
    schedule = cfg.schedule

    stale = [key for key in grads.edges if net.get_edge(*key) is None]
    if stale:
        logger.warning("ignoring %d stale gradient(s), first %s->%s", len(stale), *stale[0])

    edges = list(net.edges)
    edge_grads = [grads.edges.get(e.key, 0.0) for e in edges]
    for edge, g in zip(edges, edge_grads, strict=True):
        if not math.isfinite(g):
            raise PlasticityError(f"non-finite gradient {g} on edge {edge.src}->{edge.dst}")
    for layer, (dscale, dshift) in grads.norm.items():
        if not (np.all(np.isfinite(dscale)) and np.all(np.isfinite(dshift))):
            raise PlasticityError(f"non-finite norm gradient in layer {layer}")

    clip_scale = 1.0
    if cfg.gradient_clip is not None:
        norm = _global_norm(edge_grads, grads)
        if norm > cfg.gradient_clip:
            clip_scale = cfg.gradient_clip / norm
            edge_grads = [g * clip_scale for g in edge_grads]

    global_scale = cyclic_rate(step_index, schedule.global_scale)
    threshold = math.inf
    if cfg.rate_boost and edges:
        for edge, g in zip(edges, edge_grads, strict=True):
            edge.grad_ema = cfg.grad_ema_decay * edge.grad_ema + (1 - cfg.grad_ema_decay) * abs(g)
        threshold = _boost_threshold(edges, cfg.rate_boost_percentile)

    report = UpdateReport(step=step_index, updated=len(edges), stale=stale, clip_scale=clip_scale)
    total_update = 0.0
    for edge, g in zip(edges, edge_grads, strict=True):
        rate = effective_rate(edge.age, step_index, schedule)
        if edge.grad_ema > threshold:
            rate = min(rate * cfg.rate_boost_factor, global_scale * schedule.eta_new)
            report.boosted += 1
        edge.momentum = cfg.momentum_coeff * edge.momentum + g
        update = rate * edge.momentum
        edge.weight = edge.weight - update
        edge.age += 1
        report.rates[edge.key] = rate
        total_update += abs(update)

    norm_rate = effective_rate(net.step_count, step_index, schedule)
    for layer, (dscale, dshift) in grads.norm.items():
        state = net.norm_state[layer]
        if state.scale.shape != dscale.shape:
            raise PlasticityError(f"norm gradient shape mismatch in layer {layer}")
        state.scale_momentum = cfg.momentum_coeff * state.scale_momentum + dscale * clip_scale
        state.shift_momentum = cfg.momentum_coeff * state.shift_momentum + dshift * clip_scale
        state.scale = state.scale - norm_rate * state.scale_momentum
        state.shift = state.shift - norm_rate * state.shift_momentum

    if edges:
        report.mean_abs_update = total_update / len(edges)
        ages = np.array([e.age for e in edges], dtype=np.float64)
        q = np.quantile(ages, [0.1, 0.5, 0.9])
        report.age_quantiles = (float(q[0]), float(q[1]), float(q[2]))
    net.step_count += 1
    return report
