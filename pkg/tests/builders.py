"""Small networks, batches and datasets shared by the test modules."""

import numpy as np

from livewire.data.dataset import Batch, Dataset
from livewire.models import Edge, EdgeKey, LossKind, NodeRef
from livewire.propagation import ActivationTrace, Mode, TrainMode, backward, forward
from livewire.topology import Network


def n(layer: int, index: int) -> NodeRef:
    return NodeRef(layer, index)


def all_forward_pairs(widths: list[int]) -> list[EdgeKey]:
    return [
        (NodeRef(i, a), NodeRef(j, b))
        for i in range(len(widths))
        for j in range(i + 1, len(widths))
        for a in range(widths[i])
        for b in range(widths[j])
    ]


def random_network(
    widths: list[int], n_edges: int, seed: int, *, norm_noise: bool = False
) -> Network:
    """Random edge subset (skip edges included) with weights in [-1, 1]."""
    rng = np.random.default_rng(seed)
    pairs = all_forward_pairs(widths)
    chosen = sorted(rng.choice(len(pairs), size=min(n_edges, len(pairs)), replace=False))
    edges = [Edge(*pairs[int(k)], float(rng.uniform(-1.0, 1.0))) for k in chosen]
    net = Network(widths, edges)
    if norm_noise:
        for state in net.norm_state.values():
            width = state.scale.shape[0]
            state.scale = rng.uniform(0.5, 1.5, width)
            state.shift = rng.uniform(-0.5, 0.5, width)
            state.running_mean = rng.normal(0.0, 0.5, width)
            state.running_var = rng.uniform(0.5, 2.0, width)
    return net


def random_widths(rng: np.random.Generator, n_layers: int = 4) -> list[int]:
    return [int(w) for w in rng.integers(2, 6, size=n_layers)]


def random_batch(widths: list[int], size: int, seed: int) -> Batch:
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, widths[-1], size=size)
    return Batch(rng.normal(size=(size, widths[0])), np.eye(widths[-1])[labels])


def random_dataset(widths: list[int], size: int, seed: int) -> Dataset:
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, widths[-1], size=size)
    return Dataset.classification(rng.normal(size=(size, widths[0])), labels, widths[-1])


def absent_pairs(net: Network, limit: int | None = None) -> list[EdgeKey]:
    pairs = [
        (src, dst)
        for src, dst in all_forward_pairs(net.layer_widths)
        if net.rejection_reason(src, dst) is None
    ]
    return pairs if limit is None else pairs[:limit]


def traced(
    net: Network,
    batch: Batch,
    mode: Mode | None = None,
    loss: LossKind = LossKind.SOFTMAX_CROSS_ENTROPY,
) -> ActivationTrace:
    """Forward plus backward without touching the running statistics."""
    trace = forward(net, batch, mode or TrainMode(update_stats=False))
    backward(net, trace, loss)
    return trace
