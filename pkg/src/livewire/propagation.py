"""Forward and backward passes over the cross-layer DAG.

Per hidden node the forward order is

    pre_norm = sum of weight * post_activation(src) over incoming edges
    normalized = (pre_norm - mean) / sqrt(var + eps)
    post_activation = dropout(relu(scale * normalized + shift))

with batch statistics in train mode and running statistics in eval mode.
Output nodes are the identity of their pre_norm; the loss applies softmax when
configured. Input and output layers are never normalized.

Edges are evaluated in dense blocks, one per (src layer, dst layer) pair that
has at least one edge. An absent edge is an exact zero inside its block, so a
zero-weight edge changes no output bit.
"""

import logging
from collections import defaultdict
from collections.abc import Iterable
from dataclasses import dataclass, field

import numpy as np

from livewire.constants import NORM_EPS, NORM_MOMENTUM
from livewire.data.dataset import Batch
from livewire.models import Edge, EdgeKey, LivewireError, LossKind
from livewire.topology import Network

logger = logging.getLogger(__name__)


class PropagationError(LivewireError):
    """Raised for malformed batches, non-finite values, or a stale trace."""


@dataclass(frozen=True)
class TrainMode:
    dropout_rate: float = 0.0
    seed: int | tuple[int, ...] = 0
    update_stats: bool = True


@dataclass(frozen=True)
class EvalMode:
    pass


EVAL = EvalMode()

Mode = TrainMode | EvalMode


@dataclass
class Block:
    """Dense weight block for every edge from ``src_layer`` into ``dst_layer``."""

    src_layer: int
    dst_layer: int
    edges: list[Edge]
    src_idx: np.ndarray
    dst_idx: np.ndarray
    weights: np.ndarray


def compile_blocks(net: Network) -> dict[int, list[Block]]:
    """Group edges into dense blocks keyed by destination layer, sources ascending."""
    grouped: dict[tuple[int, int], list[Edge]] = defaultdict(list)
    for edge in net.edges:
        grouped[(edge.src.layer, edge.dst.layer)].append(edge)

    blocks: dict[int, list[Block]] = defaultdict(list)
    for (i, j), edges in sorted(grouped.items()):
        src_idx = np.array([e.src.index for e in edges], dtype=np.intp)
        dst_idx = np.array([e.dst.index for e in edges], dtype=np.intp)
        weights = np.zeros((net.layer_widths[i], net.layer_widths[j]))
        weights[src_idx, dst_idx] = [e.weight for e in edges]
        blocks[j].append(Block(i, j, edges, src_idx, dst_idx, weights))
    return dict(blocks)


@dataclass
class ActivationTrace:
    """Everything a forward (and later backward) pass recorded for one batch.

    Lists are indexed by layer. Layer 0 holds the raw inputs as pre_norm and
    post_activation and the batch-standardized inputs as normalized. ``delta``
    is the per-sample derivative of the loss with respect to pre_norm, so that
    an edge gradient is the batch mean of delta(dst) * post_activation(src).
    """

    structure: str
    mode: Mode
    layer_widths: list[int]
    targets: np.ndarray
    pre_norm: list[np.ndarray]
    normalized: list[np.ndarray]
    post_activation: list[np.ndarray]
    activated: dict[int, np.ndarray] = field(default_factory=dict)
    dropout_mask: dict[int, np.ndarray] = field(default_factory=dict)
    batch_mean: dict[int, np.ndarray] = field(default_factory=dict)
    batch_var: dict[int, np.ndarray] = field(default_factory=dict)
    blocks: dict[int, list[Block]] = field(default_factory=dict, repr=False)
    delta: list[np.ndarray] | None = None
    grad_pre: list[np.ndarray] | None = None
    loss: float | None = None

    @property
    def outputs(self) -> np.ndarray:
        return self.post_activation[-1]

    @property
    def batch_size(self) -> int:
        return int(self.targets.shape[0])

    @property
    def has_backward(self) -> bool:
        return self.grad_pre is not None


@dataclass
class Gradients:
    """Result of a backward pass: per-edge and per-norm-parameter gradients."""

    edges: dict[EdgeKey, float]
    norm: dict[int, tuple[np.ndarray, np.ndarray]]
    loss: float


def standardize(x: np.ndarray) -> np.ndarray:
    """Column-wise batch standardization with the normalization epsilon."""
    return (x - x.mean(axis=0)) / np.sqrt(x.var(axis=0) + NORM_EPS)


def _check_finite(values: np.ndarray, layer: int, what: str) -> None:
    bad = np.argwhere(~np.isfinite(values))
    if bad.size:
        sample, index = (int(v) for v in bad[0])
        raise PropagationError(f"non-finite {what} at node {layer}:{index} (sample {sample})")


def forward(net: Network, batch: Batch, mode: Mode = EVAL) -> ActivationTrace:
    """Evaluate the network on ``batch`` and record the activation trace.

    Train mode normalizes with batch statistics, updates the running
    statistics (momentum 0.9) unless ``update_stats`` is off, and applies
    inverted dropout to hidden nodes.
    """
    widths = net.layer_widths
    if batch.inputs.shape[1] != widths[0]:
        raise PropagationError(f"input width {batch.inputs.shape[1]} != layer 0 width {widths[0]}")
    if batch.targets.shape[1] != widths[-1]:
        raise PropagationError(
            f"target width {batch.targets.shape[1]} != output width {widths[-1]}"
        )
    training = isinstance(mode, TrainMode)
    if training and batch.size < 2:
        raise PropagationError("train mode needs at least 2 samples for batch statistics")

    inputs = np.asarray(batch.inputs, dtype=np.float64)
    _check_finite(inputs, 0, "input")
    blocks = compile_blocks(net)
    trace = ActivationTrace(
        structure=net.structure_hash(),
        mode=mode,
        layer_widths=list(widths),
        targets=np.asarray(batch.targets, dtype=np.float64),
        pre_norm=[inputs],
        normalized=[standardize(inputs)],
        post_activation=[inputs],
        blocks=blocks,
    )
    rng = None
    if training and mode.dropout_rate > 0:
        rng = np.random.default_rng(mode.seed)

    for j in range(1, net.n_layers):
        z = np.zeros((batch.size, widths[j]))
        for block in blocks.get(j, ()):
            z += trace.post_activation[block.src_layer] @ block.weights
        _check_finite(z, j, "pre-activation")
        trace.pre_norm.append(z)

        if j == net.output_layer:
            trace.normalized.append(standardize(z))
            trace.post_activation.append(z)
            continue

        state = net.norm_state[j]
        if training:
            mean = z.mean(axis=0)
            var = z.var(axis=0)
            if mode.update_stats:
                state.running_mean = NORM_MOMENTUM * state.running_mean + (1 - NORM_MOMENTUM) * mean
                state.running_var = NORM_MOMENTUM * state.running_var + (1 - NORM_MOMENTUM) * var
        else:
            mean = state.running_mean
            var = state.running_var
        xhat = (z - mean) / np.sqrt(var + NORM_EPS)
        y = state.scale * xhat + state.shift
        activated = np.maximum(y, 0.0)
        if rng is not None:
            keep = rng.random(activated.shape) >= mode.dropout_rate
            post = activated * keep / (1.0 - mode.dropout_rate)
        else:
            keep = np.ones(activated.shape, dtype=bool)
            post = activated
        _check_finite(post, j, "activation")

        trace.batch_mean[j] = mean
        trace.batch_var[j] = var
        trace.normalized.append(xhat)
        trace.activated[j] = y
        trace.dropout_mask[j] = keep
        trace.post_activation.append(post)

    return trace


def loss_and_output_grad(
    outputs: np.ndarray, targets: np.ndarray, loss: LossKind
) -> tuple[float, np.ndarray]:
    """Batch-mean loss and its derivative with respect to the outputs."""
    if outputs.shape != targets.shape:
        raise PropagationError(f"outputs {outputs.shape} and targets {targets.shape} differ")
    batch = outputs.shape[0]
    match loss:
        case LossKind.MEAN_SQUARED_ERROR:
            diff = outputs - targets
            value = float(np.mean(diff**2))
            grad = 2.0 * diff / (batch * outputs.shape[1])
        case LossKind.SOFTMAX_CROSS_ENTROPY:
            if not (np.all((targets == 0) | (targets == 1)) and np.all(targets.sum(axis=1) == 1)):
                raise PropagationError("softmax cross-entropy requires one-hot targets")
            shifted = outputs - outputs.max(axis=1, keepdims=True)
            log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
            log_probs = shifted - log_norm
            value = float(-np.mean(np.sum(targets * log_probs, axis=1)))
            grad = (np.exp(log_probs) - targets) / batch
    if not np.isfinite(value):
        raise PropagationError(f"non-finite loss {value}")
    return value, grad


def backward(net: Network, trace: ActivationTrace, loss: LossKind) -> Gradients:
    """Backpropagate the batch-mean loss through the recorded trace.

    The derivative flows through dropout, rectifier and normalization exactly
    as applied in forward; in train mode that includes the batch-statistics
    coupling. Fills ``trace.delta`` and returns per-edge and norm gradients.
    """
    if net.structure_hash() != trace.structure:
        raise PropagationError("trace/net mismatch: the network changed since forward()")

    value, grad_out = loss_and_output_grad(trace.outputs, trace.targets, loss)
    batch = trace.batch_size
    n_layers = len(trace.layer_widths)
    training = isinstance(trace.mode, TrainMode)

    grad_pre: list[np.ndarray | None] = [None] * n_layers
    grad_post = [np.zeros((batch, w)) for w in trace.layer_widths]
    grad_pre[-1] = grad_out
    norm_grads: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    for j in range(n_layers - 1, 0, -1):
        if j != n_layers - 1:
            state = net.norm_state[j]
            upstream = grad_post[j]
            if isinstance(trace.mode, TrainMode) and trace.mode.dropout_rate > 0:
                upstream = upstream * trace.dropout_mask[j] / (1.0 - trace.mode.dropout_rate)
            d_act = upstream * (trace.activated[j] > 0)
            xhat = trace.normalized[j]
            norm_grads[j] = ((d_act * xhat).sum(axis=0), d_act.sum(axis=0))
            d_xhat = d_act * state.scale
            inv_std = 1.0 / np.sqrt(trace.batch_var[j] + NORM_EPS)
            if training:
                grad_pre[j] = inv_std * (
                    d_xhat - d_xhat.mean(axis=0) - xhat * (d_xhat * xhat).mean(axis=0)
                )
            else:
                grad_pre[j] = d_xhat * inv_std
        for block in trace.blocks.get(j, ()):
            grad_post[block.src_layer] += grad_pre[j] @ block.weights.T
    grad_pre[0] = grad_post[0]

    edge_grads: dict[EdgeKey, float] = {}
    for j, blocks in trace.blocks.items():
        for block in blocks:
            full = trace.post_activation[block.src_layer].T @ grad_pre[j]
            values = full[block.src_idx, block.dst_idx]
            for edge, g in zip(block.edges, values, strict=True):
                edge_grads[edge.key] = float(g)

    trace.grad_pre = [g for g in grad_pre if g is not None]
    trace.delta = [g * batch for g in trace.grad_pre]
    trace.loss = value
    return Gradients(edge_grads, norm_grads, value)


def edge_gradients(trace: ActivationTrace, pairs: Iterable[EdgeKey]) -> dict[EdgeKey, float]:
    """Gradient each pair would receive as a zero-weight edge on the traced batch.

    Equals the batch mean of delta(dst) * post_activation(src); adding such an
    edge leaves the forward pass untouched, so the value is exact.
    """
    if trace.grad_pre is None:
        raise PropagationError("edge gradients need a completed backward pass")
    out: dict[EdgeKey, float] = {}
    for src, dst in pairs:
        post = trace.post_activation[src.layer][:, src.index]
        out[(src, dst)] = float(post @ trace.grad_pre[dst.layer][:, dst.index])
    return out
