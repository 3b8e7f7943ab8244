"""Checkpoint persistence for networks.

Schema on disk (a single JSON document):

    {
        "format_version": 1,
        "layer_widths": [4, 8, 3],
        "step_count": 120,
        "norm_state": {
            "1": {"scale": [...], "shift": [...], "running_mean": [...], "running_var": [...],
                  "scale_momentum": [...], "shift_momentum": [...]}
        },
        "edges": [
            {"src_layer": 0, "src_index": 2, "dst_layer": 2, "dst_index": 0,
             "weight": -0.125, "momentum": 0.0, "age": 17, "grad_ema": 0.0}
        ],
        "trainer_state": {"smoothed_loss": 0.41, "rewire_rounds": 12}
    }

Reals are written with Python's shortest round-trip representation, so a
load after a save reproduces every float bit for bit. ``trainer_state`` is
optional and opaque to this module.
"""

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, ValidationError

from livewire.constants import CHECKPOINT_FORMAT_VERSION
from livewire.models import Edge, LivewireError, NodeRef
from livewire.topology import Network, NormState, validate


class CheckpointError(LivewireError):
    """Raised when a checkpoint cannot be written, parsed, or validated."""


class EdgeRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")

    src_layer: int
    src_index: int
    dst_layer: int
    dst_index: int
    weight: float
    momentum: float
    age: int
    grad_ema: float = 0.0


class NormRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")

    scale: list[float]
    shift: list[float]
    running_mean: list[float]
    running_var: list[float]
    scale_momentum: list[float] | None = None
    shift_momentum: list[float] | None = None


class CheckpointDocument(BaseModel):
    model_config = ConfigDict(extra="forbid")

    format_version: int
    layer_widths: list[int]
    step_count: int
    norm_state: dict[int, NormRecord]
    edges: list[EdgeRecord]
    trainer_state: dict[str, float | int] | None = None


@dataclass
class Checkpoint:
    network: Network
    trainer_state: dict[str, float | int] = field(default_factory=dict)


def _to_document(net: Network, trainer_state: dict[str, float | int] | None) -> dict:
    return {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "layer_widths": list(net.layer_widths),
        "step_count": net.step_count,
        "norm_state": {
            str(layer): {name: arr.tolist() for name, arr in state.arrays().items()}
            for layer, state in sorted(net.norm_state.items())
        },
        "edges": [
            {
                "src_layer": e.src.layer,
                "src_index": e.src.index,
                "dst_layer": e.dst.layer,
                "dst_index": e.dst.index,
                "weight": e.weight,
                "momentum": e.momentum,
                "age": e.age,
                "grad_ema": e.grad_ema,
            }
            for e in net.edges
        ],
        "trainer_state": trainer_state,
    }


def save_checkpoint(
    net: Network, path: Path, trainer_state: dict[str, float | int] | None = None
) -> None:
    """Write ``net`` to ``path`` atomically. The network must be valid."""
    violations = validate(net)
    if violations:
        raise CheckpointError(f"refusing to save invalid network: {violations[0]}")
    try:
        text = json.dumps(_to_document(net, trainer_state), indent=1, allow_nan=False)
    except ValueError as exc:
        raise CheckpointError(f"{path}: non-finite value in trainer state: {exc}") from exc

    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text + "\n", encoding="utf-8")
    tmp.replace(path)


def _format_loc(loc: tuple) -> str:
    out = ""
    for part in loc:
        out += f"[{part}]" if isinstance(part, int) else (f".{part}" if out else str(part))
    return out


def read_checkpoint(path: Path) -> Checkpoint:
    """Load a checkpoint and its trainer state, validating every invariant."""
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise CheckpointError(f"{path}: cannot be read: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CheckpointError(
            f"{path}: malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from exc

    try:
        doc = CheckpointDocument.model_validate(raw)
    except ValidationError as exc:
        first = exc.errors()[0]
        raise CheckpointError(f"{path}: {_format_loc(first['loc'])}: {first['msg']}") from exc

    if doc.format_version != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: format_version {doc.format_version} is not supported "
            f"(expected {CHECKPOINT_FORMAT_VERSION})"
        )
    if len(doc.layer_widths) < 2 or any(w < 1 for w in doc.layer_widths):
        raise CheckpointError(f"{path}: layer_widths {doc.layer_widths} must be >= 2 positive")

    edges = [
        Edge(
            NodeRef(r.src_layer, r.src_index),
            NodeRef(r.dst_layer, r.dst_index),
            r.weight,
            r.momentum,
            r.age,
            r.grad_ema,
        )
        for r in doc.edges
    ]
    norm_state = {}
    for layer, rec in doc.norm_state.items():
        width = len(rec.scale)
        norm_state[layer] = NormState(
            scale=np.array(rec.scale, dtype=np.float64),
            shift=np.array(rec.shift, dtype=np.float64),
            running_mean=np.array(rec.running_mean, dtype=np.float64),
            running_var=np.array(rec.running_var, dtype=np.float64),
            scale_momentum=np.array(rec.scale_momentum or [0.0] * width, dtype=np.float64),
            shift_momentum=np.array(rec.shift_momentum or [0.0] * width, dtype=np.float64),
        )
    net = Network(doc.layer_widths, edges, norm_state, doc.step_count)

    violations = validate(net)
    if violations:
        detail = "; ".join(str(v) for v in violations[:5])
        raise CheckpointError(f"{path}: {len(violations)} invariant violation(s): {detail}")
    if doc.step_count < 0:
        raise CheckpointError(f"{path}: step_count must be non-negative")

    state = dict(doc.trainer_state or {})
    if any(isinstance(v, float) and not math.isfinite(v) for v in state.values()):
        raise CheckpointError(f"{path}: trainer_state holds a non-finite value")
    return Checkpoint(net, state)


def load_checkpoint(path: Path) -> Network:
    return read_checkpoint(path).network
