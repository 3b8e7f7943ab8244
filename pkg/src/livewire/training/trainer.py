"""Training loop orchestration.

Per batch: forward (train mode) -> backward -> rewire when the step is a
multiple of ``rewire_interval`` -> optimizer step. Rewiring reads the trace of
the current batch, and edges grown in that round take their first update from
the same batch.

Every stochastic draw depends only on a configured seed and the step (or the
epoch, for data order), so a run resumed from a checkpoint continues exactly
as the uninterrupted run would have.
"""

import dataclasses
import logging
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path

import numpy as np

from livewire.checkpoint import read_checkpoint, save_checkpoint
from livewire.config import OptimizerConfig, RewireConfig, RunConfig, save_run_config
from livewire.constants import (
    CHECKPOINT_FILENAME,
    CONFIG_SNAPSHOT_FILENAME,
    EPOCH_CHECKPOINT_TEMPLATE,
    EVENTS_FILENAME,
    METRICS_FILENAME,
    MI_MIN_OBSERVATIONS,
)
from livewire.data.dataset import Batch, BatchSource, DatasetError
from livewire.infometrics import EventLog, coincidence_stats, mutual_information
from livewire.initializer import init_network
from livewire.models import EdgeKey, LivewireError, LossKind
from livewire.plasticity import PlasticityError, UpdateReport
from livewire.plasticity import step as optimizer_step
from livewire.propagation import (
    EVAL,
    PropagationError,
    TrainMode,
    backward,
    edge_gradients,
    forward,
    loss_and_output_grad,
)
from livewire.rewire import (
    apply_plan,
    collect_queue,
    enumerate_candidates,
    plan_rewire,
    score_candidates,
)
from livewire.topology import Network, density, density_by_distance
from livewire.training.metrics import MetricsRecord, MetricsWriter, MiSnapshot

logger = logging.getLogger(__name__)


class TrainingError(LivewireError):
    """Raised when a run has to abort; the last good checkpoint stays on disk."""


@dataclass
class TrainerState:
    """Loop bookkeeping carried in the checkpoint's ``trainer_state``."""

    epoch: int = 0
    batch_in_epoch: int = 0
    rewire_rounds: int = 0
    smoothed_loss: float | None = None
    pending_grown: int = 0
    pending_pruned: int = 0

    def to_dict(self) -> dict[str, float | int]:
        return {k: v for k, v in dataclasses.asdict(self).items() if v is not None}

    @classmethod
    def from_dict(cls, data: dict[str, float | int]) -> "TrainerState":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise TrainingError(f"unknown trainer_state key(s): {', '.join(unknown)}")
        state = cls(**data)  # type: ignore[arg-type]
        for name in known - {"smoothed_loss"}:
            setattr(state, name, int(getattr(state, name)))
        return state


def _is_one_hot(targets: np.ndarray) -> bool:
    return bool(np.all((targets == 0) | (targets == 1)) and np.all(targets.sum(axis=1) == 1))


def _correct(outputs: np.ndarray, targets: np.ndarray) -> int | None:
    if not _is_one_hot(targets):
        return None
    return int(np.sum(outputs.argmax(axis=1) == targets.argmax(axis=1)))


@dataclass
class StepOutcome:
    step: int
    loss: float
    accuracy: float | None
    rewired: bool = False
    grown: list[EdgeKey] = field(default_factory=list)
    pruned: int = 0
    queue_strengths: list[float] = field(default_factory=list)
    update: UpdateReport | None = None


class Trainer:
    """Owns one network and advances it a batch at a time."""

    def __init__(
        self,
        cfg: RunConfig,
        net: Network,
        *,
        state: TrainerState | None = None,
        rewire_cfg: RewireConfig | None = None,
        optimizer_cfg: OptimizerConfig | None = None,
        rewiring: bool = True,
        events: EventLog | None = None,
    ) -> None:
        self.cfg = cfg
        self.net = net
        self.state = state or TrainerState()
        self.rewire_cfg = rewire_cfg or cfg.rewire_config()
        self.optimizer_cfg = optimizer_cfg or cfg.optimizer_config()
        self.rewiring = rewiring
        self.events = events
        self.grown_history: list[EdgeKey] = []

    def should_rewire(self, step: int) -> bool:
        if not self.rewiring or step % self.cfg.rewire_interval != 0:
            return False
        if self.cfg.adaptive_rewire and self.state.smoothed_loss is not None:
            return self.state.smoothed_loss > self.cfg.adaptive_loss_threshold
        return True

    def train_step(self, batch: Batch) -> StepOutcome:
        net, cfg, rc = self.net, self.cfg, self.rewire_cfg
        step = net.step_count
        mode = TrainMode(dropout_rate=cfg.dropout_rate, seed=(cfg.dropout_seed, step))
        try:
            trace = forward(net, batch, mode)
            grads = backward(net, trace, cfg.loss)
        except PropagationError as exc:
            raise TrainingError(f"aborted at step {step}: {exc}") from exc
        if self.events is not None:
            self.events.record(trace)

        correct = _correct(trace.outputs, trace.targets)
        outcome = StepOutcome(
            step, grads.loss, None if correct is None else correct / batch.size
        )

        if self.should_rewire(step):
            queue = collect_queue(trace, rc.queue_capacity, rc.strength_aggregate, rc.queue_outputs)
            candidates = score_candidates(enumerate_candidates(queue, net, rc), trace, rc)
            plan = plan_rewire(net, trace, rc, step, candidates)
            report = apply_plan(net, plan, rc, seed=(cfg.growth_seed, step))
            outcome.rewired = True
            outcome.grown = [e.key for e in report.grown]
            outcome.pruned = len(report.pruned)
            outcome.queue_strengths = [e.strength for e in queue.entries]
            for edge in report.pruned:
                grads.edges.pop(edge.key, None)
            grads.edges.update(edge_gradients(trace, outcome.grown))
            self.grown_history.extend(outcome.grown)
            self.state.rewire_rounds += 1
            self.state.pending_grown += len(outcome.grown)
            self.state.pending_pruned += outcome.pruned

        try:
            outcome.update = optimizer_step(net, grads, self.optimizer_cfg, step)
        except PlasticityError as exc:
            raise TrainingError(f"aborted at step {step}: {exc}") from exc

        a = cfg.loss_smoothing
        previous = self.state.smoothed_loss
        if previous is None:
            self.state.smoothed_loss = grads.loss
        else:
            self.state.smoothed_loss = a * previous + (1 - a) * grads.loss
        logger.debug("step %d loss %.6f", step, grads.loss)
        return outcome

    def record(self, outcome: StepOutcome) -> MetricsRecord:
        """Metrics record for ``outcome``; consumes the pending grow/prune counters."""
        net = self.net
        ages = [e.age for e in net.edges]
        strengths = outcome.queue_strengths
        record = MetricsRecord(
            step=outcome.step,
            epoch=self.state.epoch,
            loss=outcome.loss,
            accuracy=outcome.accuracy,
            edge_count=net.edge_count,
            density=density(net),
            density_by_distance=density_by_distance(net),
            edges_grown=self.state.pending_grown,
            edges_pruned=self.state.pending_pruned,
            rewire_rounds=self.state.rewire_rounds,
            mean_edge_age=float(np.mean(ages)) if ages else 0.0,
            mean_abs_update=outcome.update.mean_abs_update if outcome.update else 0.0,
            queue_size=len(strengths),
            queue_strength_max=max(strengths, default=0.0),
            queue_strength_mean=float(np.mean(strengths)) if strengths else 0.0,
        )
        interval = self.cfg.mi_interval
        if interval and self.events is not None and outcome.step % interval == 0:
            record.mi = mi_snapshots(self.events)
        self.state.pending_grown = 0
        self.state.pending_pruned = 0
        return record


def mi_snapshots(events: EventLog) -> list[MiSnapshot] | None:
    """MI and coincidence ratio for every tracked pair, once enough events exist."""
    if events.n_obs < MI_MIN_OBSERVATIONS:
        return None
    snapshots = []
    for a, b in combinations(events.nodes, 2):
        mi = mutual_information(events, a, b)
        stats = coincidence_stats(events, a, b)
        snapshots.append(
            MiSnapshot(
                a=str(a),
                b=str(b),
                mi_bits=mi.value_bits,
                coincidence_ratio=stats.ratio,
                n_obs=mi.n_obs,
            )
        )
    return snapshots


@dataclass
class TrainResult:
    network: Network
    state: TrainerState
    records: list[MetricsRecord]
    grown: list[EdgeKey]
    checkpoint: Path | None = None
    events: EventLog | None = None


def check_widths(net: Network, data: BatchSource) -> None:
    if data.input_width != net.layer_widths[0]:
        raise DatasetError(
            f"data has {data.input_width} input feature(s), network expects {net.layer_widths[0]}"
        )
    if data.output_width != net.layer_widths[-1]:
        raise DatasetError(
            f"data has {data.output_width} target column(s), network has "
            f"{net.layer_widths[-1]} output node(s)"
        )


def _save(out_dir: Path, trainer: Trainer, name: str) -> Path:
    path = out_dir / name
    save_checkpoint(trainer.net, path, trainer.state.to_dict())
    if trainer.events is not None:
        trainer.events.save(out_dir / EVENTS_FILENAME)
    logger.info("checkpoint written to %s (step %d)", path, trainer.net.step_count)
    return path


def train(
    cfg: RunConfig,
    data: BatchSource,
    out_dir: Path | None = None,
    *,
    resume_from: Path | None = None,
    network: Network | None = None,
    max_steps: int | None = None,
) -> TrainResult:
    """Train for ``cfg.epochs`` epochs over ``data``.

    With ``out_dir`` the effective config, metrics stream, event log and
    checkpoints (one per epoch plus a rolling ``checkpoint.json``) are
    written there. ``max_steps`` stops early after that many optimizer steps
    in total, leaving a resumable checkpoint.
    """
    if len(data) == 0:
        raise DatasetError("training data is empty")

    state = TrainerState()
    if resume_from is not None:
        ckpt = read_checkpoint(resume_from)
        net = ckpt.network
        state = TrainerState.from_dict(ckpt.trainer_state)
        logger.info("resuming from %s at step %d", resume_from, net.step_count)
    elif network is not None:
        net = network
    else:
        net = init_network(cfg.layer_widths, cfg.init_config())
    check_widths(net, data)

    events = None
    if cfg.tracked_nodes:
        events = EventLog(cfg.tracked_nodes, cfg.event_threshold)
        saved = None if out_dir is None else out_dir / EVENTS_FILENAME
        if resume_from is not None and saved is not None and saved.exists():
            events = EventLog.load(saved)

    trainer = Trainer(cfg, net, state=state, events=events)
    writer = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        save_run_config(cfg, out_dir / CONFIG_SNAPSHOT_FILENAME)
        writer = MetricsWriter(out_dir / METRICS_FILENAME, append=resume_from is not None)

    logger.info(
        "training %s for %d epoch(s), %d edges", net.layer_widths, cfg.epochs, net.edge_count
    )
    records: list[MetricsRecord] = []
    checkpoint = None
    stopped = False
    try:
        while state.epoch < cfg.epochs and not stopped:
            losses = []
            batches = data.batches(cfg.batch_size, seed=cfg.data_seed, epoch=state.epoch)
            for index, batch in enumerate(batches):
                if index < state.batch_in_epoch:
                    continue
                if max_steps is not None and net.step_count >= max_steps:
                    stopped = True
                    break
                state.batch_in_epoch = index + 1
                if batch.size < 2:
                    logger.debug("skipping a %d-sample batch in epoch %d", batch.size, state.epoch)
                    continue
                outcome = trainer.train_step(batch)
                losses.append(outcome.loss)
                if outcome.step % cfg.log_interval == 0:
                    record = trainer.record(outcome)
                    records.append(record)
                    if writer is not None:
                        writer.write(record)
            if stopped:
                break
            logger.info(
                "epoch %d done: mean loss %.6f, %d edges",
                state.epoch,
                float(np.mean(losses)) if losses else float("nan"),
                net.edge_count,
            )
            if out_dir is not None:
                _save(out_dir, trainer, EPOCH_CHECKPOINT_TEMPLATE.format(epoch=state.epoch))
            state.epoch += 1
            state.batch_in_epoch = 0
        if out_dir is not None:
            checkpoint = _save(out_dir, trainer, CHECKPOINT_FILENAME)
    finally:
        if writer is not None:
            writer.close()

    return TrainResult(net, state, records, trainer.grown_history, checkpoint, events)


@dataclass(frozen=True)
class EvalResult:
    loss: float
    accuracy: float | None
    n_samples: int


def evaluate(
    net: Network, data: BatchSource, loss: LossKind, batch_size: int = 256
) -> EvalResult:
    """Eval-mode loss and accuracy over the whole stream, in its natural order."""
    check_widths(net, data)
    total_loss = 0.0
    total_correct: int | None = 0
    n = 0
    for batch in data.batches(batch_size):
        trace = forward(net, batch, EVAL)
        value, _ = loss_and_output_grad(trace.outputs, trace.targets, loss)
        total_loss += value * batch.size
        correct = _correct(trace.outputs, trace.targets)
        if correct is None or total_correct is None:
            total_correct = None
        else:
            total_correct += correct
        n += batch.size
    if n == 0:
        raise DatasetError("evaluation data is empty")
    return EvalResult(
        loss=total_loss / n,
        accuracy=None if total_correct is None else total_correct / n,
        n_samples=n,
    )
