"""Few-shot adaptation without forgetting.

Phase 1 trains a network on the base classes. Phase 2 extends the output
layer with one node per novel class and adapts on the support shots only,
in two arms that share the phase-1 network, seeds and step budget:

- livewired: the novel outputs start with no incoming edges. Rewiring (with
  output nodes admitted to the queue) has to grow their connectivity, and
  young edges learn faster than established ones.
- control: fixed topology with every last-hidden node wired to every novel
  output at weight zero, and one global learning rate (``eta_new``).

Both arms report base-task accuracy before and after adaptation and the
novel-class query accuracy.
"""

import logging
import math
from pathlib import Path

import numpy as np
from pydantic import BaseModel, computed_field

from livewire.config import RunConfig, save_run_config
from livewire.constants import (
    CONFIG_SNAPSHOT_FILENAME,
    FEWSHOT_NOVEL_ACC_RATIO,
    FEWSHOT_REPORT_FILENAME,
)
from livewire.data.dataset import Dataset
from livewire.data.tasks import FewShotProtocol, gen_fewshot
from livewire.models import InitMode, NodeRef
from livewire.topology import Network, grow_edges
from livewire.training.trainer import Trainer, evaluate, train

logger = logging.getLogger(__name__)


class ArmResult(BaseModel):
    base_acc_before: float
    base_acc_after: float
    novel_acc: float
    edges_grown: int
    edge_count: int

    @computed_field
    @property
    def base_drop(self) -> float:
        return self.base_acc_before - self.base_acc_after


class FewShotReport(BaseModel):
    seed: int
    shots: int
    adaptation_steps: int
    livewired: ArmResult
    control: ArmResult
    forgetting_ok: bool
    novel_ok: bool

    @computed_field
    @property
    def criterion_met(self) -> bool:
        return self.forgetting_ok and self.novel_ok


class FewShotSummary(BaseModel):
    runs: int
    forgetting_ok: int
    novel_ok: int
    both_ok: int
    passed: bool


def _accuracy(net: Network, data: Dataset, cfg: RunConfig) -> float:
    result = evaluate(net, data, cfg.loss)
    return result.accuracy if result.accuracy is not None else 0.0


def _adapt(
    trainer: Trainer, support: Dataset, base_test: Dataset, query: Dataset, steps: int
) -> ArmResult:
    net = trainer.net
    before = _accuracy(net, base_test, trainer.cfg)
    batch = support.as_batch()
    for _ in range(steps):
        trainer.train_step(batch)
    return ArmResult(
        base_acc_before=before,
        base_acc_after=_accuracy(net, base_test, trainer.cfg),
        novel_acc=_accuracy(net, query, trainer.cfg),
        edges_grown=len(trainer.grown_history),
        edge_count=net.edge_count,
    )


def _fit_widths(cfg: RunConfig, protocol: FewShotProtocol) -> RunConfig:
    widths = [protocol.input_dim, *cfg.layer_widths[1:-1], protocol.base_classes]
    if widths != cfg.layer_widths:
        logger.info("layer widths adjusted to the protocol: %s -> %s", cfg.layer_widths, widths)
    return cfg.model_copy(update={"layer_widths": widths})


def run_fewshot(
    cfg: RunConfig, protocol: FewShotProtocol, out_dir: Path | None = None
) -> FewShotReport:
    """Run both arms for one protocol seed; write the report to ``out_dir`` if given."""
    cfg = _fit_widths(cfg, protocol)
    if cfg.growth_peak == 0 and cfg.growth_base == 0 and cfg.growth_floor == 0:
        logger.warning("growth schedule is zero: novel outputs can never be connected")
    splits = gen_fewshot(protocol)

    base = train(cfg, splits.base_train).network
    total = protocol.total_classes
    base_test = splits.base_test.with_classes(total)
    support, query = splits.novel_support, splits.novel_query

    livewired_net = base.copy()
    livewired_net.add_output_nodes(protocol.novel_classes)
    livewired = Trainer(
        cfg,
        livewired_net,
        rewire_cfg=cfg.rewire_config().model_copy(update={"queue_outputs": True}),
    )

    control_net = base.copy()
    novel_nodes = control_net.add_output_nodes(protocol.novel_classes)
    last_hidden = control_net.n_layers - 2
    dense = [
        (NodeRef(last_hidden, i), dst)
        for i in range(control_net.layer_widths[last_hidden])
        for dst in novel_nodes
    ]
    grow_edges(control_net, dense, InitMode.ZERO)
    flat_rate = cfg.optimizer_config()
    flat_rate = flat_rate.model_copy(
        update={
            "schedule": flat_rate.schedule.model_copy(
                update={"eta_floor": flat_rate.schedule.eta_new}
            ),
            "rate_boost": False,
        }
    )
    control = Trainer(cfg, control_net, optimizer_cfg=flat_rate, rewiring=False)

    steps = protocol.adaptation_steps
    lw = _adapt(livewired, support, base_test, query, steps)
    ctrl = _adapt(control, support, base_test, query, steps)
    report = FewShotReport(
        seed=protocol.seed,
        shots=protocol.shots,
        adaptation_steps=steps,
        livewired=lw,
        control=ctrl,
        forgetting_ok=lw.base_drop <= ctrl.base_drop,
        novel_ok=lw.novel_acc >= FEWSHOT_NOVEL_ACC_RATIO * ctrl.novel_acc,
    )
    logger.info(
        "few-shot seed %d: base drop %.3f (control %.3f), novel acc %.3f (control %.3f)",
        protocol.seed,
        lw.base_drop,
        ctrl.base_drop,
        lw.novel_acc,
        ctrl.novel_acc,
    )
    if not report.criterion_met:
        logger.warning("few-shot seed %d: livewired arm did not meet the criterion", protocol.seed)

    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        save_run_config(cfg, out_dir / CONFIG_SNAPSHOT_FILENAME)
        path = out_dir / FEWSHOT_REPORT_FILENAME
        path.write_text(report.model_dump_json(indent=2) + "\n", encoding="utf-8")
    return report


def summarize_fewshot(reports: list[FewShotReport], required_ratio: float = 0.8) -> FewShotSummary:
    """Count the seeds meeting each criterion; pass when enough meet both."""
    both = sum(r.criterion_met for r in reports)
    return FewShotSummary(
        runs=len(reports),
        forgetting_ok=sum(r.forgetting_ok for r in reports),
        novel_ok=sum(r.novel_ok for r in reports),
        both_ok=both,
        passed=bool(reports) and both >= math.ceil(required_ratio * len(reports)),
    )


def mean_drop(reports: list[FewShotReport]) -> tuple[float, float]:
    """Mean base-accuracy drop of the livewired and control arms."""
    if not reports:
        return (0.0, 0.0)
    return (
        float(np.mean([r.livewired.base_drop for r in reports])),
        float(np.mean([r.control.base_drop for r in reports])),
    )
