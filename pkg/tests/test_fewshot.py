"""Unit tests for the few-shot adaptation harness."""

import json
import logging

import pytest

from livewire.config import RunConfig
from livewire.data.tasks import FewShotProtocol
from livewire.training.fewshot import (
    ArmResult,
    FewShotReport,
    mean_drop,
    run_fewshot,
    summarize_fewshot,
)

PROTOCOL = FewShotProtocol(
    base_classes=2,
    novel_classes=2,
    shots=5,
    base_train=20,
    base_test=10,
    novel_query=10,
    input_dim=6,
    adaptation_steps=0,
)


def _cfg(**overrides) -> RunConfig:
    base = dict(
        layer_widths=[6, 8, 6, 2],
        growth_base=2.0,
        growth_peak=2.0,
        growth_floor=2.0,
        rewire_interval=1,
        batch_size=10,
        epochs=2,
    )
    return RunConfig(**(base | overrides))


def _arm(before: float, after: float, novel: float) -> ArmResult:
    return ArmResult(
        base_acc_before=before, base_acc_after=after, novel_acc=novel, edges_grown=0, edge_count=10
    )


def _report(seed: int, lw: ArmResult, ctrl: ArmResult) -> FewShotReport:
    return FewShotReport(
        seed=seed,
        shots=5,
        adaptation_steps=10,
        livewired=lw,
        control=ctrl,
        forgetting_ok=lw.base_drop <= ctrl.base_drop,
        novel_ok=lw.novel_acc >= 0.7 * ctrl.novel_acc,
    )


class TestRunFewShot:
    def test_zero_adaptation_steps_leave_both_arms_untouched(self):
        """
        Given a protocol with no adaptation steps
        When both arms are run
        Then base accuracy does not move, novel outputs score alike in both arms,
             and the control arm carries one zero edge per last-hidden/novel pair
        """
        report = run_fewshot(_cfg(), PROTOCOL)

        lw, ctrl = report.livewired, report.control
        assert lw.base_acc_before == lw.base_acc_after == ctrl.base_acc_before
        assert lw.base_drop == 0.0
        assert lw.novel_acc == ctrl.novel_acc
        assert report.criterion_met
        assert ctrl.edge_count == lw.edge_count + 6 * 2

    def test_only_the_livewired_arm_grows(self):
        """
        Given a protocol with three adaptation steps
        When both arms are run
        Then only the livewired arm grows edges
        """
        protocol = PROTOCOL.model_copy(update={"adaptation_steps": 3})

        report = run_fewshot(_cfg(), protocol)

        assert report.livewired.edges_grown > 0
        assert report.control.edges_grown == 0
        assert report.adaptation_steps == 3

    def test_report_files(self, tmp_path):
        """
        Given an output directory
        When a few-shot run finishes
        Then the report and the effective config are written as JSON
        """
        run_fewshot(_cfg(), PROTOCOL, tmp_path)

        saved = json.loads((tmp_path / "fewshot_report.json").read_text())
        assert set(saved) >= {"livewired", "control", "criterion_met", "forgetting_ok"}
        assert "base_drop" in saved["livewired"]
        assert json.loads((tmp_path / "config.json").read_text())["layer_widths"] == [6, 8, 6, 2]

    def test_widths_follow_the_protocol(self, caplog):
        """
        Given a config whose input and output widths disagree with the protocol
        When the run starts
        Then the widths are adjusted with an info log and the arms still differ by the zero edges
        """
        with caplog.at_level(logging.INFO, logger="livewire.training.fewshot"):
            report = run_fewshot(_cfg(layer_widths=[3, 8, 6, 9]), PROTOCOL)

        assert "layer widths adjusted" in caplog.text
        assert report.control.edge_count == report.livewired.edge_count + 6 * 2

    def test_warns_when_growth_is_off(self, caplog):
        """
        Given a config whose growth schedule is zero everywhere
        When the run starts
        Then a warning says the livewired arm cannot grow
        """
        cfg = _cfg(growth_base=0.0, growth_peak=0.0, growth_floor=0.0)

        with caplog.at_level(logging.WARNING, logger="livewire.training.fewshot"):
            run_fewshot(cfg, PROTOCOL)

        assert "growth schedule is zero" in caplog.text


class TestSummaries:
    def test_counts_each_criterion(self):
        """
        Given three reports that pass both, only novel, and only forgetting criteria
        When they are summarized
        Then each criterion is counted and only all-passing seeds pass
        """
        reports = [
            _report(0, _arm(0.9, 0.85, 0.8), _arm(0.9, 0.7, 0.9)),
            _report(1, _arm(0.9, 0.6, 0.8), _arm(0.9, 0.7, 0.9)),
            _report(2, _arm(0.9, 0.9, 0.1), _arm(0.9, 0.7, 0.9)),
        ]

        summary = summarize_fewshot(reports)

        assert (summary.runs, summary.forgetting_ok, summary.novel_ok) == (3, 2, 2)
        assert summary.both_ok == 1
        assert not summary.passed
        assert summarize_fewshot(reports[:1]).passed

    def test_empty_summary_does_not_pass(self):
        """
        Given no reports
        When they are summarized
        Then the summary does not pass and the mean drops are zero
        """
        assert not summarize_fewshot([]).passed
        assert mean_drop([]) == (0.0, 0.0)

    def test_mean_drop(self):
        """
        Given two reports with known base accuracy drops
        When the mean drop is computed
        Then each arm's drop is the average over seeds
        """
        reports = [
            _report(0, _arm(0.9, 0.8, 0.5), _arm(0.9, 0.6, 0.5)),
            _report(1, _arm(0.8, 0.8, 0.5), _arm(0.8, 0.7, 0.5)),
        ]

        lw, ctrl = mean_drop(reports)

        assert lw == pytest.approx(0.05)
        assert ctrl == pytest.approx(0.2)


@pytest.mark.slow
class TestDirectional:
    def test_ten_seed_comparison_is_reported(self, tmp_path):
        """
        Given ten protocol seeds with 10-shot adaptation
        When both arms run on each
        Then every seed writes a report and the summary counts agree with them
        """
        protocol = FewShotProtocol(adaptation_steps=50)
        cfg = _cfg(layer_widths=[8, 24, 24, 4], epochs=20, batch_size=20, rewire_interval=5)
        reports = [
            run_fewshot(cfg, protocol.model_copy(update={"seed": s}), tmp_path / str(s))
            for s in range(10)
        ]

        summary = summarize_fewshot(reports)

        assert summary.runs == 10
        assert summary.both_ok == sum(r.criterion_met for r in reports)
        assert all((tmp_path / str(s) / "fewshot_report.json").exists() for s in range(10))
        assert all(r.control.novel_acc > 0.5 for r in reports)
