"""Unit tests for config loading, validation, and persistence."""

import json
from pathlib import Path

import pytest

from livewire.config import (
    ConfigError,
    CyclicSchedule,
    RunConfig,
    load_run_config,
    parse_node_ref,
    read_json_object,
    save_run_config,
)
from livewire.models import CredibilityDecay, NodeRef, ScoringMode


def _write(path: Path, data: object) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data))
    return path


class TestParseNodeRef:
    def test_valid(self):
        """
        Given well-formed references with and without surrounding spaces
        When they are parsed
        Then the layer and index come back as a NodeRef
        """
        assert parse_node_ref("2:5") == NodeRef(2, 5)
        assert parse_node_ref(" 0:0 ") == NodeRef(0, 0)

    @pytest.mark.parametrize(
        ("text", "message"),
        [("3", "LAYER:INDEX"), ("a:1", "integer"), ("1:-2", "non-negative")],
    )
    def test_invalid(self, text, message):
        """
        Given a reference without a colon, with a letter, or with a negative index
        When it is parsed
        Then ValueError names what is wrong
        """
        with pytest.raises(ValueError, match=message):
            parse_node_ref(text)


class TestReadJsonObject:
    def test_strips_reserved_keys(self, tmp_path):
        """
        Given a config file with _comment keys
        When it is read
        Then the reserved keys are dropped and the rest kept
        """
        path = _write(tmp_path / "c.json", {"_comment": "hello", "epochs": 3})

        assert read_json_object(path) == {"epochs": 3}

    def test_invalid_json(self, tmp_path):
        """
        Given a file that is not JSON
        When it is read
        Then ConfigError says it is not valid JSON
        """
        path = tmp_path / "c.json"
        path.write_text("{not json")

        with pytest.raises(ConfigError, match="not valid JSON"):
            read_json_object(path)

    def test_non_object(self, tmp_path):
        """
        Given a file holding a JSON array
        When it is read
        Then ConfigError asks for a JSON object
        """
        with pytest.raises(ConfigError, match="must be a JSON object"):
            read_json_object(_write(tmp_path / "c.json", [1, 2]))

    def test_missing_file(self, tmp_path):
        """
        Given no file at the path
        When it is read
        Then ConfigError says it cannot be read
        """
        with pytest.raises(ConfigError, match="cannot be read"):
            read_json_object(tmp_path / "absent.json")


class TestLoadRunConfig:
    def test_defaults_from_empty_object(self, tmp_path):
        """
        Given a file holding an empty object
        When the run config is loaded
        Then it equals the default RunConfig
        """
        cfg = load_run_config(_write(tmp_path / "c.json", {}))

        assert cfg == RunConfig()

    def test_unknown_key(self, tmp_path):
        """
        Given a file with a misspelled key
        When the run config is loaded
        Then ConfigError reports an invalid RunConfig
        """
        path = _write(tmp_path / "c.json", {"eta_nwe": 0.1})

        with pytest.raises(ConfigError, match="invalid RunConfig"):
            load_run_config(path)

    @pytest.mark.parametrize(
        ("data", "message"),
        [
            ({"eta_new": 0.01, "eta_floor": 0.1}, "eta_floor must not exceed eta_new"),
            ({"layer_widths": [4, 0, 2]}, "at least 1"),
            ({"track_nodes": ["1:9"]}, "outside layer_widths"),
            ({"track_nodes": ["x"]}, "LAYER:INDEX"),
            ({"dropout_rate": 1.0}, "dropout_rate"),
        ],
    )
    def test_rejects_invalid_values(self, tmp_path, data, message):
        """
        Given a file with an out-of-range or inconsistent value
        When the run config is loaded
        Then ConfigError carries the validation message
        """
        path = _write(tmp_path / "c.json", data)

        with pytest.raises(ConfigError, match=message):
            load_run_config(path)

    def test_save_and_load(self, tmp_path):
        """
        Given a non-default config
        When it is saved into a new directory and loaded back
        Then the loaded config equals the original
        """
        cfg = RunConfig(
            layer_widths=[4, 6, 2],
            credibility_decay=CredibilityDecay.EXPONENTIAL,
            track_nodes=["1:0", "1:5"],
            gradient_clip=5.0,
        )
        path = tmp_path / "nested" / "config.json"

        save_run_config(cfg, path)

        assert load_run_config(path) == cfg


class TestSubConfigs:
    def test_flat_keys_feed_nested_configs(self):
        """
        Given a RunConfig with growth, plasticity, learning-rate, scoring and init keys set
        When the nested configs are built
        Then each carries the flat values it was given
        """
        cfg = RunConfig(
            growth_base=0.0,
            growth_peak=4.0,
            growth_floor=1.0,
            growth_warmup_steps=10,
            growth_decay_steps=20,
            eta_new=0.2,
            eta_floor=0.05,
            lr_peak=2.0,
            scoring=ScoringMode.GRADIENT_FREE,
            init_seed=42,
            track_nodes=["2:1"],
        )

        assert cfg.rewire_config().growth_schedule == CyclicSchedule(
            base=0.0, peak=4.0, floor=1.0, warmup_steps=10, decay_steps=20
        )
        assert cfg.rewire_config().scoring is ScoringMode.GRADIENT_FREE
        schedule = cfg.optimizer_config().schedule
        assert (schedule.eta_new, schedule.eta_floor) == (0.2, 0.05)
        assert schedule.global_scale.peak == 2.0
        assert cfg.init_config().seed == 42
        assert cfg.tracked_nodes == [NodeRef(2, 1)]

    def test_default_schedules_are_constant(self):
        """
        Given the default RunConfig
        When its growth and global learning-rate schedules are built
        Then they are constant at 0 and 1
        """
        cfg = RunConfig()

        assert cfg.rewire_config().growth_schedule == CyclicSchedule.constant(0.0)
        assert cfg.optimizer_config().schedule.global_scale == CyclicSchedule.constant(1.0)
