import json

import pytest

from countlab.config import RunConfig, load_run_config
from countlab.errors import UsageError


def write_config(tmp_path, data):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(data))
    return path


class TestLoadRunConfig:
    def test_defaults_without_file(self):
        cfg = load_run_config(None)
        assert cfg.train.batch_size == 64
        assert cfg.generate.n == 20000
        assert len(cfg.classes) == 5

    def test_partial_overrides(self, tmp_path):
        path = write_config(tmp_path, {"seed": 7, "train": {"total_steps": 12, "warmup_steps": 3}})
        cfg = load_run_config(path)
        assert cfg.seed == 7
        assert cfg.train.total_steps == 12
        assert cfg.train.batch_size == 64  # untouched default

    def test_unknown_top_level_key(self, tmp_path):
        path = write_config(tmp_path, {"sede": 7})
        with pytest.raises(UsageError, match="sede"):
            load_run_config(path)

    def test_unknown_section_key(self, tmp_path):
        path = write_config(tmp_path, {"train": {"batchsize": 8}})
        with pytest.raises(UsageError, match="batchsize"):
            load_run_config(path)

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text("{not json")
        with pytest.raises(UsageError):
            load_run_config(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(UsageError):
            load_run_config(tmp_path / "absent.json")

    def test_bad_mode_weights(self, tmp_path):
        path = write_config(tmp_path, {"generate": {"mode_weights": {"bogus_mode": 1.0}}})
        with pytest.raises(UsageError, match="bogus_mode"):
            load_run_config(path)

    def test_classes_shape_checked(self, tmp_path):
        path = write_config(tmp_path, {"classes": [["dog"]]})
        with pytest.raises(UsageError):
            load_run_config(path)

    def test_classes_round_trip(self, tmp_path):
        path = write_config(tmp_path, {"classes": [["dog", "dogs"], ["cat", "cats"]]})
        cfg = load_run_config(path)
        assert cfg.classes == (("dog", "dogs"), ("cat", "cats"))

    def test_out_path_helper(self):
        cfg = RunConfig(out_dir="/tmp/x")
        assert str(cfg.out_path("pool.jsonl")) == "/tmp/x/pool.jsonl"
