import json

import pytest

from handover.cli import main


def test_gen_data_then_train(tmp_path, capsys):
    data, model = tmp_path / "d", tmp_path / "m.ck"
    assert main(["gen-data", "--seed", "42", "--samples-per-class", "2", "--out", str(data)]) == 0
    assert main(["train", "--data", str(data), "--epochs", "1", "--out", str(model)]) == 0
    assert model.exists()
    assert main(["eval-model", "--data", str(data), "--model", str(model)]) == 0
    assert "held-out accuracy" in capsys.readouterr().out


def test_unknown_subcommand_exits_2(capsys):
    assert main(["fly"]) == 2
    assert capsys.readouterr().err


def test_bad_config_exits_2(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"task": {"warp_speed": 9}}))
    assert main(["run-trial", "--config", str(cfg)]) == 2
    cfg.write_text("{not json")
    assert main(["run-trial", "--config", str(cfg)]) == 2
    assert "error" in capsys.readouterr().err


def test_runtime_error_exits_1(tmp_path, capsys):
    assert main(["eval-model", "--data", str(tmp_path / "nothing")]) == 1
    assert capsys.readouterr().err.startswith("handover: error")


def test_missing_required_output_is_usage_error(tmp_path):
    assert main(["gen-data", "--samples-per-class", "1"]) == 2


def test_run_trial_writes_event_log(tmp_path, desk_model, capsys):
    out = tmp_path / "log.csv"
    assert main(["run-trial", "--policy", "Ours", "--profile", "Attentive", "--seed", "1", "--out", str(out)]) == 0
    assert out.read_text().startswith("t,kind,detail\n")
    assert "blocks=4" in capsys.readouterr().err


def test_config_overrides_apply(tmp_path, desk_model):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"task": {"num_blocks": 1}, "experiment": {"seed": 3}}))
    out = tmp_path / "log.csv"
    assert main(["run-trial", "--config", str(cfg), "--out", str(out)]) == 0
    assert out.read_text().count("block_placed") == 1


def test_systematic_runs_are_byte_identical(tmp_path, desk_model):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["run-systematic", "--seed", "7", "--trials", "1", "--out", str(out)]) == 0
    assert (a / "metrics.csv").read_bytes() == (b / "metrics.csv").read_bytes()
    assert (a / "table.md").read_bytes() == (b / "table.md").read_bytes()
    before = (a / "metrics.csv").read_bytes()
    assert main(["report", "--out", str(a)]) == 0
    assert (a / "metrics.csv").read_bytes() == before


def test_help_exits_0(capsys):
    assert main(["--help"]) == 0
    assert "run-systematic" in capsys.readouterr().out
