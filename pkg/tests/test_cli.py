"""End-to-end tests of the command-line interface."""

from __future__ import annotations

import logging

import pandas as pd
import pytest

from mftraj import numpy_supported
from mftraj.cli import build_parser, log_level, main
from mftraj.const import (
    ADJACENCY_COLUMNS,
    EXIT_CONFIG_ERROR,
    EXIT_OK,
    EXIT_RUNTIME_ERROR,
    LOSS_CURVE_COLUMNS,
    PREDICTION_COLUMNS,
    REPORT_COLUMNS,
    SCENE_COLUMNS,
)
from mftraj.diagnostics import FEATURE_COLUMNS

TINY_MODEL = """\
# tiny network for tests
behavior_hidden = 8
position_hidden = 8
latent_dim = 4
attention_heads = 2
proj_dim = 4
max_agents = 8
gn_groups = 2
decoder_hidden = 16
gcn_layers = 1
lstm_layers = 1
batch_size = 4
t_h = 7
t_f = 5
"""


@pytest.fixture(autouse=True)
def reset_package_logger():
    """Drop the handler main() installs so it does not outlive captured streams."""
    yield
    logger = logging.getLogger("mftraj")
    logger.handlers.clear()
    logger.setLevel(logging.NOTSET)


def generate(path, *extra):
    return main(
        [
            "generate",
            "--out",
            str(path),
            "--kind",
            "lane_change",
            "--scenes",
            "8",
            "--agents",
            "2",
            "--history-frames",
            "8",
            "--future-frames",
            "5",
            *extra,
        ]
    )


@pytest.fixture
def tiny_config(tmp_path):
    """Config file with a tiny model."""
    path = tmp_path / "tiny.cfg"
    path.write_text(TINY_MODEL)
    return path


def test_generate_writes_splits(tmp_path, capsys):
    out = tmp_path / "scenes.csv"
    assert generate(out, "--val-fraction", "0.25", "--test-fraction", "0") == EXIT_OK
    assert pd.read_csv(out)["scene_id"].nunique() == 8
    assert pd.read_csv(tmp_path / "scenes.val.csv")["scene_id"].nunique() == 2
    assert not (tmp_path / "scenes.test.csv").exists()
    echoed = capsys.readouterr().out
    assert "kind = lane_change" in echoed
    assert (tmp_path / "scenes.csv.config.txt").read_text() == echoed


def test_generate_is_byte_identical(tmp_path):
    assert generate(tmp_path / "a.csv", "--seed", "4") == EXIT_OK
    assert generate(tmp_path / "b.csv", "--seed", "4") == EXIT_OK
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert generate(tmp_path / "c.csv", "--seed", "5") == EXIT_OK
    assert (tmp_path / "a.csv").read_bytes() != (tmp_path / "c.csv").read_bytes()


def test_generate_zero_scenes_writes_header(tmp_path):
    out = tmp_path / "empty.csv"
    assert main(["generate", "--out", str(out), "--scenes", "0"]) == EXIT_OK
    assert out.read_text().splitlines() == [",".join(SCENE_COLUMNS)]


@pytest.mark.parametrize(
    "argv",
    [
        ["generate", "--scenes", "3"],
        ["generate", "--out", "x.csv", "--scenes=-1"],
        ["generate", "--out", "x.csv", "--kind", "roundabout"],
        ["train", "--data", "missing.csv", "--out", "m.ckpt"],
        ["train", "--data", "d.csv", "--out", "m.ckpt", "--gn-groups", "7"],
    ],
)
def test_configuration_errors_exit_2(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == EXIT_CONFIG_ERROR


def test_malformed_config_file_exits_2(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("epochs = 3\nepochs = 4\n")
    assert main(["generate", "--out", str(tmp_path / "x.csv"), "--config", str(path)]) == EXIT_CONFIG_ERROR


def test_runtime_error_exits_1(tmp_path):
    data = tmp_path / "scenes.csv"
    generate(data)
    checkpoint = tmp_path / "broken.ckpt"
    checkpoint.write_bytes(b"garbage")
    argv = ["eval", "--data", str(data), "--checkpoint", str(checkpoint), "--out", str(tmp_path / "r.csv")]
    assert main(argv) == EXIT_RUNTIME_ERROR


def test_undecodable_data_exits_1_with_one_error(tmp_path, caplog):
    data = tmp_path / "bad.csv"
    data.write_bytes(b"\xff\xfe\x00garbage\n\xff\xff")
    argv = ["dump", "--data", str(data), "--out", str(tmp_path / "dump")]
    assert main(argv) == EXIT_RUNTIME_ERROR
    errors = [record for record in caplog.records if record.levelno >= logging.ERROR]
    assert len(errors) == 1
    assert "bad.csv" in errors[0].getMessage()


def test_unexpected_failure_exits_1(tmp_path, caplog, monkeypatch):
    def explode(*_args):
        raise RuntimeError("disk on fire")

    monkeypatch.setattr("mftraj.cli.run_command", explode)
    argv = ["dump", "--data", "d.csv", "--out", str(tmp_path / "dump")]
    assert main(argv) == EXIT_RUNTIME_ERROR
    errors = [record for record in caplog.records if record.levelno >= logging.ERROR]
    assert len(errors) == 1
    assert "RuntimeError: disk on fire" in errors[0].getMessage()


def test_eval_keeps_checkpoint_model_flags(tmp_path, tiny_config, caplog):
    data = tmp_path / "scenes.csv"
    assert generate(data) == EXIT_OK
    model = tmp_path / "model.ckpt"
    train_argv = ["train", "--config", str(tiny_config), "--data", str(data), "--out", str(model), "--epochs", "1"]
    assert main(train_argv) == EXIT_OK
    report = tmp_path / "report.csv"
    eval_argv = ["eval", "--data", str(data), "--checkpoint", str(model), "--out", str(report)]
    assert main([*eval_argv, "--plain-gcn", "--horizons", "0.5"]) == EXIT_OK
    assert "Ignoring plain_gcn" in caplog.text
    assert "plain_gcn = false" in (tmp_path / "report.csv.config.txt").read_text().splitlines()


def test_train_eval_predict_robustness_dump(tmp_path, tiny_config, capsys):
    data = tmp_path / "scenes.csv"
    assert generate(data, "--val-fraction", "0.25") == EXIT_OK
    model = tmp_path / "model.ckpt"
    train_argv = [
        "train",
        "--config",
        str(tiny_config),
        "--data",
        str(data),
        "--val-data",
        str(tmp_path / "scenes.val.csv"),
        "--out",
        str(model),
        "--epochs",
        "2",
    ]
    assert main(train_argv) == EXIT_OK
    assert "parameters = " in capsys.readouterr().out
    curve = pd.read_csv(tmp_path / "model.ckpt.loss.csv")
    assert list(curve.columns) == LOSS_CURVE_COLUMNS
    assert len(curve) == 2
    assert "epochs = 2" in (tmp_path / "model.ckpt.config.txt").read_text()

    again = tmp_path / "again.ckpt"
    assert main([*train_argv[:-3], str(again), "--epochs", "2"]) == EXIT_OK
    assert again.read_bytes() == model.read_bytes()

    report = tmp_path / "report.csv"
    eval_argv = ["eval", "--data", str(data), "--checkpoint", str(model), "--out", str(report)]
    assert main([*eval_argv, "--horizons", "0.5"]) == EXIT_OK
    table = pd.read_csv(report)
    assert list(table.columns) == REPORT_COLUMNS
    assert table.loc[0, "label"] == "model"
    assert table.loc[0, "scene_count"] == 8

    history = tmp_path / "history.csv"
    assert generate(history, "--future-frames", "0", "--val-fraction", "0", "--test-fraction", "0") == EXIT_OK
    predictions = tmp_path / "pred.csv"
    predict_argv = ["predict", "--data", str(history), "--checkpoint", str(model), "--out", str(predictions)]
    assert main([*predict_argv, "--drop", "2"]) == EXIT_OK
    table = pd.read_csv(predictions)
    assert list(table.columns) == PREDICTION_COLUMNS
    assert len(table) == 8 * 5

    sweep = tmp_path / "sweep.csv"
    robustness_argv = [
        "robustness",
        "--data",
        str(data),
        "--checkpoint",
        str(model),
        "--out",
        str(sweep),
        "--drops",
        "0,2",
        "--seeds",
        "0,1",
        "--horizons",
        "0.5",
    ]
    assert main(robustness_argv) == EXIT_OK
    assert pd.read_csv(sweep)["label"].tolist() == ["drop0", "drop2"]
    assert main([*robustness_argv, "--retrain"]) == EXIT_CONFIG_ERROR

    dump = tmp_path / "dump"
    assert main(["dump", "--config", str(tiny_config), "--data", str(data), "--out", str(dump)]) == EXIT_OK
    assert list(pd.read_csv(tmp_path / "dump.features.csv").columns) == FEATURE_COLUMNS
    assert list(pd.read_csv(tmp_path / "dump.adjacency.csv").columns) == ADJACENCY_COLUMNS


def test_dump_features_only(tmp_path, tiny_config):
    data = tmp_path / "scenes.csv"
    generate(data)
    dump = tmp_path / "only"
    argv = ["dump", "--config", str(tiny_config), "--data", str(data), "--out", str(dump), "--features"]
    assert main(argv) == EXIT_OK
    assert (tmp_path / "only.features.csv").exists()
    assert not (tmp_path / "only.adjacency.csv").exists()


def test_parser_aliases():
    flags = vars(build_parser().parse_args(["train", "--data", "d", "--out", "o", "--lr", "0.01", "-v"]))
    assert flags["learning_rate"] == "0.01"
    assert flags["verbose"] is True
    assert "epochs" not in flags


def test_version(capsys):
    with pytest.raises(SystemExit) as err:
        main(["--version"])
    assert err.value.code == 0
    assert "mftraj 0.1.0" in capsys.readouterr().out


@pytest.mark.parametrize(
    ("flags", "environ", "level"),
    [
        ({"verbose": True, "log_level": "error"}, {}, logging.DEBUG),
        ({"log_level": "error"}, {"MFTRAJ_LOG": "debug"}, logging.ERROR),
        ({}, {"MFTRAJ_LOG": "debug"}, logging.DEBUG),
        ({}, {}, logging.INFO),
        ({}, {"MFTRAJ_LOG": "chatty"}, logging.INFO),
    ],
)
def test_log_level(flags, environ, level):
    assert log_level(flags, environ) == level


def test_numpy_version_gate(caplog):
    caplog.set_level(logging.ERROR, logger="mftraj")
    assert numpy_supported("2.1.0")
    assert not numpy_supported("1.21.6")
    assert "requires numpy" in caplog.text


def test_boolean_flags_can_be_negated():
    parser = build_parser()
    flags = vars(parser.parse_args(["train", "--data", "d", "--out", "o", "--no-plain-gcn"]))
    assert flags["plain_gcn"] is False
    flags = vars(parser.parse_args(["train", "--data", "d", "--out", "o", "--plain-gcn", "--verbose"]))
    assert flags["plain_gcn"] is True
    assert flags["verbose"] is True
    assert "plain_gcn" not in vars(parser.parse_args(["train", "--data", "d", "--out", "o"]))
