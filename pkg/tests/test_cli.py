import json
import os

import pytest

from cli import main

SMALL_RUN = {
    "experiment": "floor-spin", "n": 4, "trials": 2, "step_size": 0.05,
    "grad_tol": 1e-4, "max_steps": 5000, "verbose": False,
}


def write_config(tmp_path, data, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data, indent=2), encoding="utf-8")
    return str(path)


def test_run_prints_run_directory(tmp_path, capsys):
    out = tmp_path / "out"
    code = main(["run", "--config", write_config(tmp_path, SMALL_RUN), "--out", str(out), "--seed", "4"])
    assert code == 0
    run_dir = capsys.readouterr().out.strip()
    assert os.path.dirname(run_dir.rstrip(os.sep)) == str(out)
    with open(os.path.join(run_dir, "manifest.json"), encoding="utf-8") as f:
        manifest = json.load(f)
    assert manifest['status'] == "completed"
    assert manifest['config']['master_seed'] == 4


def test_config_error_exit_code(tmp_path, capsys):
    code = main(["run", "--config", write_config(tmp_path, dict(SMALL_RUN, trails=3))])
    assert code == 1
    assert "trails" in capsys.readouterr().err


def test_unreadable_config_exit_code(tmp_path):
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == 1


def test_data_error_exit_code(tmp_path):
    config = {"experiment": "gd-vs-sgd-mnist", "data_dir": str(tmp_path / "none"), "verbose": False}
    code = main(["run", "--config", write_config(tmp_path, config), "--out", str(tmp_path / "out")])
    assert code == 2


def test_list_and_show_config(capsys):
    assert main(["list"]) == 0
    assert "teacher-student" in capsys.readouterr().out
    assert main(["show-config", "sgd-spin"]) == 0
    assert json.loads(capsys.readouterr().out)['experiment'] == "sgd-spin"
    assert main(["show-config", "nope"]) == 1


def test_missing_subcommand_exits():
    with pytest.raises(SystemExit):
        main([])
