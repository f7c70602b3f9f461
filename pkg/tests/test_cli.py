import json

import pytest

from phyhsl.cli import main
from phyhsl.evaluation import read_rows

FAST = ["--epochs", "2", "--hidden", "4", "--hyperedges", "3", "--horizon", "4"]


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def workdir(tmp_path, capsys):
    code, out, _ = run(capsys, "--workdir", str(tmp_path), "generate", "--nodes", "12", "--n-samples", "16",
                       "--out", "data", "--seed", "3")
    assert code == 0
    assert json.loads(out)["shape"] == [12, 16, 1]
    return tmp_path


def test_generate_writes_dataset(workdir):
    assert {p.name for p in (workdir / "data").iterdir()} == {"edges.csv", "states.csv", "meta.json"}


def test_train_then_predict(workdir, capsys):
    code, out, _ = run(capsys, "--workdir", str(workdir), "train", "--dataset", "data", *FAST)
    assert code == 0 and json.loads(out)["epochs"] == 2
    assert len(read_rows(workdir / "loss_history.csv")) == 2
    code, out, _ = run(capsys, "--workdir", str(workdir), "predict", "--dataset", "data",
                       "--dump-latent", "latent.csv", "--dump-incidence", "lam.csv")
    assert code == 0
    rows = read_rows(workdir / "predictions.csv")
    assert len(rows) == 12 * 4 and set(rows[0]) == {"node", "t", "value"}
    assert {int(r["t"]) for r in rows} == {12, 13, 14, 15}
    latent = read_rows(workdir / "latent.csv")
    assert len(latent) == 12 * 13 and min(int(r["t"]) for r in latent) == 3
    lam = read_rows(workdir / "lam.csv")
    assert len(lam) == 2 * 12 * 9 and {int(r["t"]) for r in lam} == set(range(3, 12))


def test_evaluate_with_config_file(workdir, capsys):
    (workdir / "cfg.json").write_text(json.dumps({"dataset": "data", "repeats": 1, "epochs": 2, "hidden": 4, "horizon": 4}))
    code, out, _ = run(capsys, "--workdir", str(workdir), "evaluate", "--config", "cfg.json")
    assert code == 0
    doc = json.loads((workdir / "results.json").read_text())
    assert doc["repeats"] == 1 and doc["config_echo"]["hidden"] == 4


def test_ablate_and_sweep(workdir, capsys):
    code, out, _ = run(capsys, "--workdir", str(workdir), "ablate", "--dataset", "data", "--repeats", "1", *FAST)
    assert code == 0 and len(json.loads(out)["rows"]) == 5
    code, out, err = run(capsys, "--workdir", str(workdir), "sweep", "--dataset", "data", "--repeats", "1",
                         "--axis", "pred_len", "--values", "2,40", *FAST)
    assert code == 0 and "skipping pred_len=40" in err
    assert [r["value"] for r in json.loads(out)["rows"]] == [2]


def test_config_error_is_json_and_exit_2(workdir, capsys):
    code, _, err = run(capsys, "--workdir", str(workdir), "train", "--dataset", "data", "--split-fraction", "1.5")
    assert code == 2
    doc = json.loads(err)
    assert doc["error"] == "ConfigError" and "split_fraction" in doc["message"]


def test_missing_dataset_is_reported(tmp_path, capsys):
    code, _, err = run(capsys, "--workdir", str(tmp_path), "evaluate", "--dataset", "nowhere")
    assert code == 2 and json.loads(err)["command"] == "evaluate"


def test_unknown_config_key_rejected(tmp_path, capsys):
    (tmp_path / "cfg.json").write_text(json.dumps({"learning_rate": 0.1}))
    code, _, err = run(capsys, "--workdir", str(tmp_path), "train", "--config", "cfg.json")
    assert code == 2 and "learning_rate" in err


def test_gradcheck_command(capsys):
    code, out, _ = run(capsys, "gradcheck", "--per-param", "1")
    doc = json.loads(out)
    assert code == 0 and doc["passed"] and doc["max_rel_error"] < 1e-4
