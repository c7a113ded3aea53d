import csv
import json
import math
import subprocess
import sys

import pytest
import yaml

from dsdock.cli import main
from dsdock.config import ConfigError, build_config, dump_config, load_config
from dsdock.molgraph import parse_smiles
from dsdock.training import load_checkpoint

SMALL = {
    "seed": 3,
    "generator": {"atom_count_range": [5, 14]},
    "model": {"architecture": "FiLMv2", "hidden_dim": 8, "num_layers": 1, "dropout_rate": 0.0},
    "train": {"batch_size": 64, "max_epochs": 3},
    "pipeline": {"rho": 0.2, "grid_points": 10},
    "metrics": {"grid_points": 10, "zeta_list": [0.01, 0.1], "sigma_list": [0.1, 0.5]},
}


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    (d / "small.yaml").write_text(yaml.safe_dump(SMALL))
    assert main(["gen-data", "--config", str(d / "small.yaml"), "--count", "1000",
                 "--out", str(d / "lib.smi")]) == 0
    assert main(["dock", "--config", str(d / "small.yaml"), "--in", str(d / "lib.smi"),
                 "--out", str(d / "labeled.csv")]) == 0
    return d


# --- configuration -----------------------------------------------------------

def test_defaults_and_seed_propagation():
    cfg = build_config({"seed": 5, "train": {"seed": 9}})
    assert cfg.generator.seed == cfg.oracle.seed == cfg.pipeline.seed == 5
    assert cfg.train.seed == 9
    assert cfg.pipeline.model == cfg.model and cfg.pipeline.train == cfg.train


@pytest.mark.parametrize("doc", [
    {"bogus": 1},
    {"model": {"hidden": 3}},
    {"pipeline": {"model": {}}},
    {"train": {"alpha": -1}},
    {"seed": -1},
    {"seed": True},
    {"metrics": "x"},
    [1, 2],
])
def test_bad_documents_rejected(doc):
    with pytest.raises(ConfigError):
        build_config(doc)


def test_unknown_key_message_names_key(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("train:\n  learning_rat: 0.1\n")
    with pytest.raises(ConfigError, match="learning_rat"):
        load_config(path)
    assert main(["train", "--config", str(path), "--data", "x.csv", "--out", "y.json"]) == 2


def test_config_dump_round_trip(tmp_path):
    cfg = build_config(SMALL)
    dump_config(cfg, tmp_path / "c.yaml")
    back = load_config(tmp_path / "c.yaml")
    assert back == cfg
    (tmp_path / "c.json").write_text(json.dumps(SMALL))
    assert load_config(tmp_path / "c.json") == cfg


def test_config_file_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")
    (tmp_path / "bad.yaml").write_text("train: [unclosed\n")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "bad.yaml")


def test_with_overrides():
    cfg = build_config(SMALL).with_overrides(model={"hidden_dim": 16}, train={"alpha": 0.0})
    assert cfg.model.hidden_dim == 16 and cfg.pipeline.model.hidden_dim == 16
    assert cfg.train.alpha == 0.0 and cfg.model.num_layers == 1


# --- gen-data and dock -------------------------------------------------------

def test_gen_data_outputs(workdir, tmp_path):
    lines = (workdir / "lib.smi").read_text().splitlines()
    assert len(lines) == 1000
    for s in lines:
        parse_smiles(s)
    resolved = yaml.safe_load((workdir / "lib.smi.config.yaml").read_text())
    assert resolved["generator"]["seed"] == 3 and "oracle" in resolved
    cfg = str(workdir / "small.yaml")
    assert main(["gen-data", "--config", cfg, "--count", "1000", "--out", str(tmp_path / "b.smi")]) == 0
    assert (tmp_path / "b.smi").read_bytes() == (workdir / "lib.smi").read_bytes()
    assert main(["gen-data", "--config", cfg, "--seed", "4", "--count", "50",
                 "--out", str(tmp_path / "c.smi")]) == 0
    assert (tmp_path / "c.smi").read_text().splitlines() != lines[:50]


def test_gen_data_count_zero_is_usage_error(tmp_path, capsys):
    assert main(["gen-data", "--count", "0", "--out", str(tmp_path / "x.smi")]) == 2
    assert "--count" in capsys.readouterr().err
    assert not (tmp_path / "x.smi").exists()


def test_missing_required_flag_exits_2():
    with pytest.raises(SystemExit) as exc:
        main(["dock", "--out", "x.csv"])
    assert exc.value.code == 2


def test_dock_outputs(workdir, tmp_path):
    rows = read_rows(workdir / "labeled.csv")
    assert len(rows) == 1000 and list(rows[0]) == ["smiles", "dock_score"]
    cfg = str(workdir / "small.yaml")
    for name in ("nf1.csv", "nf2.csv"):
        assert main(["dock", "--config", cfg, "--noise-free", "--in", str(workdir / "lib.smi"),
                     "--out", str(tmp_path / name)]) == 0
    assert (tmp_path / "nf1.csv").read_bytes() == (tmp_path / "nf2.csv").read_bytes()
    clean = [float(r["dock_score"]) for r in read_rows(tmp_path / "nf1.csv")]
    assert not any(math.isnan(v) for v in clean)
    noisy = [float(r["dock_score"]) for r in rows]
    assert clean != noisy


def test_dock_nan_count(tmp_path):
    lib, out = tmp_path / "big.smi", tmp_path / "big.csv"
    assert main(["gen-data", "--seed", "1", "--count", "10000", "--out", str(lib)]) == 0
    assert main(["dock", "--seed", "1", "--in", str(lib), "--out", str(out)]) == 0
    text = out.read_text()
    assert abs(text.count(",NaN\n") - 100) <= 40


def test_dock_reports_bad_line(tmp_path, capsys):
    lines = ["CCO", "CCN", "c1ccccc1", "CC(=O)O", "CCCC", "C1CC1", "C1CC(", "CCO"]
    (tmp_path / "lib.smi").write_text("\n".join(lines) + "\n")
    code = main(["dock", "--in", str(tmp_path / "lib.smi"), "--out", str(tmp_path / "out.csv")])
    assert code == 1
    assert "line 7" in capsys.readouterr().err
    assert not (tmp_path / "out.csv").exists()


# --- train, infer, metrics ---------------------------------------------------

def test_train_and_infer(workdir, tmp_path):
    cfg = str(workdir / "small.yaml")
    ckpt_path = tmp_path / "model.json"
    assert main(["train", "--config", cfg, "--data", str(workdir / "labeled.csv"),
                 "--out", str(ckpt_path)]) == 0
    ckpt = load_checkpoint(ckpt_path)
    assert ckpt.model_config.hidden_dim == 8
    history = read_rows(tmp_path / "model.history.csv")
    assert len(history) == 3
    assert (tmp_path / "model.json.config.yaml").exists()

    pred = tmp_path / "pred.csv"
    assert main(["infer", "--checkpoint", str(ckpt_path), "--in", str(workdir / "lib.smi"),
                 "--out", str(pred)]) == 0
    rows = read_rows(pred)
    assert len(rows) == 1000
    assert [int(r["index"]) for r in rows] == list(range(1000))
    assert all(math.isfinite(float(r["pred_score"])) for r in rows)


def test_infer_bad_checkpoint(workdir, tmp_path, capsys):
    (tmp_path / "bad.json").write_text('{"format_version": "9"}')
    code = main(["infer", "--checkpoint", str(tmp_path / "bad.json"), "--in", str(workdir / "lib.smi"),
                 "--out", str(tmp_path / "p.csv")])
    assert code == 1
    assert "VersionMismatch" in capsys.readouterr().err


def test_metrics_identical_columns(workdir, tmp_path):
    out, res = tmp_path / "report.json", tmp_path / "res.csv"
    assert main(["metrics", "--true", str(workdir / "labeled.csv"), "--pred", str(workdir / "labeled.csv"),
                 "--pred-column", "dock_score", "--out", str(out), "--res-csv", str(res)]) == 0
    report = json.loads(out.read_text())
    assert report["res_score"] == 1.0
    assert report["n"] == sum(1 for r in read_rows(workdir / "labeled.csv")
                              if r["dock_score"] != "NaN")
    assert all(row["recall"] == 1.0 for row in report["pairs"] if row["sigma"] >= row["zeta"])
    assert len(read_rows(res)) == 50 * 50


def test_metrics_length_mismatch(tmp_path):
    (tmp_path / "a.csv").write_text("dock_score\n1\n2\n")
    (tmp_path / "b.csv").write_text("pred_score\n1\n")
    assert main(["metrics", "--true", str(tmp_path / "a.csv"), "--pred", str(tmp_path / "b.csv"),
                 "--out", str(tmp_path / "r.json")]) == 1


# --- screen ------------------------------------------------------------------

def test_screen_full_selection(workdir, tmp_path):
    doc = dict(SMALL, pipeline={"rho": 0.2, "sigma": 1.0, "grid_points": 10,
                                "zeta_list": [0.01, 0.1]})
    (tmp_path / "screen.yaml").write_text(yaml.safe_dump(doc))
    out = tmp_path / "screen"
    assert main(["screen", "--config", str(tmp_path / "screen.yaml"), "--library",
                 str(workdir / "lib.smi"), "--outdir", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert [r["recall"] for r in report["dsd_recall"]] == [1.0, 1.0]
    assert report["n_selected"] == 1000
    assert len(read_rows(out / "selection.csv")) == 1000
    assert len(read_rows(out / "predictions.csv")) == 1000
    resolved = yaml.safe_load((out / "resolved_config.yaml").read_text())
    assert resolved["pipeline"]["sigma"] == 1.0
    assert resolved["train"]["learning_rate"] == 0.001  # defaults expanded
    for name in ("timing.json", "checkpoint.json", "history.csv"):
        assert (out / name).exists()


def test_screen_is_reproducible(workdir, tmp_path):
    cfg = str(workdir / "small.yaml")
    for name in ("a", "b"):
        assert main(["screen", "--config", cfg, "--library", str(workdir / "lib.smi"),
                     "--outdir", str(tmp_path / name)]) == 0
    for f in ("predictions.csv", "selection.csv", "report.json", "checkpoint.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes(), f


# --- grid --------------------------------------------------------------------

def test_grid_alpha_rows(workdir, tmp_path):
    (tmp_path / "grid.yaml").write_text("alpha: [0, 0.2, 0.5, 0.8, 1.0, 1.2]\n")
    assert main(["grid", "--config", str(workdir / "small.yaml"), "--param-grid",
                 str(tmp_path / "grid.yaml"), "--data", str(workdir / "labeled.csv"),
                 "--outdir", str(tmp_path / "g")]) == 0
    rows = read_rows(tmp_path / "g" / "summary.csv")
    assert [float(r["alpha"]) for r in rows] == [0, 0.2, 0.5, 0.8, 1.0, 1.2]
    assert all(r["status"] == "ok" for r in rows)
    assert {"res_score", "aurtc_0.01", "recall_0.1_0.01", "best_val_wmse"} <= set(rows[0])


def test_grid_single_point_matches_train(workdir, tmp_path):
    cfg = str(workdir / "small.yaml")
    (tmp_path / "grid.yaml").write_text("hidden_dim: [8]\n")
    assert main(["grid", "--config", cfg, "--param-grid", str(tmp_path / "grid.yaml"),
                 "--data", str(workdir / "labeled.csv"), "--outdir", str(tmp_path / "g")]) == 0
    assert main(["train", "--config", cfg, "--data", str(workdir / "labeled.csv"),
                 "--out", str(tmp_path / "m.json")]) == 0
    row = read_rows(tmp_path / "g" / "summary.csv")[0]
    ckpt = load_checkpoint(tmp_path / "m.json")
    assert float(row["best_val_wmse"]) == ckpt.best_val_loss
    assert int(row["epoch_of_best"]) == ckpt.epoch_of_best


def test_grid_rho_sweep_and_failures(workdir, tmp_path):
    (tmp_path / "grid.yaml").write_text("rho: [0.1, 0.3, 1.0, 1.5]\n")
    assert main(["grid", "--config", str(workdir / "small.yaml"), "--param-grid",
                 str(tmp_path / "grid.yaml"), "--data", str(workdir / "labeled.csv"),
                 "--outdir", str(tmp_path / "g")]) == 0
    rows = read_rows(tmp_path / "g" / "summary.csv")
    assert len(rows) == 4
    sizes = [int(r["n_labeled"]) for r in rows[:3]]
    assert sizes == sorted(sizes) and sizes[0] < sizes[2]
    assert rows[3]["status"].startswith("error")


def test_grid_rejects_unknown_keys(workdir, tmp_path):
    (tmp_path / "grid.yaml").write_text("momentum: [0.9]\n")
    assert main(["grid", "--param-grid", str(tmp_path / "grid.yaml"), "--data",
                 str(workdir / "labeled.csv"), "--outdir", str(tmp_path / "g")]) == 2


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "dsdock.cli", "gen-data", "--count", "5",
                           "--out", str(tmp_path / "l.smi")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert "wrote 5 molecules" in proc.stdout
    assert len((tmp_path / "l.smi").read_text().splitlines()) == 5
