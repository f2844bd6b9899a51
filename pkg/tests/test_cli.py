import csv
import json

import numpy as np
import pytest

from mstan import model as M
from mstan.cli import main
from mstan.config import ConfigError, RunConfig, dump_config, load_config
from mstan.metrics import evaluate
from mstan.seqdata import load_records, preprocess
from mstan.synthgen import schema_for
from mstan.training import predict_dataset

SMALL = ["--set", "n_items=60", "--set", "T_min=8", "--set", "T_max=24", "--set", "d_h=6",
         "--set", "scales=[1, 2]", "--set", "epochs=3", "--set", "L_max=24"]


def write_cfg(tmp_path, text):
    p = tmp_path / "run.cfg"
    p.write_text(text)
    return p


# --- config file -----------------------------------------------------------------


def test_config_file_and_overrides(tmp_path):
    p = write_cfg(tmp_path, "# demo\nd_h = 16\nscales = [1, 2]\noptimizer = sgd\ntau = 2\n")
    cfg = load_config(p, [("seed", 4)])
    assert cfg.d_h == 16 and cfg.scales == (1, 2) and cfg.optimizer == "sgd"
    assert cfg.tau == 2.0 and isinstance(cfg.tau, float) and cfg.seed == 4


def test_config_round_trip(tmp_path):
    cfg = RunConfig(d_h=5, scales=(2, 4), data="x.jsonl")
    again = load_config(write_cfg(tmp_path, dump_config(cfg)))
    assert again == cfg and again.config_hash() == cfg.config_hash()


@pytest.mark.parametrize("line, field", [("positive_rate = 1.5", "positive_rate"),
                                         ("bogus = 1", "bogus"),
                                         ("scales = [3, 1]", "scales"),
                                         ("epochs = many", "epochs"),
                                         ("learning_rate = -1", "learning_rate")])
def test_invalid_config_names_field(tmp_path, line, field):
    with pytest.raises(ConfigError, match=field):
        load_config(write_cfg(tmp_path, line + "\n"))


# --- commands --------------------------------------------------------------------


def test_generate_count_and_determinism(tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    assert main(["generate", "--seed", "7", "--out", str(a), "--set", "n_items=25"]) == 0
    assert main(["generate", "--seed", "7", "--out", str(b), "--set", "n_items=25"]) == 0
    assert len(a.read_text().splitlines()) == 25
    assert a.read_bytes() == b.read_bytes()


def test_generate_default_count(tmp_path):
    out = tmp_path / "d.jsonl"
    assert main(["generate", "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == RunConfig().n_items


def test_generate_invalid_rate_exits_nonzero(tmp_path, capsys):
    rc = main(["generate", "--out", str(tmp_path / "x.jsonl"), "--set", "positive_rate=1.5"])
    assert rc != 0
    err = capsys.readouterr().err
    assert "positive_rate" in err and len(err.strip().splitlines()) == 1


@pytest.fixture
def trained(tmp_path):
    data = tmp_path / "d.jsonl"
    ck = tmp_path / "ck.json"
    hist = tmp_path / "h.csv"
    assert main(["generate", "--out", str(data), *SMALL]) == 0
    assert main(["train", "--data", str(data), "--checkpoint", str(ck), "--out", str(hist), *SMALL]) == 0
    return data, ck, hist


def test_train_writes_reloadable_checkpoint_and_history(trained):
    data, ck, hist = trained
    cfg, params, stats, schema = M.load_checkpoint(ck)
    assert cfg.scales == (1, 2) and stats is not None and schema == schema_for(RunConfig().gen_config())
    rows = list(csv.reader(hist.open()))
    assert rows[0] == ["epoch", "train_loss", "val_loss", "val_acc", "val_precision", "val_recall",
                       "val_f1", "config_hash"]
    assert len(rows) >= 2 and all(len(r) == 8 for r in rows)
    float(rows[1][1])


@pytest.mark.parametrize("ablation, check", [("single-scale", lambda c: c.scales == (1,)),
                                             ("no-align", lambda c: c.align is False)])
def test_train_ablations(tmp_path, ablation, check):
    ck = tmp_path / "ck.json"
    rc = main(["train", "--ablation", ablation, "--checkpoint", str(ck), "--out", str(tmp_path / "h.csv"), *SMALL])
    assert rc == 0
    assert check(M.load_checkpoint(ck)[0])


def test_eval_matches_library(trained, tmp_path, capsys):
    data, ck, _ = trained
    out = tmp_path / "eval.csv"
    assert main(["eval", "--checkpoint", str(ck), "--data", str(data), "--threshold", "0.5",
                 "--out", str(out), *SMALL]) == 0
    mc, params, stats, schema = M.load_checkpoint(ck)
    ds = preprocess(load_records(data, schema), stats)
    expected = evaluate(predict_dataset(params, mc, ds), ds.labels, 0.5)
    row = list(csv.reader(out.open()))[1]
    assert [float(v) for v in row[1:5]] == expected.csv_row()


def test_eval_missing_checkpoint(tmp_path):
    assert main(["eval", "--checkpoint", str(tmp_path / "nope.json"), *SMALL]) != 0


def test_gradcheck_command(capsys):
    assert main(["gradcheck"]) == 0
    out = capsys.readouterr().out
    assert "tau_learnable=true" in out and "tau_learnable=false" in out


def test_sweep_tau_rows(tmp_path):
    out = tmp_path / "tau.csv"
    assert main(["sweep-tau", "--grid", "0.5,1,2", "--out", str(out), *SMALL]) == 0
    rows = list(csv.DictReader(out.open()))
    assert [float(r["tau"]) for r in rows] == [0.5, 1.0, 2.0]
    assert {"recall", "f1", "attention_entropy", "config_hash"} <= set(rows[0])


def test_sweep_tau_frozen_entropy_monotone(trained, tmp_path):
    data, ck, _ = trained
    out = tmp_path / "frozen.csv"
    assert main(["sweep-tau", "--frozen", "--checkpoint", str(ck), "--data", str(data),
                 "--out", str(out), *SMALL]) == 0
    ent = [float(r["attention_entropy"]) for r in csv.DictReader(out.open())]
    assert len(ent) == 7
    assert all(b >= a - 1e-12 for a, b in zip(ent, ent[1:]))


def test_sweep_lmax_rows(tmp_path):
    out = tmp_path / "lmax.csv"
    assert main(["sweep-lmax", "--grid", "5,10", "--out", str(out), *SMALL]) == 0
    rows = list(csv.DictReader(out.open()))
    assert [int(r["lmax"]) for r in rows] == [5, 10]


def test_config_hash_ignores_paths():
    assert RunConfig(data="a.jsonl", out="x.csv").config_hash() == RunConfig(data="b.jsonl").config_hash()
    assert RunConfig(seed=1).config_hash() != RunConfig(seed=2).config_hash()
