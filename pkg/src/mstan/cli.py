"""Command-line entry point: ``mstan {generate,train,eval,gradcheck,sweep-tau,sweep-lmax}``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from . import model as M
from .config import ConfigError, RunConfig, load_config, parse_value
from .metrics import CSV_FIELDS, evaluate
from .seqdata import RecordError, load_records, preprocess, write_records
from .synthgen import generate_dataset, schema_for
from .sweeps import LMAX_GRID, TAU_GRID, sweep_lmax, sweep_tau, sweep_tau_frozen, write_rows
from .training import TrainHistory, grad_check, predict_dataset, stratified_split, train

log = logging.getLogger("mstan")

GRADCHECK_TOL = 1e-4
ABLATIONS = {
    "none": {},
    "single-scale": {"scales": (1,)},
    "no-align": {"align": False},
}


def _parse_set(item: str):
    if "=" not in item:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE, got {item!r}")
    k, v = item.split("=", 1)
    return k.strip(), parse_value(v)


def _grid(text: str):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must be comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value config file")
    common.add_argument("--seed", type=int, help="seed for data, split, init and shuffling")
    common.add_argument("--out", help="output path (dataset, history CSV or results CSV)")
    common.add_argument("--set", dest="overrides", action="append", type=_parse_set, default=[],
                        metavar="KEY=VALUE", help="override any config key (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="mstan", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("generate", parents=[common], help="write a synthetic JSONL dataset")

    t = sub.add_parser("train", parents=[common], help="train and write checkpoint + history CSV")
    t.add_argument("--data", help="JSONL/CSV dataset (default: generate from config)")
    t.add_argument("--checkpoint", help="checkpoint path to write")
    t.add_argument("--ablation", choices=sorted(ABLATIONS), default="none")

    e = sub.add_parser("eval", parents=[common], help="score a checkpoint on a dataset")
    e.add_argument("--checkpoint", help="checkpoint to load")
    e.add_argument("--data", help="JSONL/CSV dataset (default: generate from config)")
    e.add_argument("--threshold", type=float)
    e.add_argument("--split", choices=["all", "train", "val", "test"], default="all",
                   help="restrict to one split, recomputed from the config's seed and fractions")

    sub.add_parser("gradcheck", parents=[common], help="finite-difference check of the backward pass")

    st = sub.add_parser("sweep-tau", parents=[common], help="retrain per attention temperature")
    st.add_argument("--data")
    st.add_argument("--grid", type=_grid, default=list(TAU_GRID))
    st.add_argument("--frozen", action="store_true",
                    help="evaluate one checkpoint across the grid instead of retraining")
    st.add_argument("--checkpoint")

    sl = sub.add_parser("sweep-lmax", parents=[common], help="retrain per maximum sequence length")
    sl.add_argument("--data")
    sl.add_argument("--grid", type=_grid, default=list(LMAX_GRID))
    return p


def resolve_config(args) -> RunConfig:
    overrides = list(args.overrides)
    for key in ("seed", "out", "data", "checkpoint", "threshold"):
        value = getattr(args, key, None)
        if value is not None:
            overrides.append((key, value))
    return load_config(args.config, overrides)


def load_dataset(cfg: RunConfig):
    if cfg.data:
        if not Path(cfg.data).is_file():
            raise FileNotFoundError(f"data file not found: {cfg.data}")
        return load_records(cfg.data, schema_for(cfg.gen_config()))
    return generate_dataset(cfg.gen_config())


def cmd_generate(cfg: RunConfig) -> int:
    out = cfg.out or "data.jsonl"
    ds = generate_dataset(cfg.gen_config())
    write_records(ds, out)
    print(f"wrote {len(ds)} records to {out}")
    return 0


def write_history(path, history: TrainHistory, config_hash: str) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TrainHistory.CSV_HEADER + ["config_hash"])
        for row in history.rows():
            w.writerow(row + [config_hash])


def cmd_train(cfg: RunConfig, ablation: str = "none") -> int:
    ds = load_dataset(cfg)
    mc = cfg.model_config(**ABLATIONS[ablation])
    params, history = train(mc, cfg.train_config(), ds)
    M.save_checkpoint(cfg.checkpoint, mc, params, history.stats, ds.schema)
    out = cfg.out or "history.csv"
    write_history(out, history, cfg.config_hash())
    print(f"best epoch {history.best_epoch}: {history.val_metrics[history.best_epoch]}")
    print(f"checkpoint -> {cfg.checkpoint}; history -> {out}")
    return 0


def cmd_eval(cfg: RunConfig, split: str = "all") -> int:
    if not Path(cfg.checkpoint).is_file():
        raise FileNotFoundError(f"checkpoint not found: {cfg.checkpoint}")
    mc, params, stats, _ = M.load_checkpoint(cfg.checkpoint)
    ds = load_dataset(cfg)
    if split != "all":
        tc = cfg.train_config()
        ds = ds.subset(stratified_split(ds.labels, tc.split, tc.seed)[split])
    data = preprocess(ds, stats)
    report = evaluate(predict_dataset(params, mc, data), data.labels, cfg.threshold)
    print(report)
    if cfg.out:
        with open(cfg.out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["threshold"] + CSV_FIELDS + ["config_hash"])
            w.writerow([cfg.threshold] + report.csv_row() + [cfg.config_hash()])
    return 0


def cmd_gradcheck(cfg: RunConfig) -> int:
    worst = 0.0
    for learnable in (False, True):
        mc = M.ModelConfig(d=3, d_h=4, scales=(1, 2), tau=cfg.tau, tau_learnable=learnable, seed=cfg.seed)
        err = grad_check(mc, cfg.seed)
        worst = max(worst, err)
        print(f"tau_learnable={str(learnable).lower()}: max relative error {err:.3e}")
    if worst >= GRADCHECK_TOL:
        print(f"gradient check FAILED (tolerance {GRADCHECK_TOL:g})", file=sys.stderr)
        return 1
    return 0


def cmd_sweep_tau(cfg: RunConfig, grid, frozen: bool = False) -> int:
    ds = load_dataset(cfg)
    if frozen:
        if not Path(cfg.checkpoint).is_file():
            raise FileNotFoundError(f"checkpoint not found: {cfg.checkpoint}")
        mc, params, stats, _ = M.load_checkpoint(cfg.checkpoint)
        tc = cfg.train_config()
        test = ds.subset(stratified_split(ds.labels, tc.split, tc.seed)["test"])
        rows = sweep_tau_frozen(params, mc, stats, test, grid, cfg.threshold, cfg.config_hash())
    else:
        rows = sweep_tau(cfg, ds, grid)
    out = cfg.out or "sweep_tau.csv"
    write_rows(out, "tau", rows)
    for r in rows:
        print(f"tau={r['tau']:g} recall={r['recall']:.4f} f1={r['f1']:.4f} entropy={r['attention_entropy']:.4f}")
    return 0


def cmd_sweep_lmax(cfg: RunConfig, grid) -> int:
    ds = load_dataset(cfg)
    rows = sweep_lmax(cfg, ds, [int(g) for g in grid])
    out = cfg.out or "sweep_lmax.csv"
    write_rows(out, "lmax", rows)
    for r in rows:
        print(f"lmax={r['lmax']} recall={r['recall']:.4f} f1={r['f1']:.4f}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        if args.command == "generate":
            return cmd_generate(cfg)
        if args.command == "train":
            return cmd_train(cfg, args.ablation)
        if args.command == "eval":
            return cmd_eval(cfg, args.split)
        if args.command == "gradcheck":
            return cmd_gradcheck(cfg)
        if args.command == "sweep-tau":
            return cmd_sweep_tau(cfg, args.grid, args.frozen)
        if args.command == "sweep-lmax":
            return cmd_sweep_lmax(cfg, args.grid)
    except (ConfigError, RecordError, FileNotFoundError, ValueError) as exc:
        print(f"mstan: error: {exc}", file=sys.stderr)
        return 2
    return 2


if __name__ == "__main__":
    sys.exit(main())
