"""Command-line entry point: ``dsdock <command> [options]``.

Exit status is 0 on success, 1 when a computation or input file fails and
2 for usage or configuration errors. Set ``DSDOCK_LOG_LEVEL`` (e.g. INFO,
DEBUG) for progress logs on standard error.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import logging
import os
import sys
from pathlib import Path

import numpy as np
import yaml

from .config import ConfigError, RunConfig, build_config, dump_config, load_config
from .diffcore import ShapeMismatch
from .gnn.model import EmptyBatch
from .metrics import BadFraction, RankedPair, evaluate, res_surface, top_count, write_res_csv
from .molgraph.generate import GenerationFailure, generate_random_library
from .screening import io as sio
from .screening.oracle import calibrate, dock_many
from .screening.pipeline import (
    BadInput,
    InsufficientData,
    featurize_library,
    run_dsd,
    split_indices,
)
from .training.checkpoint import FormatError, load_checkpoint, save_checkpoint, write_history
from .training.loop import Divergence, LabeledDataset, train
from .training.loss import DegenerateLabels

log = logging.getLogger("dsdock")

COMPUTE_ERRORS = (
    BadFraction, BadInput, DegenerateLabels, Divergence, EmptyBatch, FormatError,
    GenerationFailure, InsufficientData, ShapeMismatch, sio.LibraryError, OSError,
)
GRID_KEYS = {"hidden_dim": "model", "num_layers": "model", "dropout_rate": "model",
             "alpha": "train", "rho": None}


class UsageError(Exception):
    pass


def _config(args) -> RunConfig:
    cfg = load_config(getattr(args, "config", None))
    if getattr(args, "seed", None) is not None:
        doc = cfg.to_dict()
        doc["seed"] = args.seed
        for section in ("generator", "oracle", "pipeline", "train"):
            doc[section]["seed"] = args.seed
        cfg = build_config(doc)
    return cfg


def _labeled_splits(cfg: RunConfig, graphs, scores, seed_offset: int = 0):
    keep = ~np.isnan(scores)
    idx = np.flatnonzero(keep)
    if idx.size < 3:
        raise InsufficientData(f"only {idx.size} labeled rows after dropping NaN")
    feats = featurize_library([graphs[i] for i in idx], cfg.pipeline.virtual_node)
    y = scores[idx]
    rng = np.random.default_rng(np.random.SeedSequence([cfg.pipeline.seed, seed_offset]))
    tr, va, te = split_indices(idx.size, cfg.pipeline.split, rng)
    return {name: LabeledDataset([feats[i] for i in part], y[part], name)
            for name, part in (("train", tr), ("val", va), ("test", te))}


# ---------------------------------------------------------------- commands

def cmd_gen_data(args) -> int:
    cfg = _config(args)
    if args.count < 1:
        raise UsageError("--count must be at least 1")
    lib = generate_random_library(cfg.generator, args.count)
    sio.write_library(lib, args.out)
    dump_config(cfg, _sidecar(args.out))
    print(f"wrote {len(lib)} molecules (seed {cfg.generator.seed}) to {args.out}")
    return 0


def cmd_dock(args) -> int:
    cfg = _config(args)
    smiles, graphs = sio.read_library(args.input)
    if not graphs:
        raise InsufficientData(f"{args.input} is empty")
    oracle = calibrate(cfg.oracle, graphs)
    scores = dock_many(graphs, oracle, noise_free=args.noise_free)
    sio.write_labeled(smiles, scores, args.out)
    dump_config(cfg, _sidecar(args.out))
    print(f"docked {len(graphs)} molecules, {int(np.isnan(scores).sum())} NaN, to {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = _config(args)
    _, graphs, scores = sio.read_labeled(args.data)
    parts = _labeled_splits(cfg, graphs, scores)
    ckpt, history = train(cfg.model, cfg.train, parts)
    save_checkpoint(ckpt, args.out)
    write_history(history, Path(args.out).with_suffix(".history.csv"))
    dump_config(cfg, _sidecar(args.out))
    print(f"best val W-MSE {ckpt.best_val_loss:.6g} at epoch {ckpt.epoch_of_best}; "
          f"checkpoint {args.out}")
    return 0


def cmd_infer(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    smiles, graphs = sio.read_library(args.input)
    if not graphs:
        raise InsufficientData(f"{args.input} is empty")
    feats = featurize_library(graphs, not args.no_virtual_node)
    sio.write_predictions(smiles, ckpt.predict(feats), args.out)
    print(f"scored {len(graphs)} molecules to {args.out}")
    return 0


def cmd_screen(args) -> int:
    cfg = _config(args)
    smiles, graphs = sio.read_library(args.library)
    result = run_dsd(graphs, cfg.pipeline, cfg.oracle)
    outdir = Path(args.outdir)
    sio.write_screening_result(result, smiles, cfg.pipeline, outdir)
    dump_config(cfg, outdir / "resolved_config.yaml")
    for z, r in result.dsd_recall.items():
        print(f"R(sigma={cfg.pipeline.sigma}, zeta={z}) = {r:.4f}")
    print(f"speedup {result.speedup:.3f}x; outputs in {outdir}")
    return 0


def cmd_metrics(args) -> int:
    cfg = _config(args)
    y_true = sio.read_scores(args.true, args.true_column)
    y_pred = sio.read_scores(args.pred, args.pred_column)
    if y_true.size != y_pred.size:
        raise BadInput(f"{y_true.size} true scores but {y_pred.size} predictions")
    keep = np.isfinite(y_true) & np.isfinite(y_pred)
    rp = RankedPair(y_true[keep], y_pred[keep])
    m = cfg.metrics
    report = evaluate(rp, m.sigma_list, m.zeta_list, m.grid_points)
    sio.write_json(sio._json_safe(report.to_dict()), args.out)
    if args.res_csv:
        write_res_csv(res_surface(rp, m.grid_points), args.res_csv)
    print(f"res_score {report.res_score:.6f} over {rp.n} items; report {args.out}")
    return 0


def _read_grid(path) -> dict[str, list]:
    try:
        grid = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read parameter grid {path}: {exc}") from None
    if not isinstance(grid, dict) or not grid:
        raise ConfigError("parameter grid must be a non-empty mapping of lists")
    unknown = sorted(set(grid) - set(GRID_KEYS))
    if unknown:
        raise ConfigError(f"unknown grid key(s): {', '.join(unknown)}; "
                          f"allowed: {', '.join(sorted(GRID_KEYS))}")
    for k, v in grid.items():
        if not isinstance(v, list) or not v:
            raise ConfigError(f"grid entry {k!r} must be a non-empty list")
    return grid


def cmd_grid(args) -> int:
    cfg = _config(args)
    grid = _read_grid(args.param_grid)
    _, graphs, scores = sio.read_labeled(args.data)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    dump_config(cfg, outdir / "resolved_config.yaml")
    m = cfg.metrics
    keys = list(grid)
    header = [*keys, "n_labeled", "status", "best_val_wmse", "epoch_of_best", "res_score",
              *[f"aurtc_{z}" for z in m.zeta_list],
              *[f"recall_{s}_{z}" for s in m.sigma_list for z in m.zeta_list]]
    labeled = np.flatnonzero(~np.isnan(scores))
    order = np.random.default_rng(np.random.SeedSequence([cfg.seed, 7])).permutation(labeled)
    rows = []
    for combo in itertools.product(*(grid[k] for k in keys)):
        setting = dict(zip(keys, combo))
        row = {**setting, "status": "ok"}
        try:
            model = {k: v for k, v in setting.items() if GRID_KEYS[k] == "model"}
            trn = {k: v for k, v in setting.items() if GRID_KEYS[k] == "train"}
            run = cfg.with_overrides(model=model, train=trn)
            rho = float(setting.get("rho", 1.0))
            if not 0.0 < rho <= 1.0:
                raise BadInput(f"rho must lie in (0, 1], got {rho}")
            subset = np.sort(order[:top_count(rho, order.size)])
            row["n_labeled"] = int(subset.size)
            parts = _labeled_splits(run, [graphs[i] for i in subset], scores[subset])
            ckpt, _ = train(run.model, run.train, parts)
            row["best_val_wmse"] = ckpt.best_val_loss
            row["epoch_of_best"] = ckpt.epoch_of_best
            test = parts["test"]
            rp = RankedPair(test.labels, ckpt.predict(test.graphs))
            rep = evaluate(rp, m.sigma_list, m.zeta_list, m.grid_points)
            row["res_score"] = rep.res_score
            for z in m.zeta_list:
                row[f"aurtc_{z}"] = rep.aurtc[z]
            for s in m.sigma_list:
                for z in m.zeta_list:
                    row[f"recall_{s}_{z}"] = rep.recall(s, z)
        except (*COMPUTE_ERRORS, ConfigError, ValueError) as exc:
            row["status"] = f"error: {exc}"
            log.warning("grid point %s failed: %s", setting, exc)
        rows.append(row)
    summary = outdir / "summary.csv"
    with open(summary, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=header, lineterminator="\n", restval="")
        w.writeheader()
        for row in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    print(f"{len(rows)} grid points, {sum(r['status'] == 'ok' for r in rows)} ok; summary {summary}")
    return 0


def _sidecar(out) -> Path:
    p = Path(out)
    return p.with_name(p.name + ".config.yaml")


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dsdock", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, func, help_text, config=True, seed=True):
        p = sub.add_parser(name, help=help_text)
        if config:
            p.add_argument("--config", help="YAML or JSON run configuration")
        if seed:
            p.add_argument("--seed", type=int, help="override every section seed")
        p.set_defaults(func=func)
        return p

    p = command("gen-data", cmd_gen_data, "generate a random SMILES library")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--out", required=True)

    p = command("dock", cmd_dock, "score a library with the synthetic oracle")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--noise-free", action="store_true", help="no noise and no failures")

    p = command("train", cmd_train, "train a surrogate on a labeled CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")

    p = command("infer", cmd_infer, "score a library with a checkpoint", config=False, seed=False)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--no-virtual-node", action="store_true")

    p = command("screen", cmd_screen, "run the full surrogate screening workflow")
    p.add_argument("--library", required=True)
    p.add_argument("--outdir", required=True)

    p = command("metrics", cmd_metrics, "ranking metrics for predictions against truth", seed=False)
    p.add_argument("--true", required=True, help="CSV with the true scores")
    p.add_argument("--pred", required=True, help="CSV with the predicted scores")
    p.add_argument("--true-column", default="dock_score")
    p.add_argument("--pred-column", default="pred_score")
    p.add_argument("--out", required=True)
    p.add_argument("--res-csv", help="also write the recall surface as sigma,zeta,recall")

    p = command("grid", cmd_grid, "train and evaluate over a hyperparameter grid")
    p.add_argument("--param-grid", required=True, help="YAML mapping of key to list of values")
    p.add_argument("--data", required=True, help="labeled CSV")
    p.add_argument("--outdir", required=True)
    return parser


def _setup_logging() -> None:
    level = os.environ.get("DSDOCK_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"dsdock {args.command}: {exc}", file=sys.stderr)
        return 2
    except (*COMPUTE_ERRORS, ValueError) as exc:
        # outputs are written only after all inputs parse, so nothing partial is left behind
        print(f"dsdock {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
