"""Command-line entry point: ``agnostic-vfl <subcommand> [--config cfg.json]``.

Without ``--config`` every subcommand runs on the default synthetic dataset.
CSV output goes to ``--out`` when given and to stdout otherwise.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import defense, harness
from .data import Dataset, window_partitions
from .model import partition_params, params_to_dict
from .synthetic import SyntheticSpec


def _config(args) -> harness.ExperimentConfig:
    if args.config:
        cfg = harness.ExperimentConfig.from_json(args.config)
    else:
        cfg = harness.ExperimentConfig(synthetic=SyntheticSpec())
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "max_windows", None) is not None:
        cfg = replace(cfg, max_windows=args.max_windows)
    return replace(cfg, out=None)


def _emit(text: str, out) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _dataset_csv(ds: Dataset) -> str:
    lines = [",".join(ds.feature_names + ["label"])]
    for x, y in zip(ds.features, ds.labels):
        lines.append(",".join(repr(float(v)) for v in x) + f",{int(y)}")
    return "\n".join(lines) + "\n"


def cmd_ingest(args):
    cfg = _config(args)
    tr, te, pr = harness.load_splits(cfg)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    for name, ds in (("train", tr), ("test", te), ("prediction", pr)):
        (out / f"{name}.csv").write_text(_dataset_csv(ds))
    summary = {"dataset": cfg.name, "d_t": tr.d_t, "k": tr.k, "class_names": tr.class_names,
               "n_train": tr.n_samples, "n_test": te.n_samples, "n_prediction": pr.n_samples}
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")


def cmd_train(args):
    ctx = harness.load_context(_config(args))
    doc = params_to_dict(ctx.model)
    doc["test_accuracy"] = harness.accuracy(ctx.model, ctx.test.features, ctx.test.labels)
    _emit(json.dumps(doc) + "\n", args.out)


def cmd_attack(args):
    cfg = _config(args)
    if args.per_window:
        cfg = replace(cfg, per_window=True)
    _emit(harness.write_csv(harness.run_attack_grid(cfg), harness.ATTACK_COLUMNS), args.out)


def cmd_defend(args):
    ctx = harness.load_context(_config(args))
    part = window_partitions(ctx.d_t, args.d)[args.window]
    pas = list(part.passive_indices)
    W_pas = partition_params(ctx.model, part).W_pas
    stats = defense.PassiveStats.from_features(ctx.train.features[:, pas])
    case = args.case or harness.applicable_cases(args.d, ctx.k)[0]
    out = defense.solve(case, W_pas, stats, args.eps)
    doc = {
        "case": case, "d": args.d, "window_start": part.start, "epsilon": args.eps,
        "status": out.status, "g_achieved": out.g_achieved, "mse_predicted": out.mse_predicted,
        "mse_empirical": defense.simulate_attack_mse(case, W_pas, out.W_n, ctx.pred.features[:, pas]),
        "W_pas": W_pas.tolist(), "W_n": np.asarray(out.W_n).tolist(),
    }
    _emit(json.dumps(doc, indent=2) + "\n", args.out)


def cmd_sweep_pi(args):
    cfg = _config(args)
    _emit(harness.write_csv(harness.run_pi_grid(cfg), harness.PI_COLUMNS), args.out)


def cmd_covariance(args):
    tr, te, pr = harness.load_splits(_config(args))
    ds = Dataset(np.vstack([tr.features, te.features, pr.features]),
                 np.concatenate([tr.labels, te.labels, pr.labels]), tr.feature_names,
                 class_names=tr.class_names)
    _emit(harness.emit_covariance(ds), args.out)


def cmd_am_accuracy(args):
    cfg = _config(args)
    _emit(harness.write_csv(harness.run_am_accuracy(cfg), harness.AM_COLUMNS), args.out)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="agnostic-vfl", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="experiment config (JSON)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out")
        sp.set_defaults(fn=fn)
        return sp

    add("ingest", cmd_ingest, "encode, normalize and split; --out is a directory")
    add("train", cmd_train, "train the joint model and print its parameters as JSON")
    sp = add("attack", cmd_attack, "attack MSE per (d, method)")
    sp.add_argument("--max-windows", type=int)
    sp.add_argument("--per-window", action="store_true")
    sp = add("defend", cmd_defend, "distort one passive window at one eps level")
    sp.add_argument("--d", type=int, required=True)
    sp.add_argument("--window", type=int, default=0)
    sp.add_argument("--eps", type=float, required=True)
    sp.add_argument("--case", choices=["i", "ii", "iii", "iv"])
    sp = add("sweep-pi", cmd_sweep_pi, "privacy-interpretability sweep")
    sp.add_argument("--max-windows", type=int)
    add("covariance", cmd_covariance, "feature covariance matrix as CSV")
    sp = add("am-accuracy", cmd_am_accuracy, "AM test accuracy versus active features")
    sp.add_argument("--max-windows", type=int)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    args.fn(args)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
