"""Command-line orchestration: pretrain, condense, eval, pipeline, stats,
validate-dataset.

Configuration is a single flat JSON document; the listed CLI flags override
file keys, and every run echoes the fully resolved configuration into the
output directory. Progress goes to stderr, artifacts to files.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import NumericAbort
from .condense import CondenseConfig, load_condensed, run_condensation, save_condensed
from .evaluate import (EvalConfig, condensed_stats, cross_architecture_report,
                       dataset_stats)
from .graph_core import FormatError, ValidationError, load_dataset, write_json_file
from .sgc_pretrain import TeacherConfig, load_teacher, pretrain, save_teacher

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

DEFAULTS: dict = {
    "dataset_dir": None,
    "out_dir": "out",
    "seed": 0,
    "deterministic": False,
    "precision": "f32",
    "optimizer": "adam",
    # teacher
    "teacher_k": 2,
    "teacher_head": "linear",
    "teacher_hidden": 256,
    "teacher_epochs": 600,
    "teacher_lr": 0.01,
    "teacher_weight_decay": 5e-4,
    "teacher_patience": 100,
    "teacher_select_best_val": True,
    "std_sample": False,
    # condensation
    "reduction_rate": 0.026,
    "rate_base": "all_nodes",
    "alpha": 1.0,
    "beta": 1.0,
    "gamma": 1.0,
    "eta_x": 0.005,
    "eta_phi": 0.001,
    "tau1": 10,
    "tau2": 5,
    "steps": 1000,
    "delta": 0.01,
    "rbf_bandwidth": None,
    "smoothness_sign": "complement",
    "gen_hidden": 128,
    # evaluation
    "eval_archs": ["gcn"],
    "eval_trials": 5,
    "eval_hidden": 256,
    "eval_dropout": 0.5,
    "eval_lr": 0.01,
    "eval_weight_decay": 5e-4,
    "eval_epochs": 600,
    "eval_check_every": 1,
}


class ConfigError(Exception):
    pass


def log(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def resolve_config(config_path: str | None, overrides: dict) -> dict:
    cfg = dict(DEFAULTS)
    if config_path:
        try:
            loaded = json.loads(Path(config_path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {config_path}")
        except json.JSONDecodeError as e:
            raise ConfigError(f"config parse error in {config_path}: {e}")
        if not isinstance(loaded, dict):
            raise ConfigError("config must be a JSON object")
        unknown = sorted(set(loaded) - set(DEFAULTS))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        cfg.update(loaded)
    for key, value in overrides.items():
        if value is not None:
            cfg[key] = value
    if cfg["precision"] not in ("f32", "f64"):
        raise ConfigError(f"precision must be f32 or f64, got {cfg['precision']!r}")
    return cfg


def apply_global_settings(cfg: dict) -> None:
    ad.set_default_dtype(np.float64 if cfg["precision"] == "f64" else np.float32)


def echo_config(cfg: dict, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    write_json_file(out_dir / "resolved_config.json", cfg)


def teacher_config(cfg: dict) -> TeacherConfig:
    return TeacherConfig(
        K=int(cfg["teacher_k"]),
        head=cfg["teacher_head"],
        hidden=int(cfg["teacher_hidden"]),
        epochs=int(cfg["teacher_epochs"]),
        lr=float(cfg["teacher_lr"]),
        weight_decay=float(cfg["teacher_weight_decay"]),
        patience=int(cfg["teacher_patience"]),
        select_best_val=bool(cfg["teacher_select_best_val"]),
        sample_std=bool(cfg["std_sample"]),
        optimizer=cfg["optimizer"],
        seed=int(cfg["seed"]),
    )


def condense_config(cfg: dict) -> CondenseConfig:
    return CondenseConfig(
        reduction_rate=float(cfg["reduction_rate"]),
        rate_base=cfg["rate_base"],
        alpha=float(cfg["alpha"]),
        beta=float(cfg["beta"]),
        gamma=float(cfg["gamma"]),
        eta_x=float(cfg["eta_x"]),
        eta_phi=float(cfg["eta_phi"]),
        tau1=int(cfg["tau1"]),
        tau2=int(cfg["tau2"]),
        steps=int(cfg["steps"]),
        K=int(cfg["teacher_k"]),
        delta=float(cfg["delta"]),
        rbf_bandwidth=(float(cfg["rbf_bandwidth"]) if cfg["rbf_bandwidth"] else None),
        smoothness_sign=cfg["smoothness_sign"],
        gen_hidden=int(cfg["gen_hidden"]),
        optimizer=cfg["optimizer"],
        seed=int(cfg["seed"]),
    )


def eval_config(cfg: dict) -> EvalConfig:
    return EvalConfig(
        hidden=int(cfg["eval_hidden"]),
        dropout=float(cfg["eval_dropout"]),
        lr=float(cfg["eval_lr"]),
        weight_decay=float(cfg["eval_weight_decay"]),
        epochs=int(cfg["eval_epochs"]),
        check_every=int(cfg["eval_check_every"]),
        K=int(cfg["teacher_k"]),
        optimizer=cfg["optimizer"],
        archs=tuple(cfg["eval_archs"]),
        trials=int(cfg["eval_trials"]),
    )


def _require_dataset(cfg: dict):
    if not cfg["dataset_dir"]:
        raise ConfigError("dataset_dir is required")
    return load_dataset(cfg["dataset_dir"])


def cmd_pretrain(cfg: dict) -> int:
    out = Path(cfg["out_dir"])
    echo_config(cfg, out)
    dataset = _require_dataset(cfg)
    log(f"pretraining teacher on {cfg['dataset_dir']} (K={cfg['teacher_k']})")
    started = time.perf_counter()
    cache = pretrain(dataset, teacher_config(cfg))
    save_teacher(cache, out / "teacher.bin")
    log(f"teacher done in {time.perf_counter() - started:.1f}s "
        f"(train={cache.train_accuracy:.4f} val={cache.val_accuracy:.4f})")
    return EXIT_OK


def cmd_condense(cfg: dict) -> int:
    out = Path(cfg["out_dir"])
    echo_config(cfg, out)
    dataset = _require_dataset(cfg)
    teacher = load_teacher(out / "teacher.bin")
    log(f"condensing at rate {cfg['reduction_rate']} for {cfg['steps']} steps")
    started = time.perf_counter()
    cond, trace, meta = run_condensation(dataset, teacher, condense_config(cfg))
    wall = time.perf_counter() - started
    save_condensed(
        cond, out / "condensed", trace=trace, config=condense_config(cfg),
        seed=int(cfg["seed"]),
        extra_meta={"bandwidth": meta["bandwidth"],
                    "final_losses": meta["final_losses"],
                    "wall_clock_seconds": wall},
        record_wall_clock=not cfg["deterministic"],
    )
    log(f"condensed {cond.num_nodes} nodes in {wall:.1f}s -> {out / 'condensed'}")
    return EXIT_OK


def cmd_eval(cfg: dict) -> int:
    out = Path(cfg["out_dir"])
    echo_config(cfg, out)
    dataset = _require_dataset(cfg)
    cond = load_condensed(out / "condensed")
    ecfg = eval_config(cfg)
    log(f"evaluating archs {list(ecfg.archs)} x {ecfg.trials} trials")
    started = time.perf_counter()
    report = cross_architecture_report(cond, dataset, ecfg, base_seed=int(cfg["seed"]))
    payload = report.to_json_dict()
    payload["condensed_stats"] = condensed_stats(cond, out / "condensed")
    payload["settings"] = {
        "hidden": ecfg.hidden, "dropout": ecfg.dropout, "lr": ecfg.lr,
        "weight_decay": ecfg.weight_decay, "epochs": ecfg.epochs,
        "check_every": ecfg.check_every, "trials": ecfg.trials,
    }
    write_json_file(out / "report.json", payload)
    for arch in ecfg.archs:
        block = payload[arch]
        std = f"{block['std']:.4f}" if block["std"] is not None else "n/a"
        log(f"  {arch}: mean={block['mean']:.4f} std={std}")
    log(f"evaluation done in {time.perf_counter() - started:.1f}s -> {out / 'report.json'}")
    return EXIT_OK


def cmd_pipeline(cfg: dict) -> int:
    for stage in (cmd_pretrain, cmd_condense, cmd_eval):
        code = stage(cfg)
        if code != EXIT_OK:
            return code
    return EXIT_OK


def cmd_stats(directory: str) -> int:
    path = Path(directory)
    if (path / "condense_meta.json").exists():
        cond = load_condensed(path)
        stats = condensed_stats(cond, path)
        print(f"nodes     {stats['nodes']}")
        print(f"edges     {stats['edges']}")
        print(f"sparsity  {stats['sparsity'] * 100:.2f}%")
        print(f"storage   {stats['storage_bytes']} bytes")
        print("per-class " + json.dumps(stats["per_class"], sort_keys=True))
    else:
        dataset = load_dataset(path)
        stats = dataset_stats(dataset, path)
        print(f"nodes     {stats['nodes']}")
        print(f"edges     {stats['edges']}")
        print(f"sparsity  {stats['sparsity'] * 100:.2f}%")
        print(f"storage   {stats['storage_bytes']} bytes")
    return EXIT_OK


def cmd_validate_dataset(directory: str) -> int:
    dataset = load_dataset(directory)
    print(f"ok: {dataset.num_nodes} nodes, {dataset.graph.num_entries} stored edges, "
          f"{dataset.num_features} features, {dataset.num_classes} classes, "
          f"splits {len(dataset.splits['train'])}/{len(dataset.splits['val'])}"
          f"/{len(dataset.splits['test'])}, mode {dataset.mode}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="graphcondense")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_run_command(name):
        p = sub.add_parser(name)
        p.add_argument("--config", default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--deterministic", action="store_true", default=None)
        p.add_argument("--precision", choices=("f32", "f64"), default=None)
        p.add_argument("--out", default=None)
        p.add_argument("--dataset", default=None)
        return p

    for name in ("pretrain", "condense", "eval", "pipeline"):
        add_run_command(name)
    sub.add_parser("stats").add_argument("directory")
    sub.add_parser("validate-dataset").add_argument("directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "stats":
            return cmd_stats(args.directory)
        if args.command == "validate-dataset":
            return cmd_validate_dataset(args.directory)
        cfg = resolve_config(args.config, {
            "seed": args.seed,
            "deterministic": args.deterministic,
            "precision": args.precision,
            "out_dir": args.out,
            "dataset_dir": args.dataset,
        })
        apply_global_settings(cfg)
        handler = {"pretrain": cmd_pretrain, "condense": cmd_condense,
                   "eval": cmd_eval, "pipeline": cmd_pipeline}[args.command]
        return handler(cfg)
    except ConfigError as e:
        log(f"config error: {e}")
        return EXIT_CONFIG
    except (FormatError, ValidationError) as e:
        log(f"dataset error: {e}")
        return EXIT_DATA
    except NumericAbort as e:
        log(f"numeric abort: {e}")
        return EXIT_NUMERIC


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
