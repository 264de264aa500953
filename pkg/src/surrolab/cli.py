"""Command-line front end.

Workspace layout under ``--out``::

    data/{train,test}.{json,bin}
    pretrained/M<k>/{weights.json,weights.bin,history.json,report.json,preds.csv}
    pretrained/stats.json
    <experiment>/run_<k>/{weights.json,weights.bin,history.json,report.json,preds.csv}
    <experiment>/M<k>/run_<k>/...              (transfer experiments)
    <experiment>/stats.json
    summary.tsv
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .augment import AugmentOp
from .config import PROFILES, ConfigError, RunConfig, load_config
from .containers import ContainerError, load_dataset, save_dataset
from .dataset import Dataset, DegenerateLabels
from .evaluation import emit_report, evaluate, extreme_placement, reduction_percent
from .experiments import REGISTRY, UnknownExperiment, get_experiment
from .lattice import random_crack_config
from .nn import CorruptContainer, ShapeMismatch, load_weights, save_weights, surrogate_arch
from .oracle import agreement_table, generate_dataset
from .seeding import derive_seed
from .train import RunAborted, RunPlan, RunResult, run_repeats

log = logging.getLogger("surrolab")

EXIT_OK, EXIT_CONFIG, EXIT_ABORT = 0, 2, 3


class UsageError(Exception):
    pass


def _dump(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _config(args) -> RunConfig:
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["run"] = {"seed": args.seed}
    if getattr(args, "repeats", None) is not None:
        overrides.setdefault("run", {}).update(repeats=args.repeats, transfer_repeats=args.repeats)
    if getattr(args, "workers", None) is not None:
        overrides.setdefault("run", {})["workers"] = args.workers
    return load_config(args.config, args.profile, overrides)


def generate_data(cfg: RunConfig) -> tuple[Dataset, Dataset]:
    geom, oc, ds = cfg.geometry, cfg.oracle, cfg.dataset
    fr = tuple(ds["fraction_range"])
    train = generate_dataset(geom, oc, ds["n_train"], fr, derive_seed(ds["seed"], 0))
    test = generate_dataset(
        geom,
        oc,
        ds["n_test"],
        fr,
        derive_seed(ds["seed"], 1),
        norm=train.norm,
        exclude={c.tobytes() for c in train.cells},
        tag="test",
    )
    return train, test


def ensure_data(cfg: RunConfig, out: Path) -> tuple[Dataset, Dataset]:
    data = out / "data"
    if not (data / "train.json").exists():
        log.info("no datasets under %s; generating", data)
        train, test = generate_data(cfg)
        save_dataset(train, data / "train")
        save_dataset(test, data / "test")
    return load_dataset(data / "train"), load_dataset(data / "test")


def cmd_generate(args) -> int:
    cfg = _config(args)
    if args.seed is not None:
        cfg.raw["dataset"]["seed"] = args.seed
    out = Path(args.out)
    train, test = generate_data(cfg)
    paths = save_dataset(train, out / "data" / "train"), save_dataset(test, out / "data" / "test")
    _dump(out / "data" / "config.json", cfg.raw)
    for name, ds, (jp, _) in (("train", train, paths[0]), ("test", test, paths[1])):
        print(f"{name}\t{len(ds)}\t{jp}")
    return EXIT_OK


def cmd_augment_validate(args) -> int:
    cfg = _config(args)
    geom, oc = cfg.geometry, cfg.oracle
    n = cfg.raw["validation"]["instances"]
    tol = cfg.raw["validation"]["tolerance"]
    lo, hi = cfg.dataset["fraction_range"]
    rng = np.random.default_rng(derive_seed(cfg.run["seed"], 7))
    base = [random_crack_config(geom, rng.uniform(lo, hi), derive_seed(cfg.run["seed"], 8, i)) for i in range(n)]
    rows = agreement_table(oc, base)
    writer = csv.writer(sys.stdout, delimiter="\t", lineterminator="\n")
    header = ["op", "dataset", "n", "max_abs", "mean_abs", "agrees"]
    writer.writerow(header)
    table = []
    for row in rows:
        op = AugmentOp(row["op"])
        line = [op.value, op.dataset_tag, row["n"], f"{row['max_abs']:.6g}", f"{row['mean_abs']:.6g}",
                "yes" if row["max_abs"] <= tol else "no"]
        writer.writerow(line)
        table.append(line)
    if args.out:
        path = Path(args.out) / "augment_validation.tsv"
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, delimiter="\t", lineterminator="\n")
            w.writerow(header)
            w.writerows(table)
    return EXIT_OK


def _write_run(directory: Path, result: RunResult, test: Dataset) -> dict:
    entry = {"run": result.index, "seeds": result.seeds, "start_weight_hash": result.start_hash}
    if result.failed:
        entry["error"] = result.error
        _dump(directory / "failed.json", entry)
        return entry
    save_weights(result.model, directory / "weights")
    _dump(directory / "history.json", result.history.to_dict())
    report = evaluate(result.model, test)
    emit_report(report, directory)
    entry.update(
        test_mse=result.test_mse,
        best_epoch=result.history.best_epoch,
        margins=report.margins,
        extreme_placement=extreme_placement(report.segments),
    )
    return entry


def _check_failures(results, cfg: RunConfig, label: str):
    failed = sum(r.failed for r in results)
    if failed and failed / len(results) > cfg.run["max_failed_fraction"]:
        raise RunAborted(f"{label}: {failed}/{len(results)} runs diverged")


def _stats_block(stats, results) -> dict:
    block = stats.to_dict()
    block["failed_runs"] = [r.index for r in results if r.failed]
    return block


def cmd_pretrain(args) -> int:
    cfg = _config(args)
    out = Path(args.out)
    d0, test = ensure_data(cfg, out)
    spec = get_experiment("E1.0")
    tcfg = cfg.train_config(cfg.resolve_loss("pretrain", spec.loss))
    arch = surrogate_arch(*d0.geometry.shape, dropout=cfg.dropout)
    plan = RunPlan(d0, test, (), tcfg, arch, split_seed=pretrain_split_seed(cfg))
    n_models = cfg.run["pretrained_models"]
    base_seed = derive_seed(cfg.run["seed"], 1000)
    stats, results = run_repeats(plan, n_models, base_seed, cfg.run["workers"])
    _check_failures(results, cfg, "pretrain")
    models = {}
    for r in results:
        name = f"M{r.index + 1}"
        models[name] = _write_run(out / "pretrained" / name, r, test)
        print(f"{name}\t{r.test_mse if not r.failed else 'FAILED'}")
    _dump(out / "pretrained" / "stats.json", {"loss": tcfg.loss.to_dict(), "models": models})
    return EXIT_OK


def pretrain_split_seed(cfg: RunConfig) -> int:
    """Validation split shared by pretraining and transfer runs.

    Transfer validation rows must never have been seen during pretraining.
    """
    return derive_seed(cfg.run["seed"], 1000, 1)


def _load_pretrained(out: Path, n: int):
    models = {}
    for k in range(n):
        name = f"M{k + 1}"
        path = out / "pretrained" / name / "weights"
        if not path.with_suffix(".json").exists():
            raise UsageError(f"missing pretrained weights {path}.json; run `surrolab pretrain` first")
        models[name] = load_weights(None, path)
    return models


def cmd_experiment(args) -> int:
    cfg = _config(args)
    spec = get_experiment(args.id)
    out = Path(args.out)
    d0, test = ensure_data(cfg, out)
    loss = cfg.resolve_loss(spec.id, spec.loss)
    tcfg = cfg.train_config(loss)
    repeats = cfg.repeats_for(spec.id, spec.repeats, spec.transfer)
    arch = surrogate_arch(*d0.geometry.shape, dropout=cfg.dropout)
    exp_dir = out / spec.id
    base_seed = derive_seed(cfg.run["seed"], *(int(p) for p in spec.id[1:].split(".")))
    summary = {
        "experiment": spec.to_dict() | {"loss": loss.to_dict()},
        "repeats": repeats,
        "config_sha256": hashlib.sha256(cfg.to_json().encode()).hexdigest(),
    }
    if spec.transfer:
        pretrained = _load_pretrained(out, cfg.run["pretrained_models"])
        previous = json.loads((out / "pretrained" / "stats.json").read_text(encoding="utf-8"))["models"]
        summary["models"] = {}
        for name, model in pretrained.items():
            plan = RunPlan(d0, test, spec.ops, tcfg, model.arch, pretrained=model, split_seed=pretrain_split_seed(cfg))
            stats, results = run_repeats(plan, repeats, derive_seed(base_seed, int(name[1:])), cfg.run["workers"])
            _check_failures(results, cfg, f"{spec.id}/{name}")
            runs = [_write_run(exp_dir / name / f"run_{r.index:02d}", r, test) for r in results]
            block = _stats_block(stats, results)
            prev = previous[name]["test_mse"]
            block.update(previous_test_mse=prev, reduction_percent=reduction_percent(prev, stats.optimal), runs=runs)
            summary["models"][name] = block
            print(f"{spec.id}\t{name}\t{stats.optimal:.3e}\t{stats.mean:.3e}\t{prev:.3e}\t{block['reduction_percent']}")
    else:
        plan = RunPlan(d0, test, spec.ops, tcfg, arch)
        stats, results = run_repeats(plan, repeats, base_seed, cfg.run["workers"])
        _check_failures(results, cfg, spec.id)
        runs = [_write_run(exp_dir / f"run_{r.index:02d}", r, test) for r in results]
        summary.update(_stats_block(stats, results), runs=runs)
        print(f"{spec.id}\t{stats.optimal:.3e}\t{stats.mean:.3e}")
    _dump(exp_dir / "stats.json", summary)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    model = load_weights(None, args.weights)
    test = load_dataset(args.data)
    report = evaluate(model, test)
    emit_report(report, args.out)
    print(f"test_mse\t{report.test_mse:.6e}")
    for m, v in report.margins.items():
        print(f"outside_{m}\t{100 * (1 - v):.1f}%")
    for name, seg in report.segments.items():
        ratio = "n/a" if seg.placed_ratio is None else f"{100 * seg.placed_ratio:.1f}%"
        print(f"{name}\t{seg.n_truth}\t{ratio}")
    return EXIT_OK


def cmd_report(args) -> int:
    out = Path(args.out)
    rows = [["experiment", "model", "optimal_test_mse", "mean_test_mse", "previous_test_mse", "reduction_percent", "runs", "failed"]]
    pre = out / "pretrained" / "stats.json"
    if pre.exists():
        for name, entry in json.loads(pre.read_text(encoding="utf-8"))["models"].items():
            rows.append(["pretrained", name, f"{entry.get('test_mse', float('nan')):.3e}", "", "", "", 1, int("error" in entry)])
    for eid in REGISTRY:
        path = out / eid / "stats.json"
        if not path.exists():
            continue
        s = json.loads(path.read_text(encoding="utf-8"))
        if "models" in s:
            for name, b in s["models"].items():
                rows.append([eid, name, f"{b['optimal']:.3e}", f"{b['mean']:.3e}", f"{b['previous_test_mse']:.3e}",
                             b["reduction_percent"], len(b["per_run_test_mse"]), len(b["failed_runs"])])
        else:
            rows.append([eid, "", f"{s['optimal']:.3e}", f"{s['mean']:.3e}", "", "", len(s["per_run_test_mse"]),
                         len(s["failed_runs"])])
    if len(rows) == 1:
        raise UsageError(f"no experiment results under {out}")
    writer = csv.writer(sys.stdout, delimiter="\t", lineterminator="\n")
    writer.writerows(rows)
    with open(out / "summary.tsv", "w", newline="", encoding="utf-8") as fh:
        csv.writer(fh, delimiter="\t", lineterminator="\n").writerows(rows)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="surrolab", description="Surrogate-model training workbench")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=True):
        p.add_argument("--config", help="JSON config file (defaults apply when omitted)")
        p.add_argument("--profile", choices=PROFILES, default="desk")
        p.add_argument("--out", required=out_required, help="workspace directory")
        p.add_argument("--seed", type=int)
        p.add_argument("--repeats", type=int)
        p.add_argument("--workers", type=int)

    p = sub.add_parser("generate", help="write D0 train/test dataset containers")
    common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("augment-validate", help="oracle agreement of the five transforms")
    common(p, out_required=False)
    p.set_defaults(func=cmd_augment_validate)

    p = sub.add_parser("pretrain", help="train the stand-in pretrained models M1..M5")
    common(p)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("experiment", help="run a registry experiment")
    p.add_argument("id", help="experiment id, e.g. E2.4")
    common(p)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("evaluate", help="evaluate a weight container on a dataset container")
    p.add_argument("--weights", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="tabulate stats.json files under a workspace")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, UnknownExperiment, UsageError, ShapeMismatch) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ContainerError, CorruptContainer, DegenerateLabels, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RunAborted as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT


if __name__ == "__main__":
    sys.exit(main())
