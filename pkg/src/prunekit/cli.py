"""Command-line entry point.

One binary with subcommands (rank / prune / finetune / bench / eval / sweep
/ ablate / report / rerun).  Every subcommand resolves its configuration
with precedence flags > config file > defaults, writes a run manifest
before any heavy work, and registers every output file in it, so ``rerun
<manifest>`` reproduces the run.

Exit codes: 0 ok, 2 config error, 3 model/shape error, 4 device error,
5 no results.  Failures print a machine-readable JSON object on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import yaml

from . import __version__
from .data import batch_stream, make_loaders
from .errors import ConfigError, NoResults, PruneKitError
from .graph import (
    PrunePlan,
    build_graph,
    format_signature,
    new_graph,
    remove_filters,
    remove_layers,
    save_graph,
)
from .criteria import ensemble_rank
from .experiments import RandomSweepConfig, criterion_matrix, random_sweep, write_rows_csv
from .imprint import rank_layers_by_imprint
from .latency import LatencyReport, latency_reduction, measure
from .manifest import RunManifest
from .pruning import (
    compute_table,
    iterative_filter_prune,
    one_shot_filter_prune,
    plan_latency_prune,
    plan_layer_prune,
    spearman_rank_ablation,
)
from .training import TrainRecipe, evaluate, finetune
from . import plots

log = logging.getLogger("prunekit")

DATA_KEYS = ("num_classes", "samples_per_class", "noise_std", "max_shift",
             "data_seed", "batch_size", "train_fraction")

COMMON_DEFAULTS = {
    "arch": None,
    "checkpoint": None,
    "descriptor": None,
    "seed": 0,
    "device": None,  # falls back to $PRUNEKIT_DEVICE, then cpu
    "out_dir": "results",
    "num_classes": 10,
    "samples_per_class": 120,
    "noise_std": 1.0,
    "max_shift": 8,
    "data_seed": 0,
    "batch_size": 64,
    "train_fraction": 0.8,
}

DEFAULTS = {
    "rank": {**COMMON_DEFAULTS, "criterion": "weight_norm", "of": None,
             "num_batches": 10, "embedding_budget": 512, "split": "train",
             "plot": True},
    "prune": {**COMMON_DEFAULTS, "criterion": "weight_norm", "plan": None,
              "layers": None, "filters": None, "latency_target": None,
              "iterative": False, "filters_per_step": 100,
              "batches_per_step": 10, "steps": 10, "lr": 1e-3,
              "num_batches": 10, "embedding_budget": 512, "min_filters": 2,
              "out": "pruned"},
    "finetune": {**COMMON_DEFAULTS, "epochs": 30, "lr": 1e-3, "decay": "",
                 "momentum": 0.9, "weight_decay": 5e-4, "regime": "finetune",
                 "out": "finetuned"},
    "bench": {**COMMON_DEFAULTS, "batch_sizes": "1", "iters": 1000,
              "warmup": 10, "input_shape": "3x32x32", "compare": None,
              "keep_samples": False},
    "eval": {**COMMON_DEFAULTS, "split": "val"},
    "sweep": {**COMMON_DEFAULTS, "count": 100, "families": "filter,layer",
              "ratio_lo": 0.0, "ratio_hi": 0.9, "iters": 60, "warmup": 5,
              "bench_batch_size": 1, "min_filters": 2, "train": False,
              "epochs": 3, "lr": 1e-3},
    "ablate": {**COMMON_DEFAULTS, "mode": "spearman", "max_removed": 4,
               "embedding_budget": 512, "num_batches": 10,
               "total_filters": 80, "steps": 4, "batches_per_step": 5,
               "lr": 1e-3, "epochs": 3,
               "criteria": "weight_norm,taylor,bn_scale,feature_map",
               "min_filters": 2},
    "report": {"results_dir": "results", "out_dir": None},
    "matrix": {**COMMON_DEFAULTS, "criteria": "weight_norm,bn_scale",
               "budgets": "1,2", "epochs": 3, "lr": 1e-3, "num_batches": 10,
               "embedding_budget": 512, "iters": 60, "warmup": 5,
               "bench_batch_size": 1},
}


def _add_common(p):
    p.add_argument("--arch", help="architecture preset for a fresh model")
    p.add_argument("--checkpoint", help="path to a saved .pt state dict")
    p.add_argument("--descriptor", help="architecture descriptor JSON "
                                        "(defaults to <checkpoint>.json)")
    p.add_argument("--seed", type=int)
    p.add_argument("--device")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--config", help="YAML config file (flags override it)")
    p.add_argument("--num-classes", dest="num_classes", type=int)
    p.add_argument("--samples-per-class", dest="samples_per_class", type=int)
    p.add_argument("--noise-std", dest="noise_std", type=float)
    p.add_argument("--max-shift", dest="max_shift", type=int)
    p.add_argument("--data-seed", dest="data_seed", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--train-fraction", dest="train_fraction", type=float)


def build_parser():
    parser = argparse.ArgumentParser(prog="prunekit")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("rank", help="compute an importance table")
    _add_common(p)
    p.add_argument("--criterion")
    p.add_argument("--of", help="comma list of member criteria for ensemble")
    p.add_argument("--num-batches", dest="num_batches", type=int)
    p.add_argument("--embedding-budget", dest="embedding_budget", type=int)
    p.add_argument("--split", choices=["train", "val"])
    p.add_argument("--plot", action=argparse.BooleanOptionalAction)

    p = sub.add_parser("prune", help="plan and execute pruning")
    _add_common(p)
    p.add_argument("--criterion")
    p.add_argument("--plan", help="replay a saved plan JSON")
    p.add_argument("--layers", type=int, help="layer-prune budget k")
    p.add_argument("--filters", type=int, help="one-shot filter budget")
    p.add_argument("--latency-target", dest="latency_target", type=float)
    p.add_argument("--iterative", action=argparse.BooleanOptionalAction)
    p.add_argument("--filters-per-step", dest="filters_per_step", type=int)
    p.add_argument("--batches-per-step", dest="batches_per_step", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--num-batches", dest="num_batches", type=int)
    p.add_argument("--embedding-budget", dest="embedding_budget", type=int)
    p.add_argument("--min-filters", dest="min_filters", type=int)
    p.add_argument("--out")

    p = sub.add_parser("finetune", help="train a checkpoint on the benchmark data")
    _add_common(p)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--decay", help="schedule like '81:0.1,121:0.1'")
    p.add_argument("--momentum", type=float)
    p.add_argument("--weight-decay", dest="weight_decay", type=float)
    p.add_argument("--regime", choices=["scratch", "finetune"])
    p.add_argument("--out")

    p = sub.add_parser("bench", help="measure inference latency")
    _add_common(p)
    p.add_argument("--batch-sizes", dest="batch_sizes",
                   help="comma list, e.g. 1,8,64")
    p.add_argument("--iters", type=int)
    p.add_argument("--warmup", type=int)
    p.add_argument("--input-shape", dest="input_shape", help="CxHxW")
    p.add_argument("--compare", help="baseline report JSON for LR%")
    p.add_argument("--keep-samples", dest="keep_samples",
                   action=argparse.BooleanOptionalAction)

    p = sub.add_parser("eval", help="top-1 accuracy on the benchmark data")
    _add_common(p)
    p.add_argument("--split", choices=["train", "val"])

    p = sub.add_parser("sweep", help="random filter-vs-layer model sweep")
    _add_common(p)
    p.add_argument("--count", type=int)
    p.add_argument("--families")
    p.add_argument("--ratio-lo", dest="ratio_lo", type=float)
    p.add_argument("--ratio-hi", dest="ratio_hi", type=float)
    p.add_argument("--iters", type=int)
    p.add_argument("--warmup", type=int)
    p.add_argument("--bench-batch-size", dest="bench_batch_size", type=int)
    p.add_argument("--min-filters", dest="min_filters", type=int)
    p.add_argument("--train", action=argparse.BooleanOptionalAction)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)

    p = sub.add_parser("ablate", help="one-shot vs iterative studies")
    _add_common(p)
    p.add_argument("--mode", choices=["spearman", "iterative_vs_oneshot"])
    p.add_argument("--max-removed", dest="max_removed", type=int)
    p.add_argument("--embedding-budget", dest="embedding_budget", type=int)
    p.add_argument("--num-batches", dest="num_batches", type=int)
    p.add_argument("--total-filters", dest="total_filters", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--batches-per-step", dest="batches_per_step", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--criteria")
    p.add_argument("--min-filters", dest="min_filters", type=int)

    p = sub.add_parser("matrix", help="criterion x budget comparison grid")
    _add_common(p)
    p.add_argument("--criteria")
    p.add_argument("--budgets")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--num-batches", dest="num_batches", type=int)
    p.add_argument("--embedding-budget", dest="embedding_budget", type=int)
    p.add_argument("--iters", type=int)
    p.add_argument("--warmup", type=int)
    p.add_argument("--bench-batch-size", dest="bench_batch_size", type=int)

    p = sub.add_parser("report", help="regenerate figures/tables from CSVs")
    p.add_argument("--results-dir", dest="results_dir")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--config")

    p = sub.add_parser("rerun", help="re-execute a run from its manifest")
    p.add_argument("manifest")
    return parser


def resolve_config(args):
    """Merge defaults < config file < explicit flags into one dict."""
    command = args.command
    cfg = dict(DEFAULTS[command])
    path = getattr(args, "config", None)
    if path:
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
        section = data.get(command, data)
        unknown = set(section) - set(cfg)
        if unknown:
            raise ConfigError(f"unknown config keys for {command}: {sorted(unknown)}")
        cfg.update(section)
    for key in cfg:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    return cfg


# ---------------------------------------------------------------------------
# shared helpers


def _device(cfg):
    return cfg.get("device") or os.environ.get("PRUNEKIT_DEVICE", "cpu")


def _graph(cfg):
    if cfg.get("checkpoint"):
        return build_graph(cfg["checkpoint"], cfg.get("descriptor"))
    if cfg.get("arch"):
        return new_graph(cfg["arch"], seed=cfg["seed"],
                         num_classes=cfg.get("num_classes"))
    raise ConfigError("need --checkpoint or --arch")


def _loaders(cfg, shuffle=True):
    return make_loaders(
        num_classes=cfg["num_classes"],
        samples_per_class=cfg["samples_per_class"],
        noise_std=cfg["noise_std"],
        max_shift=cfg["max_shift"],
        seed=cfg["data_seed"],
        train_fraction=cfg["train_fraction"],
        batch_size=cfg["batch_size"],
        shuffle=shuffle,
    )


def _parse_list(text, conv=str):
    return [conv(t.strip()) for t in str(text).split(",") if t.strip()]


def _parse_shape(text):
    return tuple(int(t) for t in str(text).split("x"))


def _parse_decay(text):
    decay = {}
    for part in _parse_list(text or ""):
        epoch, factor = part.split(":")
        decay[int(epoch)] = float(factor)
    return decay


# ---------------------------------------------------------------------------
# subcommand implementations (each takes the resolved config dict)


def run_rank(cfg):
    out_dir = Path(cfg["out_dir"])
    manifest = RunManifest("rank", cfg, cfg["seed"], out_dir)
    graph = _graph(cfg)
    train, val = _loaders(cfg, shuffle=False)
    loader = train if cfg["split"] == "train" else val
    criterion = cfg["criterion"]
    tables = []
    ladder = None
    if criterion == "ensemble":
        members = _parse_list(cfg.get("of") or "")
        if len(members) < 2:
            raise ConfigError("ensemble needs --of with at least 2 criteria")
        for name in members:
            tables.append(compute_table(graph, name, loader,
                                        num_batches=cfg["num_batches"],
                                        embedding_budget=cfg["embedding_budget"]))
        table = ensemble_rank(tables)
    elif criterion == "imprint":
        ladder, table = rank_layers_by_imprint(
            graph, loader, embedding_budget=cfg["embedding_budget"])
    else:
        table = compute_table(graph, criterion, loader,
                              num_batches=cfg["num_batches"])
    for t in tables + [table]:
        if t.filter_scores:
            manifest.add_output(out_dir / f"rank_{t.criterion_name}_scores.csv")
            t.write_csv(out_dir / f"rank_{t.criterion_name}_scores.csv")
        summary = out_dir / f"rank_{t.criterion_name}_summary.json"
        t.write_summary(summary)
        manifest.add_output(summary)
        if cfg["plot"]:
            png = out_dir / f"rank_{t.criterion_name}_importance.png"
            plots.importance_bars(summary, png)
            manifest.add_output(png)
    if ladder is not None:
        ladder_csv = out_dir / "rank_imprint_ladder.csv"
        ladder.write_csv(ladder_csv)
        manifest.add_output(ladder_csv)
        if cfg["plot"]:
            manifest.add_output(plots.ladder_bars(ladder_csv,
                                                  out_dir / "rank_imprint_ladder.png"))
    manifest.finish()
    print(json.dumps({"criterion": table.criterion_name,
                      "rank_order": list(table.rank_order)}))
    return 0


def run_prune(cfg):
    out_dir = Path(cfg["out_dir"])
    manifest = RunManifest("prune", cfg, cfg["seed"], out_dir)
    graph = _graph(cfg)
    train, _ = _loaders(cfg, shuffle=False)
    if cfg.get("plan"):
        plan = PrunePlan.load(cfg["plan"])
    elif cfg.get("latency_target") is not None:
        table = compute_table(graph, cfg["criterion"], train,
                              num_batches=cfg["num_batches"],
                              embedding_budget=cfg["embedding_budget"])
        plan, achieved = plan_latency_prune(
            graph, table, cfg["latency_target"], device=_device(cfg),
            input_shape=(graph.descriptor.get("in_channels", 3), 32, 32),
            warmup=5, iters=60, seed=cfg["seed"])
        log.info("latency target %.1f%%: achieved %.2f%%",
                 cfg["latency_target"] * 100, achieved)
    elif cfg.get("filters") is not None:
        if cfg.get("iterative"):
            pruned, plan = iterative_filter_prune(
                graph, cfg["criterion"], train,
                filters_per_step=cfg["filters_per_step"],
                batches_per_step=cfg["batches_per_step"], steps=cfg["steps"],
                lr=cfg["lr"], min_filters=cfg["min_filters"], seed=cfg["seed"])
        else:
            pruned, plan = one_shot_filter_prune(
                graph, cfg["criterion"], train, cfg["filters"],
                num_batches=cfg["num_batches"],
                min_filters=cfg["min_filters"], seed=cfg["seed"])
    elif cfg.get("layers") is not None:
        table = compute_table(graph, cfg["criterion"], train,
                              num_batches=cfg["num_batches"],
                              embedding_budget=cfg["embedding_budget"])
        plan = plan_layer_prune(graph, table, cfg["layers"], seed=cfg["seed"])
    else:
        raise ConfigError("need --plan, --layers, --filters or --latency-target")

    if plan.mode == "layer":
        pruned = remove_layers(graph, plan)
        removed = plan.removed_units
    else:
        pruned = remove_filters(graph, plan, min_filters=cfg["min_filters"])
        removed = None
    out = out_dir / cfg["out"]
    manifest.add_output(save_graph(pruned, out))
    manifest.add_output(out.with_suffix(".json"))
    plan_path = out_dir / f"{cfg['out']}_plan.json"
    plan.save(plan_path)
    manifest.add_output(plan_path)
    signature = format_signature(graph.descriptor, removed)
    sig_path = out_dir / f"{cfg['out']}_signature.txt"
    sig_path.write_text(signature + "\n")
    manifest.add_output(sig_path)
    manifest.finish()
    print(signature)
    return 0


def run_finetune(cfg):
    out_dir = Path(cfg["out_dir"])
    manifest = RunManifest("finetune", cfg, cfg["seed"], out_dir)
    graph = _graph(cfg)
    train, val = _loaders(cfg)
    recipe = TrainRecipe(regime=cfg["regime"], epochs=cfg["epochs"],
                         lr=cfg["lr"], decay=_parse_decay(cfg["decay"]),
                         momentum=cfg["momentum"],
                         weight_decay=cfg["weight_decay"],
                         batch_size=cfg["batch_size"])
    model, history = finetune(graph.model, train, val, recipe,
                              seed=cfg["seed"], device=_device(cfg))
    out = out_dir / cfg["out"]
    manifest.add_output(save_graph(graph, out))
    manifest.add_output(out.with_suffix(".json"))
    hist_path = out_dir / f"{cfg['out']}_history.json"
    hist_path.write_text(json.dumps(history, indent=2))
    manifest.add_output(hist_path)
    manifest.finish()
    best = max((h["val_acc"] for h in history), default=None)
    print(json.dumps({"best_val_acc": best, "epochs": cfg["epochs"]}))
    return 0


def run_bench(cfg):
    out_dir = Path(cfg["out_dir"])
    manifest = RunManifest("bench", cfg, cfg["seed"], out_dir)
    graph = _graph(cfg)
    shape = _parse_shape(cfg["input_shape"])
    summary = {}
    for bs in _parse_list(cfg["batch_sizes"], int):
        report = measure(graph.model, batch_size=bs, input_shape=shape,
                         warmup=cfg["warmup"], iters=cfg["iters"],
                         device=_device(cfg), seed=cfg["seed"],
                         keep_samples=cfg["keep_samples"])
        path = out_dir / f"bench_bs{bs}.json"
        report.save(path)
        manifest.add_output(path)
        summary[str(bs)] = {"mean_ms": report.mean_ms, "std_ms": report.std_ms}
        if cfg.get("compare"):
            baseline = LatencyReport.load(cfg["compare"])
            if baseline.batch_size == bs:
                summary[str(bs)]["lr_percent"] = \
                    latency_reduction(baseline, report).lr_percent
    path = out_dir / "bench_summary.json"
    path.write_text(json.dumps(summary, indent=2))
    manifest.add_output(path)
    manifest.finish()
    print(json.dumps(summary))
    return 0


def run_eval(cfg):
    out_dir = Path(cfg["out_dir"])
    manifest = RunManifest("eval", cfg, cfg["seed"], out_dir)
    graph = _graph(cfg)
    train, val = _loaders(cfg, shuffle=False)
    loader = train if cfg["split"] == "train" else val
    acc = evaluate(graph.model, loader, device=_device(cfg))
    path = out_dir / "eval.json"
    path.write_text(json.dumps({"accuracy": acc, "split": cfg["split"]}))
    manifest.add_output(path)
    manifest.finish()
    print(json.dumps({"accuracy": acc, "split": cfg["split"]}))
    return 0


def run_sweep(cfg):
    out_dir = Path(cfg["out_dir"])
    manifest = RunManifest("sweep", cfg, cfg["seed"], out_dir)
    graph = _graph(cfg)
    families = _parse_list(cfg["families"])
    sweep_cfg = RandomSweepConfig(
        architecture=cfg.get("arch") or "checkpoint",
        count=cfg["count"],
        filter_ratio_bounds=(cfg["ratio_lo"], cfg["ratio_hi"]),
        seed=cfg["seed"],
        batch_size=cfg["bench_batch_size"],
        input_shape=(graph.descriptor.get("in_channels", 3), 32, 32),
        device=_device(cfg),
        warmup=cfg["warmup"],
        iters=cfg["iters"],
        min_filters=cfg["min_filters"],
    )
    train_fn = None
    if cfg["train"]:
        train, val = _loaders(cfg)
        recipe = TrainRecipe(regime="finetune", epochs=cfg["epochs"],
                             lr=cfg["lr"], batch_size=cfg["batch_size"])

        def train_fn(g):
            model, _ = finetune(g.model, train, val, recipe, seed=cfg["seed"],
                                device=_device(cfg))
            return evaluate(model, val, device=_device(cfg))

    rows = random_sweep(graph, sweep_cfg, train_fn=train_fn)
    rows = [r for r in rows if r["family"] in families]
    if not rows:
        raise ConfigError(f"no rows for families {families}")
    combined = out_dir / "sweep_results.csv"
    write_rows_csv(rows, combined)
    manifest.add_output(combined)
    for family in families:
        fam_rows = [r for r in rows if r["family"] == family]
        path = out_dir / f"sweep_{family}.csv"
        write_rows_csv(fam_rows, path)
        manifest.add_output(path)
    manifest.finish()
    print(json.dumps({f: max(float(r["lr_percent"]) for r in rows
                             if r["family"] == f) for f in families}))
    return 0


def run_ablate(cfg):
    out_dir = Path(cfg["out_dir"])
    manifest = RunManifest("ablate", cfg, cfg["seed"], out_dir)
    graph = _graph(cfg)
    train, val = _loaders(cfg, shuffle=False)
    if cfg["mode"] == "spearman":
        rows = spearman_rank_ablation(graph, train, cfg["max_removed"],
                                      embedding_budget=cfg["embedding_budget"],
                                      eval_data=val, seed=cfg["seed"])
        path = out_dir / "ablate_spearman.csv"
    else:
        rows = _iterative_vs_oneshot(cfg, graph, train, val)
        path = out_dir / "ablate_iterative_vs_oneshot.csv"
    write_rows_csv(rows, path)
    manifest.add_output(path)
    manifest.finish()
    print(json.dumps(rows))
    return 0


def _iterative_vs_oneshot(cfg, graph, train, val):
    recipe = TrainRecipe(regime="finetune", epochs=cfg["epochs"], lr=cfg["lr"],
                         batch_size=cfg["batch_size"])
    total = cfg["total_filters"]
    steps = cfg["steps"]
    per_step = max(1, total // steps)
    rows = []
    for criterion in _parse_list(cfg["criteria"]):
        it_graph, _ = iterative_filter_prune(
            graph, criterion, train, filters_per_step=per_step,
            batches_per_step=cfg["batches_per_step"], steps=steps,
            lr=cfg["lr"], min_filters=cfg["min_filters"], seed=cfg["seed"])
        os_graph, _ = one_shot_filter_prune(
            graph, criterion, train, total,
            num_batches=cfg["batches_per_step"],
            min_filters=cfg["min_filters"], seed=cfg["seed"])
        it_model, _ = finetune(it_graph.model, train, val, recipe,
                               seed=cfg["seed"], device=_device(cfg))
        os_model, _ = finetune(os_graph.model, train, val, recipe,
                               seed=cfg["seed"], device=_device(cfg))
        rows.append({
            "criterion": criterion,
            "iterative_acc": evaluate(it_model, val, device=_device(cfg)),
            "one_shot_acc": evaluate(os_model, val, device=_device(cfg)),
        })
    return rows


def run_matrix(cfg):
    out_dir = Path(cfg["out_dir"])
    manifest = RunManifest("matrix", cfg, cfg["seed"], out_dir)
    graph = _graph(cfg)
    train, val = _loaders(cfg, shuffle=False)
    recipe = TrainRecipe(regime="finetune", epochs=cfg["epochs"], lr=cfg["lr"],
                         batch_size=cfg["batch_size"])
    rows = criterion_matrix(
        graph, train, val, _parse_list(cfg["criteria"]),
        _parse_list(cfg["budgets"], int), recipe,
        num_batches=cfg["num_batches"],
        embedding_budget=cfg["embedding_budget"], seed=cfg["seed"],
        batch_size=cfg["bench_batch_size"], warmup=cfg["warmup"],
        iters=cfg["iters"], device=_device(cfg))
    path = out_dir / "matrix_results.csv"
    write_rows_csv(rows, path)
    manifest.add_output(path)
    manifest.finish()
    print(json.dumps(rows))
    return 0


def run_report(cfg):
    results = Path(cfg["results_dir"])
    out_dir = Path(cfg["out_dir"] or results)
    if not results.is_dir():
        raise NoResults(f"results directory {results} does not exist")
    out_dir.mkdir(parents=True, exist_ok=True)
    produced = []
    for csv_path in sorted(results.glob("sweep*.csv")):
        produced.append(plots.sweep_boxplot(
            csv_path, out_dir / f"{csv_path.stem}_boxplot.png"))
        with open(csv_path) as fh:
            header = fh.readline()
        if "accuracy" in header:
            produced.append(plots.accuracy_latency_scatter(
                csv_path, out_dir / f"{csv_path.stem}_scatter.png"))
    for csv_path in sorted(results.glob("*ladder*.csv")):
        produced.append(plots.ladder_bars(
            csv_path, out_dir / f"{csv_path.stem}_bars.png"))
    for json_path in sorted(results.glob("rank_*_summary.json")):
        produced.append(plots.importance_bars(
            json_path, out_dir / f"{json_path.stem}_bars.png"))
    for csv_path in sorted(results.glob("matrix*.csv")):
        produced.append(plots.matrix_table(
            csv_path, out_dir / f"{csv_path.stem}_table.md"))
    if not produced:
        raise NoResults(f"no result CSVs found under {results}")
    print(json.dumps([str(p) for p in produced]))
    return 0


COMMANDS = {
    "rank": run_rank,
    "prune": run_prune,
    "finetune": run_finetune,
    "bench": run_bench,
    "eval": run_eval,
    "sweep": run_sweep,
    "ablate": run_ablate,
    "matrix": run_matrix,
    "report": run_report,
}


def main(argv=None):
    logging.basicConfig(level=os.environ.get("PRUNEKIT_LOGLEVEL", "INFO"),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "rerun":
            stored = RunManifest.load(args.manifest)
            command, cfg = stored["command"], stored["config"]
        else:
            command, cfg = args.command, resolve_config(args)
        return COMMANDS[command](cfg)
    except PruneKitError as exc:
        payload = {"error": type(exc).__name__, "message": str(exc),
                   "exit_code": exc.exit_code}
        print(json.dumps(payload), file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
