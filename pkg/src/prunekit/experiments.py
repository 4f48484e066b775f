"""Desk-scale studies: random sweeps, criterion grids, scratch-vs-finetune.

Every randomly generated model is reconstructible from (architecture, sweep
seed, family, index): plans are drawn from a per-model seed derived with
``numpy.random.SeedSequence``, so regenerating a sweep row yields an
identical plan.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, PruneKitError
from .graph import ModelSignature, PrunePlan, format_signature, remove_filters, remove_layers
from .latency import measure, latency_reduction
from .pruning import compute_table, plan_layer_prune
from .training import evaluate, finetune_graph

log = logging.getLogger(__name__)

MAX_FILTER_RATIO = 0.9


@dataclass(frozen=True)
class RandomSweepConfig:
    architecture: str = "toy_resnet"
    count: int = 100
    filter_ratio_bounds: tuple = (0.0, MAX_FILTER_RATIO)
    layer_retention_bounds: tuple = None  # (min retained, max retained); None = [1, L]
    seed: int = 0
    batch_size: int = 1
    input_shape: tuple = (3, 32, 32)
    device: str = "cpu"
    warmup: int = 5
    iters: int = 60
    min_filters: int = 2

    def __post_init__(self):
        lo, hi = self.filter_ratio_bounds
        if not (0.0 <= lo <= hi <= MAX_FILTER_RATIO):
            raise ConfigError(
                f"filter ratio bounds must lie in [0, {MAX_FILTER_RATIO}]")
        if self.count < 1:
            raise ConfigError("count must be >= 1")


def _model_seed(config_seed, family, index):
    ss = np.random.SeedSequence([config_seed, {"filter": 0, "layer": 1}[family], index])
    return int(ss.generate_state(1)[0])


def random_filter_plan(graph, seed, ratio_bounds=(0.0, MAX_FILTER_RATIO),
                       min_filters=2):
    """Independent uniform per-layer ratio; pruned filters chosen at random.

    Per layer the removal count is floor(ratio * width), clipped so the
    layer keeps at least the floor.
    """
    rng = np.random.default_rng(seed)
    lo, hi = ratio_bounds
    removed = {}
    for unit in graph.units:
        width = unit.prunable_filter_count
        ratio = rng.uniform(lo, hi)
        n = min(int(ratio * width), max(0, width - min_filters))
        if n > 0:
            removed[unit.index] = tuple(
                int(i) for i in rng.choice(width, size=n, replace=False))
    return PrunePlan(criterion_name="random", mode="filter",
                     removed_filters=removed,
                     budget={"mode": "filters_n",
                             "value": sum(len(v) for v in removed.values())},
                     seed=seed)


def random_layer_plan(graph, seed, retention_bounds=None):
    """Uniform retained-count M, retained set uniform among removable units.

    Non-removable units are always retained; when M is smaller than their
    count the plan removes every removable unit.
    """
    rng = np.random.default_rng(seed)
    total = len(graph.units)
    removable = list(graph.removable_indices)
    lo, hi = retention_bounds if retention_bounds is not None else (1, total)
    if not (1 <= lo <= hi <= total):
        raise ConfigError(f"retention bounds must lie in [1, {total}]")
    m = int(rng.integers(lo, hi + 1))
    keep_removable = max(0, m - (total - len(removable)))
    kept = set(rng.choice(removable, size=min(keep_removable, len(removable)),
                          replace=False))
    removed = tuple(u for u in removable if u not in kept)
    return PrunePlan(criterion_name="random", mode="layer",
                     removed_units=removed,
                     budget={"mode": "layers_k", "value": len(removed)},
                     seed=seed)


def random_sweep(graph, config, train_fn=None, out_csv=None, max_resamples=5):
    """Generate ``count`` random models per family and measure each one.

    Returns a list of row dicts (family, index, seed, signature, latency,
    LR%); ``train_fn(graph) -> accuracy`` optionally attaches accuracy to
    every row.  Surgery failures are logged and the model is resampled with
    a perturbed seed; resample counts are recorded per row.
    """
    baseline = measure(graph.model, batch_size=config.batch_size,
                       input_shape=config.input_shape, warmup=config.warmup,
                       iters=config.iters, device=config.device)
    rows = []
    for family in ("filter", "layer"):
        for index in range(config.count):
            resamples = 0
            while True:
                seed = _model_seed(config.seed, family, index) + resamples
                try:
                    if family == "filter":
                        plan = random_filter_plan(
                            graph, seed, config.filter_ratio_bounds,
                            config.min_filters)
                        pruned = remove_filters(graph, plan,
                                                min_filters=config.min_filters)
                    else:
                        plan = random_layer_plan(graph, seed,
                                                 config.layer_retention_bounds)
                        pruned = remove_layers(graph, plan)
                    break
                except PruneKitError as exc:
                    resamples += 1
                    log.warning("resampling %s model %d (%s)", family, index, exc)
                    if resamples > max_resamples:
                        raise
            report = measure(pruned.model, batch_size=config.batch_size,
                             input_shape=config.input_shape,
                             warmup=config.warmup, iters=config.iters,
                             device=config.device)
            if family == "layer":
                signature = format_signature(graph.descriptor, plan.removed_units)
            else:
                signature = str(list(ModelSignature.from_graph(pruned).filters_per_unit))
            row = {
                "family": family,
                "index": index,
                "seed": seed,
                "resamples": resamples,
                "signature": signature,
                "params": pruned.param_count(),
                "mean_ms": report.mean_ms,
                "std_ms": report.std_ms,
                "lr_percent": latency_reduction(baseline, report).lr_percent,
            }
            if train_fn is not None:
                row["accuracy"] = train_fn(pruned)
            rows.append(row)
    if out_csv is not None:
        write_rows_csv(rows, out_csv)
    return rows


def write_rows_csv(rows, path):
    if not rows:
        raise ConfigError("no rows to write")
    keys = list(rows[0].keys())
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        w.writerows(rows)


def criterion_matrix(graph, train_loader, val_loader, criteria, budgets,
                     recipe, num_batches=10, embedding_budget=512, seed=0,
                     batch_size=1, input_shape=(3, 32, 32), warmup=5, iters=60,
                     device="cpu", out_csv=None):
    """criterion x budget grid: plan, prune, fine-tune, measure.

    Cells that fail are marked and the run continues.  Returns row dicts
    with accuracy and LR%% per cell.
    """
    baseline = measure(graph.model, batch_size=batch_size,
                       input_shape=input_shape, warmup=warmup, iters=iters,
                       device=device)
    rows = []
    for criterion in criteria:
        try:
            table = compute_table(graph, criterion, train_loader,
                                  num_batches=num_batches,
                                  embedding_budget=embedding_budget)
        except PruneKitError as exc:
            log.warning("criterion %s failed: %s", criterion, exc)
            for k in budgets:
                rows.append({"criterion": criterion, "budget": k,
                             "status": f"failed: {exc}", "accuracy": "",
                             "lr_percent": ""})
            continue
        for k in budgets:
            try:
                plan = plan_layer_prune(graph, table, k, seed=seed)
                pruned = remove_layers(graph, plan)
                tuned = finetune_graph(pruned, train_loader, val_loader,
                                       recipe, seed=seed, device=device)
                acc = evaluate(tuned.model, val_loader, device=device)
                report = measure(tuned.model, batch_size=batch_size,
                                 input_shape=input_shape, warmup=warmup,
                                 iters=iters, device=device)
                rows.append({
                    "criterion": criterion,
                    "budget": k,
                    "status": "ok",
                    "accuracy": acc,
                    "lr_percent": latency_reduction(baseline, report).lr_percent,
                    "removed_units": json.dumps(list(plan.removed_units)),
                })
            except PruneKitError as exc:
                log.warning("cell (%s, %s) failed: %s", criterion, k, exc)
                rows.append({"criterion": criterion, "budget": k,
                             "status": f"failed: {exc}", "accuracy": "",
                             "lr_percent": "", "removed_units": ""})
    if out_csv is not None:
        write_rows_csv(rows, out_csv)
    return rows
