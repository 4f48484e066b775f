"""Prune planning and the three pruning regimes.

* one-shot layer pruning: rank units once with any criterion, remove the k
  lowest-scoring removable units, fine-tune afterwards;
* iterative filter pruning: alternate score / remove / train cycles over
  the training stream;
* one-shot filter pruning: a single scoring pass and a single removal.

Filter selection uses a global ranking across layers; each layer's filter
score vector is L2-normalized before comparison so criteria with
scale-drift across stages rank fairly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from scipy.stats import spearmanr

from .criteria import STATISTIC_CRITERIA, canonical_criterion, compute_importance
from .errors import (
    BudgetTooLarge,
    ConfigError,
    Exhausted,
    MismatchedUnits,
)
from .graph import DEFAULT_MIN_FILTERS, PrunePlan, remove_filters, remove_layers
from .imprint import DEFAULT_EMBEDDING_BUDGET, rank_layers_by_imprint

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PruneBudget:
    mode: str  # "layers_k" | "filters_n" | "latency_fraction"
    value: float

    def __post_init__(self):
        if self.mode == "layers_k":
            if int(self.value) != self.value or self.value < 0:
                raise ConfigError("layers_k budget must be a non-negative integer")
        elif self.mode == "filters_n":
            if int(self.value) != self.value or self.value < 0:
                raise ConfigError("filters_n budget must be a non-negative integer")
        elif self.mode == "latency_fraction":
            if not 0 < self.value < 1:
                raise ConfigError("latency_fraction must lie in (0, 1)")
        else:
            raise ConfigError(f"unknown budget mode {self.mode!r}")


def compute_table(graph, criterion, data=None, num_batches=10,
                  embedding_budget=DEFAULT_EMBEDDING_BUDGET):
    """Importance table for any named criterion, including imprint."""
    criterion = canonical_criterion(criterion)
    if criterion == "imprint":
        if data is None:
            raise ConfigError("imprint criterion needs a data stream")
        _, table = rank_layers_by_imprint(graph, data,
                                          embedding_budget=embedding_budget)
        return table
    return compute_importance(graph, criterion, data, num_batches)


def plan_layer_prune(graph, table, k, seed=0):
    """Select the k lowest-scoring removable units."""
    removable = set(graph.removable_indices)
    missing = removable - set(table.layer_scores)
    if missing:
        raise MismatchedUnits(
            f"table lacks scores for removable units {sorted(missing)}")
    if k > len(removable):
        raise BudgetTooLarge(
            f"asked to remove {k} layers but only {len(removable)} are removable")
    chosen = [u for u in table.rank_order if u in removable][:k]
    return PrunePlan(
        criterion_name=table.criterion_name,
        mode="layer",
        removed_units=tuple(chosen),
        budget={"mode": "layers_k", "value": int(k)},
        seed=seed,
    )


# ---------------------------------------------------------------------------
# global filter ranking


def _global_filter_order(graph, table):
    """(unit, filter) pairs over prunable filters, least important first.

    Each unit's full filter-score vector is L2-normalized before entering
    the global comparison; ties break on (unit, filter) index.
    """
    entries = []
    for unit in graph.units:
        if unit.index not in table.filter_scores:
            raise MismatchedUnits(f"table lacks filter scores for {unit.name}")
        scores = np.asarray(table.filter_scores[unit.index], dtype=np.float64)
        norm = np.linalg.norm(scores)
        if norm > 0:
            scores = scores / norm
        for f in range(unit.prunable_filter_count):
            entries.append((scores[f], unit.index, f))
    entries.sort()
    return entries


def _select_filters(graph, entries, count, min_filters):
    """Greedy pick of prunable filters respecting the per-layer floor.

    Returns (picked, n_floor_skips).
    """
    remaining = {u.index: u.prunable_filter_count for u in graph.units}
    picked = []
    skips = 0
    for _, u, f in entries:
        if len(picked) == count:
            break
        if remaining[u] - 1 < min_filters:
            skips += 1
            continue
        picked.append((u, f))
        remaining[u] -= 1
    return picked, skips


def _score_filters(graph, criterion, batches, num_batches):
    criterion = canonical_criterion(criterion)
    if criterion not in STATISTIC_CRITERIA:
        raise ConfigError(f"criterion {criterion!r} has no per-filter scores")
    return compute_importance(graph, criterion, batches, num_batches)


def one_shot_filter_prune(graph, criterion, data, total_filters, num_batches=10,
                          min_filters=DEFAULT_MIN_FILTERS, seed=0):
    """Score once, remove ``total_filters`` globally-lowest filters once."""
    if total_filters == 0:
        return graph.clone(), PrunePlan(
            criterion_name=canonical_criterion(criterion), mode="filter",
            budget={"mode": "filters_n", "value": 0, "removed": 0, "shortfall": 0},
            seed=seed)
    table = _score_filters(graph, criterion, data, num_batches)
    entries = _global_filter_order(graph, table)
    picked, _ = _select_filters(graph, entries, total_filters, min_filters)
    if not picked:
        raise Exhausted("no prunable filter remains")
    removed = {}
    for u, f in picked:
        removed.setdefault(u, []).append(f)
    shortfall = total_filters - len(picked)
    if shortfall:
        log.warning("one-shot pruning short by %d filters (floor-saturated)", shortfall)
    plan = PrunePlan(
        criterion_name=table.criterion_name, mode="filter",
        removed_filters=removed,
        budget={"mode": "filters_n", "value": int(total_filters),
                "removed": len(picked), "shortfall": int(shortfall)},
        seed=seed)
    return remove_filters(graph, plan, min_filters=min_filters), plan


def iterative_filter_prune(graph, criterion, data, filters_per_step=100,
                           batches_per_step=10, steps=10, lr=1e-3, momentum=0.9,
                           min_filters=DEFAULT_MIN_FILTERS, seed=0):
    """Alternate score / remove / train cycles.

    Per step: recompute filter scores over ``batches_per_step`` mini-batches,
    remove the ``filters_per_step`` globally-lowest filters (floor-saturated
    layers are skipped and logged, never aborted), then continue training on
    the next ``batches_per_step`` mini-batches (skipped when ``lr`` is 0, so
    a zero learning rate reproduces frozen-model scoring).

    The returned plan is expressed in the baseline graph's unit and filter
    indices, so replaying it on the baseline checkpoint reproduces the final
    architecture; the returned graph additionally carries the training
    updates accumulated along the way.
    """
    batches = list(data)
    if not batches:
        raise ConfigError("data stream produced no batches")
    cursor = 0

    def take(n):
        nonlocal cursor
        out = [batches[(cursor + i) % len(batches)] for i in range(n)]
        cursor += n
        return out

    current = graph.clone()
    # original filter ids still alive, per unit, in local order
    alive = {u.index: list(range(u.prunable_filter_count)) for u in graph.units}
    cumulative = {}
    total_shortfall = 0
    for step in range(steps):
        table = _score_filters(current, criterion, take(batches_per_step),
                               batches_per_step)
        entries = _global_filter_order(current, table)
        picked, floor_skips = _select_filters(current, entries, filters_per_step,
                                              min_filters)
        if not picked:
            raise Exhausted(f"no prunable filter remains at step {step}")
        shortfall = filters_per_step - len(picked)
        total_shortfall += shortfall
        if shortfall or floor_skips:
            log.info("step %d: removed %d/%d filters (%d floor skips)",
                     step, len(picked), filters_per_step, floor_skips)
        step_removed = {}
        for u, f in picked:
            step_removed.setdefault(u, []).append(f)
            cumulative.setdefault(u, []).append(alive[u][f])
        for u, fs in step_removed.items():
            for f in sorted(fs, reverse=True):
                del alive[u][f]
        plan = PrunePlan(criterion_name=criterion, mode="filter",
                         removed_filters=step_removed, seed=seed)
        current = remove_filters(current, plan, min_filters=min_filters)
        if lr > 0:
            _train_batches(current.model, take(batches_per_step), lr, momentum)
    plan = PrunePlan(
        criterion_name=canonical_criterion(criterion), mode="filter",
        removed_filters=cumulative,
        budget={"mode": "filters_n", "value": int(steps * filters_per_step),
                "removed": int(steps * filters_per_step - total_shortfall),
                "shortfall": int(total_shortfall),
                "steps": int(steps), "filters_per_step": int(filters_per_step),
                "batches_per_step": int(batches_per_step)},
        seed=seed)
    return current, plan


def _train_batches(model, batches, lr, momentum):
    model.train()
    opt = torch.optim.SGD(model.parameters(), lr=lr, momentum=momentum)
    for x, y in batches:
        opt.zero_grad()
        loss = F.cross_entropy(model(x), y)
        loss.backward()
        opt.step()
    model.eval()


# Protocol presets for the iterative driver (per-step filter counts and
# scoring windows commonly used with global gradient criteria).
ITERATIVE_PRESETS = {
    "cifar_vgg19": {"filters_per_step": 100, "batches_per_step": 10, "steps": 5},
    "cifar_resnet56": {"filters_per_step": 100, "batches_per_step": 10, "steps": 1},
    "imagenet": {"filters_per_step": 100, "batches_per_step": 30, "steps": 10},
}

#: one-shot totals matching the iterative presets
ONE_SHOT_TOTALS = {"cifar_vgg19": 500, "cifar_resnet56": 100}


# ---------------------------------------------------------------------------
# latency-targeted planning


def plan_latency_prune(graph, table, target_fraction, batch_size=1,
                       input_shape=None, warmup=10, iters=1000, device="cpu",
                       measure_fn=None, seed=0):
    """Greedily remove lowest-ranked units until the latency target is met.

    Re-measures after every removal; returns (plan, achieved_lr_percent).
    When candidates run out the largest achieved plan is returned.
    """
    from .latency import latency_reduction, measure

    budget = PruneBudget("latency_fraction", target_fraction)
    measure_fn = measure_fn or measure
    if input_shape is None:
        c = graph.descriptor.get("in_channels", 3)
        input_shape = (c, 32, 32)
    baseline = measure_fn(graph.model, batch_size=batch_size,
                          input_shape=input_shape, warmup=warmup, iters=iters,
                          device=device)
    removable = set(graph.removable_indices)
    order = [u for u in table.rank_order if u in removable]
    removed = []
    achieved = 0.0
    plan = None
    for u in order:
        removed.append(u)
        plan = PrunePlan(criterion_name=table.criterion_name, mode="layer",
                         removed_units=tuple(removed),
                         budget={"mode": "latency_fraction",
                                 "value": budget.value},
                         seed=seed)
        pruned = remove_layers(graph, plan)
        report = measure_fn(pruned.model, batch_size=batch_size,
                            input_shape=input_shape, warmup=warmup, iters=iters,
                            device=device)
        achieved = latency_reduction(baseline, report).lr_percent
        if achieved >= target_fraction * 100.0:
            break
    if plan is None:
        raise Exhausted("no removable unit available")
    return plan, achieved


# ---------------------------------------------------------------------------
# one-shot vs. iterative rank stability


def spearman_rho(ranks_a, ranks_b):
    """Spearman rank-order correlation of two equal-length rank sequences."""
    if len(ranks_a) != len(ranks_b):
        raise ConfigError("rank sequences differ in length")
    rho, _ = spearmanr(ranks_a, ranks_b)
    return float(rho)


def spearman_rank_ablation(graph, data, max_removed,
                           embedding_budget=DEFAULT_EMBEDDING_BUDGET,
                           eval_data=None, finetune_fn=None, seed=0):
    """Compare one-shot imprint layer ranking with step-recomputed ranking.

    For n = 1..max_removed the one-shot ranking (computed once on the
    baseline) is compared against a ranking recomputed after each of the n
    removal steps; the correlation is Spearman's rho over the surviving
    candidates' ranks.  The per-n accuracies of both pruned models are
    reported alongside (optionally after ``finetune_fn(model)``).

    Returns a list of dicts with keys n_pruned / one_shot_acc /
    iterative_acc / spearman.
    """
    from .training import evaluate

    _, base_table = rank_layers_by_imprint(graph, data,
                                           embedding_budget=embedding_budget)
    base_rank_names = [base_table.unit_names[u] for u in base_table.rank_order]
    acc_data = eval_data if eval_data is not None else data

    results = []
    current = graph
    current_table = base_table
    for n in range(1, max_removed + 1):
        # one removal step under the recomputed ranking
        # (lowest-gain removable candidate of the current model)
        removable = set(current.removable_indices)
        pick = next(u for u in current_table.rank_order if u in removable)
        step_plan = PrunePlan(criterion_name="imprint", mode="layer",
                              removed_units=(pick,), seed=seed)
        current = remove_layers(current, step_plan)
        _, current_table = rank_layers_by_imprint(
            current, data, embedding_budget=embedding_budget)

        iterative_names = [current_table.unit_names[u]
                           for u in current_table.rank_order]
        survivors = [nm for nm in base_rank_names if nm in set(iterative_names)]
        one_shot_ranks = {nm: i for i, nm in enumerate(survivors)}
        iter_ranks = {nm: i for i, nm in enumerate(
            [nm for nm in iterative_names if nm in one_shot_ranks])}
        common = sorted(one_shot_ranks)
        rho = spearman_rho([one_shot_ranks[nm] for nm in common],
                           [iter_ranks[nm] for nm in common])

        one_shot_plan = plan_layer_prune(graph, base_table, n, seed=seed)
        one_shot_graph = remove_layers(graph, one_shot_plan)
        iter_graph = current
        if finetune_fn is not None:
            one_shot_graph = finetune_fn(one_shot_graph)
            iter_graph = finetune_fn(iter_graph)
        results.append({
            "n_pruned": n,
            "one_shot_acc": evaluate(one_shot_graph.model, acc_data),
            "iterative_acc": evaluate(iter_graph.model, acc_data),
            "spearman": rho,
        })
    return results
