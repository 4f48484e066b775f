"""Accuracy-proxy layer importance via weight imprinting.

For every prunable candidate, the unit's output feature map is adaptively
average-pooled to a near-uniform embedding length, a proxy classifier is
imprinted as the per-class mean embedding in a single pass (no training),
and the proxy's accuracy approximates "classification accuracy up to this
layer".  A candidate's importance is the accuracy gained over the previous
candidate in forward order, so the least useful layers rank first for
removal.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .criteria import ImportanceTable
from .errors import ConfigError, EmptyClass

DEFAULT_EMBEDDING_BUDGET = 512


def pool_side(channels, budget):
    """Output spatial side for adaptive pooling: round(sqrt(budget/channels)), >= 1."""
    return max(1, round(math.sqrt(budget / channels)))


def embed(feature_map, budget=DEFAULT_EMBEDDING_BUDGET):
    """Pool a (C,H,W) or (B,C,H,W) map to a flat embedding of ~``budget`` length."""
    if budget < 1:
        raise ConfigError("embedding budget must be >= 1")
    single = feature_map.dim() == 3
    x = feature_map.unsqueeze(0) if single else feature_map
    d = pool_side(x.shape[1], budget)
    out = F.adaptive_avg_pool2d(x, d).flatten(1)
    return out.squeeze(0) if single else out


def imprint_weights(embeddings, num_classes):
    """Imprint a proxy weight matrix: column c is the mean class-c embedding.

    ``embeddings`` is a stream of (embedding, label) pairs; accumulation is
    single-pass in float64.  Returns (weights, class_counts) where weights
    has shape (embedding_length, num_classes).
    """
    sums = None
    counts = np.zeros(num_classes, dtype=np.int64)
    for e, c in embeddings:
        e = np.asarray(torch.as_tensor(e).detach().double().numpy())
        if sums is None:
            sums = np.zeros((len(e), num_classes), dtype=np.float64)
        sums[:, c] += e
        counts[c] += 1
    for c in range(num_classes):
        if counts[c] == 0:
            raise EmptyClass(c)
    return sums / counts[np.newaxis, :], counts


def proxy_predict(weights, embedding):
    """argmax_c weights[:,c]^T e; ties resolve to the lowest class id."""
    e = np.asarray(embedding, dtype=np.float64)
    scores = e @ weights
    return int(np.argmax(scores)) if e.ndim == 1 else np.argmax(scores, axis=1)


@dataclass(frozen=True)
class ImprintProxy:
    """Imprinted classifier for one candidate unit."""

    unit_index: int
    pool_dim: int
    embedding_length: int
    weight_matrix: np.ndarray
    proxy_accuracy: float
    class_counts: np.ndarray


@dataclass(frozen=True)
class AccuracyLadder:
    """Proxy accuracies over candidates in forward order, plus their gains.

    The first gain is measured against the chance baseline 1/C; later gains
    are differences between consecutive candidates.
    """

    candidates: tuple  # unit indices, forward order
    names: tuple
    proxy_accuracies: tuple
    gains: tuple
    chance_baseline: float

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["unit_index", "proxy_accuracy", "gain"])
            for u, a, g in zip(self.candidates, self.proxy_accuracies, self.gains):
                w.writerow([u, repr(a), repr(g)])

    @classmethod
    def read_csv(cls, path, chance_baseline=None):
        rows = list(csv.DictReader(open(path)))
        cands = tuple(int(r["unit_index"]) for r in rows)
        accs = tuple(float(r["proxy_accuracy"]) for r in rows)
        gains = tuple(float(r["gain"]) for r in rows)
        base = accs[0] - gains[0] if chance_baseline is None else chance_baseline
        return cls(cands, tuple(str(c) for c in cands), accs, gains, base)


class _OutputCapture:
    def __init__(self, module):
        self.out = None
        self.handle = module.register_forward_hook(self._hook)

    def _hook(self, module, inputs, output):
        self.out = output.detach()

    def remove(self):
        self.handle.remove()


def _candidates(graph):
    idx = {u.index for u in graph.units if u.removable}
    idx.add(graph.units[-1].index)  # the final unit anchors the comparison
    return [graph.units[i] for i in sorted(idx)]


def _normalize_rows(e, eps=1e-12):
    return e / np.maximum(np.linalg.norm(e, axis=1, keepdims=True), eps)


def rank_layers_by_imprint(graph, data, embedding_budget=DEFAULT_EMBEDDING_BUDGET,
                           eval_data=None, normalize=False):
    """Build per-candidate proxies and rank layers by accuracy gain.

    Two streaming passes total: one over ``data`` to imprint every proxy at
    once, one over ``eval_data`` (defaults to the imprinting stream, i.e.
    resubstitution) to score them.  Returns (AccuracyLadder,
    ImportanceTable); the table's layer scores are the gains, so the
    lowest-gain candidates rank first for pruning.

    With ``normalize=True`` embeddings and imprinted columns are
    L2-normalized, the convention of the imprinting literature; the default
    keeps raw inner products.
    """
    model = graph.model
    model.eval()
    cands = _candidates(graph)
    num_classes = graph.descriptor["num_classes"]
    caps = {u.index: _OutputCapture(u.module) for u in cands}
    sums = {u.index: None for u in cands}
    counts = np.zeros(num_classes, dtype=np.int64)
    try:
        with torch.no_grad():
            for x, y in data:
                model(x)
                y_np = y.numpy()
                for u in cands:
                    e = embed(caps[u.index].out, embedding_budget).double().numpy()
                    if normalize:
                        e = _normalize_rows(e)
                    if sums[u.index] is None:
                        sums[u.index] = np.zeros((e.shape[1], num_classes))
                    np.add.at(sums[u.index].T, y_np, e)
                counts += np.bincount(y_np, minlength=num_classes)
        for c in range(num_classes):
            if counts[c] == 0:
                raise EmptyClass(c)
        proxies = {}
        for u in cands:
            weights = sums[u.index] / counts[np.newaxis, :]
            if normalize:
                weights = _normalize_rows(weights.T).T
            proxies[u.index] = weights

        correct = {u.index: 0 for u in cands}
        total = 0
        with torch.no_grad():
            for x, y in (eval_data if eval_data is not None else data):
                model(x)
                y_np = y.numpy()
                for u in cands:
                    e = embed(caps[u.index].out, embedding_budget).double().numpy()
                    if normalize:
                        e = _normalize_rows(e)
                    pred = proxy_predict(proxies[u.index], e)
                    correct[u.index] += int((pred == y_np).sum())
                total += len(y_np)
    finally:
        for cap in caps.values():
            cap.remove()

    accs = [correct[u.index] / total for u in cands]
    chance = 1.0 / num_classes
    gains = [accs[0] - chance]
    gains += [accs[i] - accs[i - 1] for i in range(1, len(accs))]
    ladder = AccuracyLadder(
        candidates=tuple(u.index for u in cands),
        names=tuple(u.name for u in cands),
        proxy_accuracies=tuple(accs),
        gains=tuple(gains),
        chance_baseline=chance,
    )
    table = ImportanceTable.from_scores(
        "imprint",
        layer_scores={u.index: g for u, g in zip(cands, gains)},
        unit_names={u.index: u.name for u in cands},
    )
    return ladder, table


def imprint_unit_proxy(graph, unit_index, data, embedding_budget=DEFAULT_EMBEDDING_BUDGET,
                       eval_data=None, normalize=False):
    """Imprint and score a single candidate; returns an ImprintProxy."""
    model = graph.model
    model.eval()
    unit = graph.units[unit_index]
    num_classes = graph.descriptor["num_classes"]
    cap = _OutputCapture(unit.module)
    sums = None
    counts = np.zeros(num_classes, dtype=np.int64)
    try:
        with torch.no_grad():
            for x, y in data:
                model(x)
                e = embed(cap.out, embedding_budget).double().numpy()
                if normalize:
                    e = _normalize_rows(e)
                if sums is None:
                    sums = np.zeros((e.shape[1], num_classes))
                np.add.at(sums.T, y.numpy(), e)
                counts += np.bincount(y.numpy(), minlength=num_classes)
        for c in range(num_classes):
            if counts[c] == 0:
                raise EmptyClass(c)
        weights = sums / counts[np.newaxis, :]
        if normalize:
            weights = _normalize_rows(weights.T).T
        correct = 0
        total = 0
        with torch.no_grad():
            for x, y in (eval_data if eval_data is not None else data):
                model(x)
                e = embed(cap.out, embedding_budget).double().numpy()
                if normalize:
                    e = _normalize_rows(e)
                correct += int((proxy_predict(weights, e) == y.numpy()).sum())
                total += len(y)
    finally:
        cap.remove()
    channels = unit.module.conv2.out_channels if unit.kind == "residual_block" \
        else unit.module.conv.out_channels
    d = pool_side(channels, embedding_budget)
    return ImprintProxy(
        unit_index=unit_index,
        pool_dim=d,
        embedding_length=weights.shape[0],
        weight_matrix=weights,
        proxy_accuracy=correct / total,
        class_counts=counts,
    )
