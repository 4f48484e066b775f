"""Filter-level importance criteria and their layer-level aggregates.

Every statistics-based criterion produces a per-filter score for each unit;
the unit's layer score is the arithmetic mean of its filter scores, and the
rank order sorts units ascending by layer score (least important first,
ties broken by ascending unit index).  Scores are accumulated in float64 so
the aggregation law holds to tight tolerance.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .data import batch_stream
from .errors import ConfigError, CriterionInapplicable, MismatchedUnits, NoGradients


@dataclass(frozen=True)
class ImportanceTable:
    criterion_name: str
    filter_scores: dict = field(default_factory=dict)  # unit index -> np.ndarray
    layer_scores: dict = field(default_factory=dict)  # unit index -> float
    rank_order: tuple = ()
    unit_names: dict = field(default_factory=dict)

    @classmethod
    def from_scores(cls, criterion_name, filter_scores=None, layer_scores=None,
                    unit_names=None):
        filter_scores = {u: np.asarray(s, dtype=np.float64)
                         for u, s in (filter_scores or {}).items()}
        if layer_scores is None:
            layer_scores = {u: float(np.mean(s)) for u, s in filter_scores.items()}
        layer_scores = {int(u): float(v) for u, v in layer_scores.items()}
        rank = tuple(sorted(layer_scores, key=lambda u: (layer_scores[u], u)))
        return cls(criterion_name, filter_scores, layer_scores, rank,
                   dict(unit_names or {}))

    @property
    def units(self):
        return tuple(sorted(self.layer_scores))

    def rank_of(self, unit):
        """0-based position of ``unit`` in the rank order."""
        return self.rank_order.index(unit)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["unit_index", "filter_index", "filter_score"])
            for u in sorted(self.filter_scores):
                for i, s in enumerate(self.filter_scores[u]):
                    w.writerow([u, i, repr(float(s))])

    def write_summary(self, path):
        payload = {
            "criterion": self.criterion_name,
            "layer_scores": {str(u): self.layer_scores[u] for u in self.units},
            "rank_order": list(self.rank_order),
        }
        if self.unit_names:
            payload["unit_names"] = {str(u): n for u, n in self.unit_names.items()}
        Path(path).write_text(json.dumps(payload, indent=2))

    @classmethod
    def read_summary(cls, path):
        d = json.loads(Path(path).read_text())
        return cls(
            criterion_name=d["criterion"],
            filter_scores={},
            layer_scores={int(u): float(v) for u, v in d["layer_scores"].items()},
            rank_order=tuple(d["rank_order"]),
            unit_names={int(u): n for u, n in d.get("unit_names", {}).items()},
        )


def _names(graph):
    return {u.index: u.name for u in graph.units}


def _check_nonempty(graph):
    if len(graph.units) == 0:
        raise ConfigError("graph has no prunable units")


# ---------------------------------------------------------------------------
# weight statistics


def weight_norm_importance(graph):
    """Filter score = L2 norm of the filter's weight slice."""
    _check_nonempty(graph)
    scores = {}
    for unit in graph.units:
        per_filter = []
        for conv, _ in unit.convs:
            w = conv.weight.detach().double()
            per_filter.append(w.flatten(1).norm(dim=1).numpy())
        scores[unit.index] = np.concatenate(per_filter)
    return ImportanceTable.from_scores("weight_norm", scores, unit_names=_names(graph))


# ---------------------------------------------------------------------------
# gradient-weighted weight statistics


def accumulated_gradients(graph, data, num_batches=10):
    """Task-loss gradients of every unit conv weight, averaged over batches."""
    if num_batches < 1:
        raise ConfigError("num_batches must be >= 1")
    model = graph.model
    model.eval()
    accum = {u.index: [torch.zeros_like(c.weight, dtype=torch.float64)
                       for c, _ in u.convs]
             for u in graph.units}
    seen = 0
    for x, y in batch_stream(data, num_batches):
        model.zero_grad(set_to_none=True)
        loss = F.cross_entropy(model(x), y)
        loss.backward()
        for unit in graph.units:
            for j, (conv, _) in enumerate(unit.convs):
                if conv.weight.grad is None:
                    raise NoGradients(f"no gradient for {unit.name} conv {j}")
                accum[unit.index][j] += conv.weight.grad.double()
        seen += 1
    model.zero_grad(set_to_none=True)
    if seen == 0:
        raise ConfigError("data stream produced no batches")
    return {u: [g / seen for g in gs] for u, gs in accum.items()}


def taylor_weight_importance(graph, data, num_batches=10):
    """Filter score = L2 norm of gradient * weight over the filter's slice.

    Gradients are averaged across ``num_batches`` before the elementwise
    product, which keeps the score deterministic for a fixed data order.
    """
    _check_nonempty(graph)
    grads = accumulated_gradients(graph, data, num_batches)
    scores = {}
    for unit in graph.units:
        per_filter = []
        for j, (conv, _) in enumerate(unit.convs):
            gw = grads[unit.index][j] * conv.weight.detach().double()
            per_filter.append(gw.flatten(1).norm(dim=1).numpy())
        scores[unit.index] = np.concatenate(per_filter)
    return ImportanceTable.from_scores("taylor", scores, unit_names=_names(graph))


# ---------------------------------------------------------------------------
# batch-norm scale


def bn_scale_importance(graph):
    """Filter score = squared BN scale."""
    _check_nonempty(graph)
    scores = {}
    for unit in graph.units:
        if not unit.has_bn:
            raise CriterionInapplicable(f"unit {unit.name} has no batch norm")
        scales = unit.bn_scales.astype(np.float64)
        scores[unit.index] = scales ** 2
    return ImportanceTable.from_scores("bn_scale", scores, unit_names=_names(graph))


# ---------------------------------------------------------------------------
# feature-map statistics


class _Capture:
    """Grabs a module's output activation and that activation's gradient."""

    def __init__(self, module):
        self.act = None
        self.grad = None
        self.handle = module.register_forward_hook(self._on_forward)

    def _on_forward(self, module, inputs, output):
        self.act = output.detach()
        self.grad = None
        output.register_hook(self._on_grad)

    def _on_grad(self, grad):
        self.grad = grad.detach()

    def remove(self):
        self.handle.remove()


def activation_points(unit):
    """Modules whose outputs carry the unit's per-channel feature maps."""
    if unit.kind == "conv_layer":
        return [unit.module]
    return [unit.module.act1, unit.module]


def feature_map_importance(graph, data, num_batches=10):
    """Channel score = spatially normalized L2 norm of activation * gradient.

    Per sample and channel the elementwise product over the channel's
    spatial map is L2-normed, the norm is divided by the map size so scores
    are comparable across stages, and the result is averaged over all
    samples seen.
    """
    _check_nonempty(graph)
    if num_batches < 1:
        raise ConfigError("num_batches must be >= 1")
    model = graph.model
    model.eval()
    captures = {u.index: [_Capture(m) for m in activation_points(u)]
                for u in graph.units}
    sums = {u.index: None for u in graph.units}
    seen = 0
    try:
        for x, y in batch_stream(data, num_batches):
            model.zero_grad(set_to_none=True)
            loss = F.cross_entropy(model(x), y)
            loss.backward()
            for unit in graph.units:
                parts = []
                for cap in captures[unit.index]:
                    if cap.grad is None:
                        raise NoGradients(f"no activation gradient for {unit.name}")
                    prod = (cap.act.double() * cap.grad.double())
                    spatial = prod.shape[2] * prod.shape[3]
                    norms = prod.flatten(2).norm(dim=2) / spatial  # (B, C)
                    parts.append(norms.sum(dim=0))
                acc = torch.cat(parts)
                if sums[unit.index] is None:
                    sums[unit.index] = acc
                else:
                    sums[unit.index] += acc
            seen += x.shape[0]
    finally:
        for caps in captures.values():
            for cap in caps:
                cap.remove()
        model.zero_grad(set_to_none=True)
    if seen == 0:
        raise ConfigError("data stream produced no batches")
    scores = {u: (s / seen).numpy() for u, s in sums.items()}
    return ImportanceTable.from_scores("feature_map", scores, unit_names=_names(graph))


# ---------------------------------------------------------------------------
# rank ensembling


def ensemble_rank(tables):
    """Layer score = sum of the unit's 0-based rank across member tables."""
    if len(tables) < 2:
        raise ConfigError("ensemble needs at least 2 tables")
    units = tables[0].units
    for t in tables[1:]:
        if t.units != units:
            raise MismatchedUnits(
                f"tables disagree on units: {units} vs {t.units}")
    scores = {u: float(sum(t.rank_of(u) for t in tables)) for u in units}
    names = {}
    for t in tables:
        names.update(t.unit_names)
    return ImportanceTable.from_scores("ensemble", layer_scores=scores,
                                       unit_names=names)


STATISTIC_CRITERIA = {
    "weight_norm": weight_norm_importance,
    "taylor": taylor_weight_importance,
    "bn_scale": bn_scale_importance,
    "feature_map": feature_map_importance,
}

_ALIASES = {"bn": "bn_scale", "feature_maps": "feature_map",
            "taylor_weights": "taylor"}


def canonical_criterion(name):
    name = _ALIASES.get(name, name)
    if name not in STATISTIC_CRITERIA and name not in ("imprint", "ensemble"):
        raise ConfigError(f"unknown criterion {name!r}")
    return name


def compute_importance(graph, criterion, data=None, num_batches=10):
    """Dispatch for the statistics-based criteria."""
    criterion = canonical_criterion(criterion)
    if criterion in ("imprint", "ensemble"):
        raise ConfigError(f"{criterion} is not a statistics criterion")
    fn = STATISTIC_CRITERIA[criterion]
    if criterion in ("taylor", "feature_map"):
        if data is None:
            raise ConfigError(f"criterion {criterion} needs a data stream")
        return fn(graph, data, num_batches)
    return fn(graph)
