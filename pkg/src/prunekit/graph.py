"""Model graphs: ordered prunable units plus layer/filter surgery.

A ``ModelGraph`` wraps a runnable model together with its architecture
descriptor and an ordered tuple of ``PrunableUnit`` records (conv layers for
single-path nets, residual blocks for resnets).  Graphs are treated as
immutable: surgery functions never touch their input, they build a fresh
model, transfer weights, and return a new graph.

Layer removal follows the repair rule for single-path nets: when a removed
conv has differing input/output widths, the successor conv is re-allocated
to the new input-channel count and randomly re-initialized, while every
untouched layer keeps its pretrained weights bit-exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .errors import (
    DependencyViolation,
    EmptyModel,
    FloorViolation,
    InvalidPlan,
    ShapeMismatch,
    UnsupportedArchitecture,
)
from .models import POOL, ConvUnit, build_model, get_descriptor

#: smallest filter count a layer may keep during filter surgery
DEFAULT_MIN_FILTERS = 2


def _build_silently(descriptor):
    # fresh modules are fully overwritten afterwards; fork the RNG so the
    # throwaway init does not advance the caller's global stream
    with torch.random.fork_rng(devices=[]):
        return build_model(descriptor)


@dataclass(frozen=True)
class PrunableUnit:
    """One removal candidate: a conv layer or a residual block.

    ``convs`` lists the unit's main-branch (conv, bn) pairs in forward
    order; for blocks the unit's filter axis is the concatenation of those
    convs' filters and only the first conv's filters (indices below
    ``prunable_filter_count``) may be removed, because the second conv feeds
    the element-wise sum with the shortcut.
    """

    index: int
    name: str
    kind: str  # "conv_layer" | "residual_block"
    weight_shape: tuple  # (in_channels, filters, k, k)
    has_bn: bool
    shortcut_kind: str  # "none" | "identity" | "projection"
    removable: bool
    module: nn.Module = field(repr=False, compare=False)
    convs: tuple = field(repr=False, compare=False)

    @property
    def num_filters(self):
        return sum(conv.out_channels for conv, _ in self.convs)

    @property
    def prunable_filter_count(self):
        return self.convs[0][0].out_channels

    @property
    def bn_scales(self):
        """Per-filter BN scale, concatenated over the unit's convs."""
        return np.concatenate([
            bn.weight.detach().cpu().numpy() for _, bn in self.convs if bn is not None
        ])


@dataclass(frozen=True)
class ModelSignature:
    """Per-unit filter counts of a (possibly pruned) model."""

    filters_per_unit: tuple
    depth: int

    @classmethod
    def from_graph(cls, graph):
        widths = tuple(u.prunable_filter_count for u in graph.units)
        return cls(filters_per_unit=widths, depth=len(widths))


@dataclass(frozen=True)
class PrunePlan:
    """An ordered decision of which units or filters to remove.

    A plan is exclusively layer-mode or filter-mode.  ``budget`` records the
    request that produced it (mode + value); ``seed`` feeds the random
    initializer used to repair successor layers after layer removal.
    """

    criterion_name: str
    mode: str  # "layer" | "filter"
    removed_units: tuple = ()
    removed_filters: dict = field(default_factory=dict)
    budget: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("layer", "filter"):
            raise InvalidPlan(f"unknown plan mode {self.mode!r}")
        if self.mode == "layer" and self.removed_filters:
            raise InvalidPlan("layer-mode plan carries filter removals")
        if self.mode == "filter" and self.removed_units:
            raise InvalidPlan("filter-mode plan carries unit removals")
        object.__setattr__(self, "removed_units",
                           tuple(sorted(set(self.removed_units))))
        object.__setattr__(self, "removed_filters", {
            int(u): tuple(sorted(set(f)))
            for u, f in self.removed_filters.items() if len(f) > 0
        })

    @property
    def num_removed_filters(self):
        return sum(len(f) for f in self.removed_filters.values())

    def to_dict(self):
        return {
            "criterion": self.criterion_name,
            "mode": self.mode,
            "removed_units": list(self.removed_units),
            "removed_filters": {str(u): list(f)
                                for u, f in self.removed_filters.items()},
            "budget": dict(self.budget),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            criterion_name=d.get("criterion", "unknown"),
            mode=d["mode"],
            removed_units=tuple(d.get("removed_units", ())),
            removed_filters={int(u): tuple(f)
                             for u, f in d.get("removed_filters", {}).items()},
            budget=d.get("budget", {}),
            seed=d.get("seed", 0),
        )

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


class ModelGraph:
    """A runnable model viewed as an ordered sequence of prunable units."""

    def __init__(self, model, descriptor, units):
        self.model = model
        self.descriptor = descriptor
        self.units = tuple(units)

    @classmethod
    def from_model(cls, model, descriptor):
        family = descriptor.get("family")
        names = descriptor.get("unit_names")
        units = []
        if family == "vgg":
            conv_units = [m for m in model.features if isinstance(m, ConvUnit)]
            if not conv_units:
                raise UnsupportedArchitecture("model has no prunable units")
            last = len(conv_units) - 1
            for i, cu in enumerate(conv_units):
                units.append(PrunableUnit(
                    index=i,
                    name=names[i] if names else f"conv{i + 1}",
                    kind="conv_layer",
                    weight_shape=(cu.conv.in_channels, cu.conv.out_channels,
                                  cu.conv.kernel_size[0], cu.conv.kernel_size[1]),
                    has_bn=cu.bn is not None,
                    shortcut_kind="none",
                    # the final conv feeds the classifier head directly and is
                    # pinned so every valid plan preserves its input width
                    removable=i < last,
                    module=cu,
                    convs=((cu.conv, cu.bn),),
                ))
        elif family == "resnet_basic":
            blocks = [b for stage in model.stages for b in stage]
            if not blocks:
                raise UnsupportedArchitecture("model has no prunable units")
            last = len(blocks) - 1
            for i, blk in enumerate(blocks):
                shortcut = "projection" if blk.has_projection else "identity"
                units.append(PrunableUnit(
                    index=i,
                    name=names[i] if names else f"block{i + 1}",
                    kind="residual_block",
                    weight_shape=(blk.conv1.in_channels, blk.conv2.out_channels, 3, 3),
                    has_bn=True,
                    shortcut_kind=shortcut,
                    removable=shortcut == "identity" and i < last,
                    module=blk,
                    convs=((blk.conv1, blk.bn1), (blk.conv2, blk.bn2)),
                ))
        else:
            raise UnsupportedArchitecture(f"unknown family {family!r}")
        return cls(model, descriptor, units)

    def __len__(self):
        return len(self.units)

    @property
    def unit_names(self):
        return [u.name for u in self.units]

    @property
    def removable_indices(self):
        return [u.index for u in self.units if u.removable]

    def param_count(self):
        return sum(p.numel() for p in self.model.parameters())

    def clone(self):
        state = {k: v.clone() for k, v in self.model.state_dict().items()}
        model = _build_silently(self.descriptor)
        model.load_state_dict(state)
        return ModelGraph.from_model(model, json.loads(json.dumps(self.descriptor)))


# ---------------------------------------------------------------------------
# construction / serialization


def build_graph(checkpoint, descriptor=None):
    """Reconstruct a graph from a saved checkpoint plus its descriptor.

    ``checkpoint`` is a path to a ``.pt`` state dict (or a state dict);
    ``descriptor`` is a dict, a path to the JSON descriptor, or the name of a
    registered architecture.  When omitted, the ``.json`` file next to the
    checkpoint is used.
    """
    if isinstance(checkpoint, (str, Path)):
        ckpt_path = Path(checkpoint)
        if descriptor is None:
            descriptor = ckpt_path.with_suffix(".json")
        state = torch.load(ckpt_path, map_location="cpu", weights_only=True)
    else:
        state = checkpoint
        if descriptor is None:
            raise UnsupportedArchitecture("descriptor required with in-memory state")
    if isinstance(descriptor, (str, Path)):
        p = Path(descriptor)
        if p.exists():
            descriptor = json.loads(p.read_text())
        else:
            descriptor = get_descriptor(str(descriptor))
    _require_baseline(descriptor)
    model = _build_silently(descriptor)
    try:
        model.load_state_dict(state)
    except RuntimeError as exc:
        raise ShapeMismatch(f"stored weights contradict descriptor: {exc}") from exc
    return ModelGraph.from_model(model, descriptor)


def _require_baseline(descriptor):
    # fresh input descriptors with fewer than 2 prunable units are degenerate;
    # surgery-produced descriptors (which carry unit_names) may be smaller
    if "unit_names" in descriptor:
        return
    if descriptor.get("family") == "vgg":
        n = sum(1 for w in descriptor.get("widths", ()) if w != POOL)
    elif descriptor.get("family") == "resnet_basic":
        n = sum(descriptor.get("stage_depths", ()))
    else:
        raise UnsupportedArchitecture(f"unknown family {descriptor.get('family')!r}")
    if n < 2:
        raise UnsupportedArchitecture(
            f"degenerate input model with {n} prunable unit(s)")


def save_graph(graph, path):
    """Write ``<path>.pt`` (native state dict) and ``<path>.json`` (descriptor)."""
    stem = Path(path)
    if stem.suffix == ".pt":
        stem = stem.with_suffix("")
    ckpt = stem.with_suffix(".pt")
    torch.save(graph.model.state_dict(), ckpt)
    stem.with_suffix(".json").write_text(json.dumps(graph.descriptor, indent=2))
    return ckpt


def new_graph(arch_name, seed=0, num_classes=None):
    """Freshly initialized graph for a registered architecture."""
    desc = get_descriptor(arch_name)
    if num_classes is not None:
        desc["num_classes"] = num_classes
    return ModelGraph.from_model(build_model(desc, seed=seed), desc)


def format_signature(descriptor, removed_units=None):
    """Bracketed per-layer filter counts, 0 marking removed layers.

    Single-path nets include ``'M'`` entries for max-pool positions, e.g.
    ``[64, 64, 'M', 128, 0, 'M', ...]``.
    """
    removed = set(removed_units or ())
    entries = []
    if descriptor["family"] == "vgg":
        conv_idx = 0
        for w in descriptor["widths"]:
            if w == POOL:
                entries.append("'M'")
            else:
                entries.append(str(0 if conv_idx in removed else w))
                conv_idx += 1
    else:
        widths = []
        bw = descriptor.get("block_widths")
        for s, (width, depth) in enumerate(zip(descriptor["stage_widths"],
                                               descriptor["stage_depths"])):
            for b in range(depth):
                widths.append(bw[s][b] if bw is not None else width)
        for i, w in enumerate(widths):
            entries.append(str(0 if i in removed else w))
    return "[" + ", ".join(entries) + "]"


# ---------------------------------------------------------------------------
# surgery


def _check_layer_plan(graph, plan):
    if plan.mode != "layer":
        raise InvalidPlan(f"expected a layer-mode plan, got {plan.mode!r}")
    if len(plan.removed_units) >= len(graph.units):
        raise EmptyModel("plan would remove every unit")
    removable = set(graph.removable_indices)
    bad = [u for u in plan.removed_units if u not in removable]
    if bad:
        known = [u for u in bad if 0 <= u < len(graph.units)]
        if len(known) < len(bad):
            raise InvalidPlan(f"unit indices out of range: {sorted(set(bad) - set(known))}")
        raise InvalidPlan(f"non-removable units in plan: {known}")


def _reinit_conv(conv, generator):
    # zero-mean gaussian, variance 2/fan-in
    fan_in = conv.in_channels * conv.kernel_size[0] * conv.kernel_size[1]
    with torch.no_grad():
        conv.weight.normal_(0.0, math.sqrt(2.0 / fan_in), generator=generator)


def remove_layers(graph, plan):
    """Delete whole units; returns a new graph, input untouched.

    For single-path nets, the conv following a removed span whose input
    width changed is re-allocated and randomly re-initialized (seeded from
    ``plan.seed``); its BN keeps the pretrained affine parameters but starts
    from fresh running statistics.  Everything else is copied bit-exactly.
    """
    _check_layer_plan(graph, plan)
    removed = set(plan.removed_units)
    if not removed:
        return graph.clone()
    if graph.descriptor["family"] == "vgg":
        return _vgg_remove_layers(graph, removed, plan.seed)
    return _resnet_remove_layers(graph, removed)


def _vgg_remove_layers(graph, removed, seed):
    desc = graph.descriptor
    new_widths, retained = [], []
    conv_idx = 0
    for w in desc["widths"]:
        if w == POOL:
            new_widths.append(POOL)
            continue
        if conv_idx not in removed:
            new_widths.append(w)
            retained.append(conv_idx)
        conv_idx += 1
    new_desc = dict(desc)
    new_desc["widths"] = new_widths
    new_desc["unit_names"] = [graph.units[i].name for i in retained]
    model = _build_silently(new_desc)
    gen = torch.Generator().manual_seed(seed)
    dst_units = [m for m in model.features if isinstance(m, ConvUnit)]
    with torch.no_grad():
        for old_idx, dst in zip(retained, dst_units):
            src = graph.units[old_idx].module
            if dst.conv.in_channels == src.conv.in_channels:
                dst.load_state_dict(src.state_dict())
            else:
                _reinit_conv(dst.conv, gen)
                if dst.conv.bias is not None:
                    dst.conv.bias.copy_(src.conv.bias)
                if dst.bn is not None:
                    dst.bn.weight.copy_(src.bn.weight)
                    dst.bn.bias.copy_(src.bn.bias)
                    # running stats deliberately left at their fresh values
        model.classifier.load_state_dict(graph.model.classifier.state_dict())
    return ModelGraph.from_model(model, new_desc)


def _resnet_remove_layers(graph, removed):
    desc = graph.descriptor
    depths = desc["stage_depths"]
    bw = desc.get("block_widths")
    retained_per_stage = []
    retained_flat = []
    idx = 0
    for s, d in enumerate(depths):
        keep = []
        for b in range(d):
            if idx not in removed:
                keep.append(b)
                retained_flat.append(idx)
            idx += 1
        retained_per_stage.append(keep)
    new_desc = dict(desc)
    new_desc["stage_depths"] = [len(k) for k in retained_per_stage]
    new_desc["block_widths"] = [
        [(bw[s][b] if bw is not None else desc["stage_widths"][s]) for b in keep]
        for s, keep in enumerate(retained_per_stage)
    ]
    new_desc["unit_names"] = [graph.units[i].name for i in retained_flat]
    model = _build_silently(new_desc)
    dst_blocks = [b for stage in model.stages for b in stage]
    with torch.no_grad():
        model.stem.load_state_dict(graph.model.stem.state_dict())
        for old_idx, dst in zip(retained_flat, dst_blocks):
            dst.load_state_dict(graph.units[old_idx].module.state_dict())
        model.classifier.load_state_dict(graph.model.classifier.state_dict())
    return ModelGraph.from_model(model, new_desc)


def _keep_indices(unit, removed, min_filters):
    width = unit.prunable_filter_count
    bad = [f for f in removed if f < 0 or f >= unit.num_filters]
    if bad:
        raise InvalidPlan(f"filter indices out of range for {unit.name}: {bad}")
    locked = [f for f in removed if f >= width]
    if locked:
        raise DependencyViolation(
            f"filters {locked} of {unit.name} feed a shortcut sum or lie outside "
            "the prunable conv")
    keep = [f for f in range(width) if f not in set(removed)]
    if len(keep) < min_filters:
        raise FloorViolation(
            f"{unit.name} would keep {len(keep)} filters (< floor {min_filters})")
    return keep


def remove_filters(graph, plan, min_filters=DEFAULT_MIN_FILTERS):
    """Delete individual filters; successor input channels pruned in lockstep."""
    if plan.mode != "filter":
        raise InvalidPlan(f"expected a filter-mode plan, got {plan.mode!r}")
    for u in plan.removed_filters:
        if u < 0 or u >= len(graph.units):
            raise InvalidPlan(f"unit index out of range: {u}")
    if not plan.removed_filters:
        return graph.clone()
    if graph.descriptor["family"] == "vgg":
        return _vgg_remove_filters(graph, plan.removed_filters, min_filters)
    return _resnet_remove_filters(graph, plan.removed_filters, min_filters)


def _vgg_remove_filters(graph, removed_filters, min_filters):
    desc = graph.descriptor
    keeps = []
    for unit in graph.units:
        keeps.append(_keep_indices(unit, removed_filters.get(unit.index, ()), min_filters))
    new_widths = []
    conv_idx = 0
    for w in desc["widths"]:
        if w == POOL:
            new_widths.append(POOL)
        else:
            new_widths.append(len(keeps[conv_idx]))
            conv_idx += 1
    new_desc = dict(desc)
    new_desc["widths"] = new_widths
    new_desc["unit_names"] = [u.name for u in graph.units]
    model = _build_silently(new_desc)
    dst_units = [m for m in model.features if isinstance(m, ConvUnit)]
    with torch.no_grad():
        prev_keep = None
        for unit, dst in zip(graph.units, dst_units):
            src = unit.module
            rows = torch.as_tensor(keeps[unit.index], dtype=torch.long)
            w = src.conv.weight[rows]
            if prev_keep is not None:
                w = w[:, prev_keep]
            dst.conv.weight.copy_(w)
            if dst.conv.bias is not None:
                dst.conv.bias.copy_(src.conv.bias[rows])
            if dst.bn is not None:
                for attr in ("weight", "bias", "running_mean", "running_var"):
                    getattr(dst.bn, attr).copy_(getattr(src.bn, attr)[rows])
                dst.bn.num_batches_tracked.copy_(src.bn.num_batches_tracked)
            prev_keep = rows
        model.classifier.weight.copy_(graph.model.classifier.weight[:, prev_keep])
        model.classifier.bias.copy_(graph.model.classifier.bias)
    return ModelGraph.from_model(model, new_desc)


def _resnet_remove_filters(graph, removed_filters, min_filters):
    desc = graph.descriptor
    depths = desc["stage_depths"]
    keeps = {}
    new_bw = []
    idx = 0
    bw = desc.get("block_widths")
    for s, d in enumerate(depths):
        stage_widths = []
        for b in range(d):
            unit = graph.units[idx]
            keep = _keep_indices(unit, removed_filters.get(idx, ()), min_filters)
            keeps[idx] = keep
            stage_widths.append(len(keep))
            idx += 1
        new_bw.append(stage_widths)
    new_desc = dict(desc)
    new_desc["block_widths"] = new_bw
    new_desc["unit_names"] = [u.name for u in graph.units]
    model = _build_silently(new_desc)
    dst_blocks = [b for stage in model.stages for b in stage]
    with torch.no_grad():
        model.stem.load_state_dict(graph.model.stem.state_dict())
        for unit, dst in zip(graph.units, dst_blocks):
            src = unit.module
            rows = torch.as_tensor(keeps[unit.index], dtype=torch.long)
            dst.conv1.weight.copy_(src.conv1.weight[rows])
            for attr in ("weight", "bias", "running_mean", "running_var"):
                getattr(dst.bn1, attr).copy_(getattr(src.bn1, attr)[rows])
            dst.bn1.num_batches_tracked.copy_(src.bn1.num_batches_tracked)
            dst.conv2.weight.copy_(src.conv2.weight[:, rows])
            dst.bn2.load_state_dict(src.bn2.state_dict())
            if isinstance(dst.shortcut, nn.Sequential):
                dst.shortcut.load_state_dict(src.shortcut.state_dict())
        model.classifier.load_state_dict(graph.model.classifier.state_dict())
    return ModelGraph.from_model(model, new_desc)
