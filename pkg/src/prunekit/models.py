"""Supported CNN families and their architecture descriptors.

Two families are supported:

* ``vgg``: a single-path stack of conv/BN/ReLU units separated by max-pool
  markers, followed by global average pooling and a linear classifier.
* ``resnet_basic``: a conv stem plus stages of two-conv basic blocks with
  identity or 1x1-projection shortcuts, global average pooling and a linear
  classifier.

A descriptor is a plain dict (JSON/YAML friendly) that fully determines the
module tree, so a state dict plus its descriptor reconstructs a model
exactly.  ``analytic_param_count`` computes the parameter count implied by a
descriptor without building the model; surgery code uses it to cross-check
weight bookkeeping.
"""

from __future__ import annotations

import copy

import torch
from torch import nn

from .errors import UnsupportedArchitecture

POOL = "M"


class ConvUnit(nn.Module):
    """conv -> BN -> ReLU. One prunable unit of the vgg family."""

    def __init__(self, in_channels, out_channels, kernel_size=3, batch_norm=True):
        super().__init__()
        self.conv = nn.Conv2d(in_channels, out_channels, kernel_size,
                              padding=kernel_size // 2, bias=not batch_norm)
        self.bn = nn.BatchNorm2d(out_channels) if batch_norm else None
        self.act = nn.ReLU()

    def forward(self, x):
        x = self.conv(x)
        if self.bn is not None:
            x = self.bn(x)
        return self.act(x)


class BasicBlock(nn.Module):
    """Two 3x3 convs with a shortcut. One prunable unit of the resnet family.

    ``mid_channels`` is the width of the first conv; it is the only
    filter-prunable dimension because the second conv feeds the element-wise
    sum with the shortcut.
    """

    def __init__(self, in_channels, out_channels, mid_channels=None, stride=1):
        super().__init__()
        mid_channels = out_channels if mid_channels is None else mid_channels
        self.conv1 = nn.Conv2d(in_channels, mid_channels, 3, stride=stride,
                               padding=1, bias=False)
        self.bn1 = nn.BatchNorm2d(mid_channels)
        self.conv2 = nn.Conv2d(mid_channels, out_channels, 3, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(out_channels)
        self.act1 = nn.ReLU()
        self.act2 = nn.ReLU()
        if stride != 1 or in_channels != out_channels:
            self.shortcut = nn.Sequential(
                nn.Conv2d(in_channels, out_channels, 1, stride=stride, bias=False),
                nn.BatchNorm2d(out_channels),
            )
        else:
            self.shortcut = nn.Identity()

    @property
    def has_projection(self):
        return not isinstance(self.shortcut, nn.Identity)

    def forward(self, x):
        out = self.act1(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        return self.act2(out + self.shortcut(x))


class VggNet(nn.Module):
    def __init__(self, widths, num_classes, in_channels=3, batch_norm=True):
        super().__init__()
        layers = []
        prev = in_channels
        for w in widths:
            if w == POOL:
                layers.append(nn.MaxPool2d(2, 2))
            else:
                layers.append(ConvUnit(prev, w, batch_norm=batch_norm))
                prev = w
        self.features = nn.Sequential(*layers)
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.classifier = nn.Linear(prev, num_classes)

    def forward(self, x):
        x = self.features(x)
        x = self.pool(x).flatten(1)
        return self.classifier(x)


class ResNetBasic(nn.Module):
    def __init__(self, stem_width, stage_widths, stage_depths, num_classes,
                 in_channels=3, block_widths=None):
        super().__init__()
        self.stem = ConvUnit(in_channels, stem_width)
        stages = []
        prev = stem_width
        for s, (width, depth) in enumerate(zip(stage_widths, stage_depths)):
            blocks = []
            for b in range(depth):
                stride = 2 if (s > 0 and b == 0) else 1
                mid = block_widths[s][b] if block_widths is not None else width
                blocks.append(BasicBlock(prev, width, mid_channels=mid, stride=stride))
                prev = width
            stages.append(nn.Sequential(*blocks))
        self.stages = nn.Sequential(*stages)
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.classifier = nn.Linear(prev, num_classes)

    def forward(self, x):
        x = self.stem(x)
        x = self.stages(x)
        x = self.pool(x).flatten(1)
        return self.classifier(x)


# Named presets.  The two toy models form the desk-scale benchmark; the full
# CIFAR configurations are kept as presets for scaled-up runs.
ARCHITECTURES = {
    "vgg19_bn": {
        "family": "vgg",
        "widths": [64, 64, POOL, 128, 128, POOL, 256, 256, 256, 256, POOL,
                   512, 512, 512, 512, POOL, 512, 512, 512, 512, POOL],
        "num_classes": 100,
        "in_channels": 3,
    },
    "resnet56": {
        "family": "resnet_basic",
        "stem_width": 16,
        "stage_widths": [16, 32, 64],
        "stage_depths": [9, 9, 9],
        "num_classes": 10,
        "in_channels": 3,
    },
    "toy_vgg8": {
        "family": "vgg",
        "widths": [16, 16, POOL, 32, 32, POOL, 48, 48, POOL, 64, 64],
        "num_classes": 10,
        "in_channels": 3,
    },
    "toy_resnet": {
        "family": "resnet_basic",
        "stem_width": 16,
        "stage_widths": [16, 32, 64],
        "stage_depths": [4, 4, 4],
        "num_classes": 10,
        "in_channels": 3,
    },
}


def get_descriptor(name):
    if name not in ARCHITECTURES:
        raise UnsupportedArchitecture(
            f"unknown architecture {name!r}; known: {sorted(ARCHITECTURES)}")
    return copy.deepcopy(ARCHITECTURES[name])


def conv_widths(descriptor):
    """Width of every conv unit in prunable order (vgg) or block output widths."""
    if descriptor["family"] == "vgg":
        return [w for w in descriptor["widths"] if w != POOL]
    widths = []
    for width, depth in zip(descriptor["stage_widths"], descriptor["stage_depths"]):
        widths.extend([width] * depth)
    return widths


def build_model(descriptor, seed=None):
    """Instantiate a freshly initialized model from a descriptor."""
    family = descriptor.get("family")
    if seed is not None:
        torch.manual_seed(seed)
    if family == "vgg":
        widths = descriptor["widths"]
        if not any(w != POOL for w in widths):
            raise UnsupportedArchitecture("vgg family needs at least 1 conv unit")
        return VggNet(widths, descriptor["num_classes"],
                      descriptor.get("in_channels", 3),
                      batch_norm=descriptor.get("batch_norm", True))
    if family == "resnet_basic":
        depths = descriptor["stage_depths"]
        if sum(depths) < 1:
            raise UnsupportedArchitecture("resnet family needs at least 1 block")
        return ResNetBasic(
            descriptor["stem_width"], descriptor["stage_widths"], depths,
            descriptor["num_classes"], descriptor.get("in_channels", 3),
            block_widths=descriptor.get("block_widths"))
    raise UnsupportedArchitecture(f"unknown family {family!r}")


def _conv_params(in_ch, out_ch, k, batch_norm=True):
    if batch_norm:
        # bias-free conv plus affine BN
        return k * k * in_ch * out_ch + 2 * out_ch
    return k * k * in_ch * out_ch + out_ch


def analytic_param_count(descriptor):
    """Parameter count implied by a descriptor (trainable tensors only)."""
    family = descriptor.get("family")
    if family == "vgg":
        total = 0
        prev = descriptor.get("in_channels", 3)
        bn = descriptor.get("batch_norm", True)
        for w in descriptor["widths"]:
            if w == POOL:
                continue
            total += _conv_params(prev, w, 3, batch_norm=bn)
            prev = w
        total += prev * descriptor["num_classes"] + descriptor["num_classes"]
        return total
    if family == "resnet_basic":
        stem = descriptor["stem_width"]
        total = _conv_params(descriptor.get("in_channels", 3), stem, 3)
        prev = stem
        block_widths = descriptor.get("block_widths")
        for s, (width, depth) in enumerate(zip(descriptor["stage_widths"],
                                               descriptor["stage_depths"])):
            for b in range(depth):
                stride = 2 if (s > 0 and b == 0) else 1
                mid = block_widths[s][b] if block_widths is not None else width
                total += _conv_params(prev, mid, 3)
                total += _conv_params(mid, width, 3)
                if stride != 1 or prev != width:
                    total += _conv_params(prev, width, 1)
                prev = width
        total += prev * descriptor["num_classes"] + descriptor["num_classes"]
        return total
    raise UnsupportedArchitecture(f"unknown family {family!r}")
