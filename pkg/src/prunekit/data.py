"""Desk-scale synthetic image classification data.

The benchmark dataset is generated procedurally: each class owns a smooth
random prototype image, and samples are randomly shifted, noisy copies of
it.  The shift nuisance makes shallow representations noticeably weaker
than deep ones while keeping the task learnable in a few CPU epochs, which
is what the toolkit's desk-scale studies need.  Everything is derived from
a single seed, so loaders rebuilt from the same config are identical.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F
from torch.utils.data import DataLoader, TensorDataset


def make_dataset(num_classes=10, samples_per_class=120, image_size=32,
                 channels=3, noise_std=1.0, max_shift=8, seed=0,
                 train_fraction=0.8):
    """Return (train_x, train_y, val_x, val_y) float32/int64 tensors."""
    rng = np.random.default_rng(seed)
    low = rng.normal(size=(num_classes, channels, 8, 8)).astype(np.float32)
    protos = F.interpolate(torch.from_numpy(low), size=(image_size, image_size),
                           mode="bilinear", align_corners=False)
    protos = protos / protos.std(dim=(1, 2, 3), keepdim=True)

    xs, ys = [], []
    for c in range(num_classes):
        shifts = rng.integers(-max_shift, max_shift + 1, size=(samples_per_class, 2))
        noise = rng.normal(scale=noise_std,
                           size=(samples_per_class, channels, image_size, image_size))
        for s in range(samples_per_class):
            img = torch.roll(protos[c], shifts=(int(shifts[s, 0]), int(shifts[s, 1])),
                             dims=(1, 2))
            xs.append(img + torch.from_numpy(noise[s].astype(np.float32)))
            ys.append(c)
    x = torch.stack(xs)
    y = torch.tensor(ys, dtype=torch.long)

    n_train = int(round(samples_per_class * train_fraction))
    train_mask = torch.zeros(len(y), dtype=torch.bool)
    for c in range(num_classes):
        idx = (y == c).nonzero(as_tuple=True)[0]
        train_mask[idx[:n_train]] = True
    # deterministic interleaving of classes so truncated streams stay balanced
    order = torch.argsort(torch.arange(len(y)) % samples_per_class, stable=True)
    train_idx = order[train_mask[order]]
    val_idx = order[~train_mask[order]]
    return x[train_idx], y[train_idx], x[val_idx], y[val_idx]


def make_loaders(num_classes=10, samples_per_class=120, image_size=32,
                 channels=3, noise_std=1.0, max_shift=8, seed=0,
                 train_fraction=0.8, batch_size=64, shuffle=True):
    """Train/val loaders; shuffling is driven by a generator seeded from ``seed``."""
    tx, ty, vx, vy = make_dataset(num_classes, samples_per_class, image_size,
                                  channels, noise_std, max_shift, seed,
                                  train_fraction)
    gen = torch.Generator().manual_seed(seed)
    train = DataLoader(TensorDataset(tx, ty), batch_size=batch_size,
                       shuffle=shuffle, generator=gen)
    val = DataLoader(TensorDataset(vx, vy), batch_size=batch_size)
    return train, val


def batch_stream(loader, num_batches=None):
    """Yield up to ``num_batches`` (inputs, targets) pairs from a loader."""
    for i, batch in enumerate(loader):
        if num_batches is not None and i >= num_batches:
            return
        yield batch


DATA_DEFAULTS = {
    "num_classes": 10,
    "samples_per_class": 120,
    "image_size": 32,
    "channels": 3,
    "noise_std": 1.0,
    "max_shift": 8,
    "seed": 0,
    "train_fraction": 0.8,
    "batch_size": 64,
}
