"""Supervised training loops for scratch training and fine-tuning."""

from __future__ import annotations

import copy
import logging
import math
from dataclasses import dataclass, field

import torch
import torch.nn.functional as F

from .errors import ConfigError, Divergence

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainRecipe:
    regime: str = "finetune"  # "scratch" | "finetune"
    epochs: int = 30
    lr: float = 1e-3
    decay: dict = field(default_factory=dict)  # epoch -> multiplicative factor
    momentum: float = 0.9
    weight_decay: float = 5e-4
    batch_size: int = 64

    def __post_init__(self):
        if self.regime not in ("scratch", "finetune"):
            raise ConfigError(f"unknown regime {self.regime!r}")
        epochs = sorted(int(e) for e in self.decay)
        if epochs != [int(e) for e in self.decay]:
            raise ConfigError("decay epochs must be strictly increasing")
        if any(e >= self.epochs for e in epochs) and self.epochs > 0:
            raise ConfigError("decay epochs must precede the final epoch")

    def to_dict(self):
        return {
            "regime": self.regime, "epochs": self.epochs, "lr": self.lr,
            "decay": {str(k): v for k, v in self.decay.items()},
            "momentum": self.momentum, "weight_decay": self.weight_decay,
            "batch_size": self.batch_size,
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["decay"] = {int(k): float(v) for k, v in d.get("decay", {}).items()}
        return cls(**d)


# Standard recipes for the full-scale datasets, kept as presets; desk-scale
# runs shrink epochs via CLI flags.
RECIPES = {
    "cifar_scratch": TrainRecipe(regime="scratch", epochs=164, lr=0.1,
                                 decay={81: 0.1, 121: 0.1, 151: 0.1},
                                 batch_size=128),
    "cifar_finetune": TrainRecipe(regime="finetune", epochs=30, lr=1e-3,
                                  batch_size=128),
    "imagenet_scratch": TrainRecipe(regime="scratch", epochs=90, lr=0.1,
                                    decay={30: 0.1, 60: 0.1}, batch_size=256),
    "imagenet_finetune": TrainRecipe(regime="finetune", epochs=30, lr=1e-3,
                                     decay={10: 0.1, 20: 0.1}, batch_size=256),
}


def evaluate(model, loader, device="cpu"):
    """Top-1 accuracy as a fraction."""
    dev = torch.device(device)
    model = model.to(dev)
    was_training = model.training
    model.eval()
    correct = 0
    total = 0
    with torch.no_grad():
        for x, y in loader:
            pred = model(x.to(dev)).argmax(dim=1)
            correct += int((pred == y.to(dev)).sum())
            total += len(y)
    if was_training:
        model.train()
    if total == 0:
        raise ConfigError("evaluation stream produced no batches")
    return correct / total


def finetune(model, train_loader, val_loader, recipe, seed=0, device="cpu"):
    """Train under a recipe; returns (best-val model, per-epoch history).

    Deterministic for a fixed seed and data order.  ``epochs == 0`` returns
    the input model unchanged with an empty history.  Raises Divergence as
    soon as the loss stops being finite.
    """
    if recipe.epochs == 0:
        return model, []
    dev = torch.device(device)
    torch.manual_seed(seed)
    model = model.to(dev)
    opt = torch.optim.SGD(model.parameters(), lr=recipe.lr,
                          momentum=recipe.momentum,
                          weight_decay=recipe.weight_decay)
    lr = recipe.lr
    best_acc = -1.0
    best_state = None
    history = []
    for epoch in range(recipe.epochs):
        if epoch in recipe.decay:
            lr *= recipe.decay[epoch]
            for group in opt.param_groups:
                group["lr"] = lr
        model.train()
        running = 0.0
        n_batches = 0
        for step, (x, y) in enumerate(train_loader):
            opt.zero_grad()
            loss = F.cross_entropy(model(x.to(dev)), y.to(dev))
            if not math.isfinite(loss.item()):
                raise Divergence(
                    f"non-finite loss {loss.item()} at epoch {epoch} step {step}")
            loss.backward()
            opt.step()
            running += loss.item()
            n_batches += 1
        val_acc = evaluate(model, val_loader, device=device)
        history.append({"epoch": epoch, "lr": lr,
                        "train_loss": running / max(1, n_batches),
                        "val_acc": val_acc})
        log.debug("epoch %d loss %.4f val %.4f", epoch, history[-1]["train_loss"],
                  val_acc)
        if val_acc > best_acc:
            best_acc = val_acc
            best_state = copy.deepcopy(model.state_dict())
    model.load_state_dict(best_state)
    return model, history


def finetune_graph(graph, train_loader, val_loader, recipe, seed=0, device="cpu"):
    """Like ``finetune`` but clones the graph first, keeping the input intact."""
    out = graph.clone()
    finetune(out.model, train_loader, val_loader, recipe, seed=seed, device=device)
    return out
