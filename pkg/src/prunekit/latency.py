"""Wall-clock inference latency under a fixed measurement protocol.

Protocol: a fixed random input is generated once per measurement from a
recorded seed, the model runs ``warmup`` untimed passes (lazy kernel and
allocator initialization), then ``iters`` individually timed passes with a
device synchronization barrier before every clock read.  Defaults are 10
warmup and 1000 timed iterations at batch size 1.

Only one measurement may run at a time in a process; concurrent harness use
would corrupt timings, so a module-level token guards the loop.
"""

from __future__ import annotations

import json
import statistics
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import torch

from .errors import DeviceUnavailable, MeasurementActive, OutOfMemory, ProtocolMismatch

DEFAULT_WARMUP = 10
DEFAULT_ITERS = 1000

_MEASUREMENT_TOKEN = threading.Lock()


@dataclass(frozen=True)
class LatencyReport:
    device_label: str
    batch_size: int
    input_shape: tuple
    warmup_iters: int
    timed_iters: int
    mean_ms: float
    std_ms: float
    seed: int = 0
    samples: tuple = field(default=(), repr=False)

    def to_dict(self, include_samples=True):
        d = {
            "device_label": self.device_label,
            "batch_size": self.batch_size,
            "input_shape": list(self.input_shape),
            "warmup_iters": self.warmup_iters,
            "timed_iters": self.timed_iters,
            "mean_ms": self.mean_ms,
            "std_ms": self.std_ms,
            "seed": self.seed,
        }
        if include_samples and self.samples:
            d["samples"] = list(self.samples)
        return d

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def from_dict(cls, d):
        return cls(
            device_label=d["device_label"],
            batch_size=d["batch_size"],
            input_shape=tuple(d["input_shape"]),
            warmup_iters=d["warmup_iters"],
            timed_iters=d["timed_iters"],
            mean_ms=d["mean_ms"],
            std_ms=d["std_ms"],
            seed=d.get("seed", 0),
            samples=tuple(d.get("samples", ())),
        )

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class LatencyReduction:
    baseline: LatencyReport
    pruned: LatencyReport

    @property
    def lr_percent(self):
        """(1 - pruned/baseline) * 100; negative means the model got slower."""
        return (1.0 - self.pruned.mean_ms / self.baseline.mean_ms) * 100.0


def _resolve_device(device):
    dev = torch.device(device)
    if dev.type == "cuda" and not torch.cuda.is_available():
        raise DeviceUnavailable("cuda requested but not available")
    return dev


def _sync(dev):
    if dev.type == "cuda":
        torch.cuda.synchronize(dev)


def measure(model, batch_size=1, input_shape=(3, 32, 32), warmup=DEFAULT_WARMUP,
            iters=DEFAULT_ITERS, device="cpu", seed=0, keep_samples=False):
    """Time ``iters`` forward passes after ``warmup`` untimed ones.

    Returns a LatencyReport with mean/std over the timed passes, measured
    with a monotonic high-resolution clock and a synchronization barrier
    before every read on accelerator targets.
    """
    if iters < 1:
        raise ProtocolMismatch("timed_iters must be >= 1")
    if not _MEASUREMENT_TOKEN.acquire(blocking=False):
        raise MeasurementActive("another measurement is running in this process")
    try:
        dev = _resolve_device(device)
        model = model.to(dev)
        was_training = model.training
        model.eval()
        gen = torch.Generator().manual_seed(seed)
        x = torch.randn((batch_size, *input_shape), generator=gen).to(dev)
        samples = []
        try:
            with torch.no_grad():
                for _ in range(warmup):
                    model(x)
                _sync(dev)
                for _ in range(iters):
                    _sync(dev)
                    t0 = time.perf_counter()
                    model(x)
                    _sync(dev)
                    samples.append((time.perf_counter() - t0) * 1000.0)
        except torch.cuda.OutOfMemoryError as exc:
            raise OutOfMemory(batch_size, exc) from exc
        if was_training:
            model.train()
        mean = statistics.fmean(samples)
        std = statistics.pstdev(samples) if len(samples) > 1 else 0.0
        return LatencyReport(
            device_label=str(dev),
            batch_size=batch_size,
            input_shape=tuple(input_shape),
            warmup_iters=warmup,
            timed_iters=iters,
            mean_ms=mean,
            std_ms=std,
            seed=seed,
            samples=tuple(samples) if keep_samples else (),
        )
    finally:
        _MEASUREMENT_TOKEN.release()


def latency_reduction(baseline, pruned):
    """Pair two reports measured under the same protocol."""
    for attr in ("batch_size", "input_shape", "device_label"):
        a, b = getattr(baseline, attr), getattr(pruned, attr)
        if a != b:
            raise ProtocolMismatch(f"{attr} differs: {a} vs {b}")
    return LatencyReduction(baseline=baseline, pruned=pruned)
