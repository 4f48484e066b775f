"""Run manifests: every CLI invocation records enough to reproduce itself."""

from __future__ import annotations

import json
import platform
import time
from pathlib import Path

import torch

from . import __version__


def device_fingerprint():
    return {
        "platform": platform.platform(),
        "python": platform.python_version(),
        "torch": torch.__version__,
        "cuda_available": torch.cuda.is_available(),
        "cpu": platform.processor() or platform.machine(),
    }


class RunManifest:
    """Written before any heavy work; finalized when the run completes.

    An interrupted run therefore leaves a manifest with status
    ``incomplete`` on disk.
    """

    def __init__(self, command, config, seed, out_dir, path=None):
        self.data = {
            "command": command,
            "config": config,
            "seed": seed,
            "version": __version__,
            "device": device_fingerprint(),
            "started_at": time.strftime("%Y-%m-%dT%H:%M:%S"),
            "finished_at": None,
            "status": "incomplete",
            "outputs": [],
        }
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        self.path = Path(path) if path else out_dir / f"manifest_{command}.json"
        self._write()

    def _write(self):
        self.path.write_text(json.dumps(self.data, indent=2))

    def add_output(self, path):
        self.data["outputs"].append(str(path))
        self._write()
        return path

    def finish(self, status="complete"):
        self.data["status"] = status
        self.data["finished_at"] = time.strftime("%Y-%m-%dT%H:%M:%S")
        self._write()

    @staticmethod
    def load(path):
        return json.loads(Path(path).read_text())
