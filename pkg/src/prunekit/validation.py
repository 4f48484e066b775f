"""Input validation helpers shared by the estimator layer and the CLI."""

from __future__ import annotations

from .errors import ConfigError
from .graph import ModelGraph


def check_graph(graph):
    if not isinstance(graph, ModelGraph):
        raise TypeError(f"expected a ModelGraph, got {type(graph).__name__}")
    if len(graph.units) == 0:
        raise ConfigError("graph has no prunable units")
    return graph


def check_data(data, needed_by):
    if data is None:
        raise ConfigError(f"{needed_by} needs a (inputs, targets) batch stream")
    return data


def check_positive_int(value, name):
    if int(value) != value or value < 1:
        raise ConfigError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def check_fraction(value, name):
    if not 0 < value < 1:
        raise ConfigError(f"{name} must lie in (0, 1), got {value!r}")
    return float(value)
