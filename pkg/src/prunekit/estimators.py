"""Scikit-learn style estimators wrapping the ranking and pruning pipeline.

The estimators follow the usual conventions (constructor params mirrored as
attributes, ``fit`` returns self, fitted state carries a trailing
underscore, ``get_params``/``set_params``/``clone`` work), so pruning
configurations compose with ecosystem tooling.  ``X`` is a ``ModelGraph``
rather than a data matrix: ranking is the fit, surgery is the transform.
"""

from __future__ import annotations

from sklearn.base import BaseEstimator

from .graph import remove_filters, remove_layers
from .imprint import DEFAULT_EMBEDDING_BUDGET, rank_layers_by_imprint
from .pruning import (
    compute_table,
    iterative_filter_prune,
    one_shot_filter_prune,
    plan_layer_prune,
)
from .validation import check_data, check_graph, check_positive_int


class ImportanceRanker(BaseEstimator):
    """Fit: compute an importance table for a graph under one criterion."""

    def __init__(self, criterion="weight_norm", num_batches=10,
                 embedding_budget=DEFAULT_EMBEDDING_BUDGET):
        self.criterion = criterion
        self.num_batches = num_batches
        self.embedding_budget = embedding_budget

    def fit(self, graph, data=None):
        check_graph(graph)
        if self.criterion == "imprint":
            self.ladder_, self.table_ = rank_layers_by_imprint(
                graph, check_data(data, "imprint"),
                embedding_budget=self.embedding_budget)
        else:
            self.table_ = compute_table(graph, self.criterion, data,
                                        num_batches=self.num_batches,
                                        embedding_budget=self.embedding_budget)
        return self


class LayerPruner(BaseEstimator):
    """Rank units on fit, remove the k least important on transform."""

    def __init__(self, criterion="imprint", num_layers=1, num_batches=10,
                 embedding_budget=DEFAULT_EMBEDDING_BUDGET, seed=0):
        self.criterion = criterion
        self.num_layers = num_layers
        self.num_batches = num_batches
        self.embedding_budget = embedding_budget
        self.seed = seed

    def fit(self, graph, data=None):
        check_graph(graph)
        self.table_ = compute_table(graph, self.criterion, data,
                                    num_batches=self.num_batches,
                                    embedding_budget=self.embedding_budget)
        self.plan_ = plan_layer_prune(graph, self.table_, self.num_layers,
                                      seed=self.seed)
        return self

    def transform(self, graph):
        return remove_layers(check_graph(graph), self.plan_)

    def fit_transform(self, graph, data=None):
        return self.fit(graph, data).transform(graph)


class FilterPruner(BaseEstimator):
    """One-shot or iterative filter pruning behind one estimator.

    With ``steps=1`` and ``lr=0`` the iterative driver degenerates to the
    one-shot regime, so ``iterative=False`` simply calls the one-shot path.
    ``fit`` stores both the cumulative ``plan_`` (baseline index space) and
    the fitted ``pruned_graph_`` (which, for the iterative regime, also
    carries the training updates); ``transform`` replays the plan on any
    compatible graph.
    """

    def __init__(self, criterion="taylor", total_filters=100, iterative=False,
                 filters_per_step=100, batches_per_step=10, steps=10, lr=1e-3,
                 momentum=0.9, min_filters=2, seed=0):
        self.criterion = criterion
        self.total_filters = total_filters
        self.iterative = iterative
        self.filters_per_step = filters_per_step
        self.batches_per_step = batches_per_step
        self.steps = steps
        self.lr = lr
        self.momentum = momentum
        self.min_filters = min_filters
        self.seed = seed

    def fit(self, graph, data=None):
        check_graph(graph)
        check_data(data, f"criterion {self.criterion}")
        if self.iterative:
            check_positive_int(self.steps, "steps")
            self.pruned_graph_, self.plan_ = iterative_filter_prune(
                graph, self.criterion, data,
                filters_per_step=self.filters_per_step,
                batches_per_step=self.batches_per_step, steps=self.steps,
                lr=self.lr, momentum=self.momentum,
                min_filters=self.min_filters, seed=self.seed)
        else:
            self.pruned_graph_, self.plan_ = one_shot_filter_prune(
                graph, self.criterion, data, self.total_filters,
                num_batches=self.batches_per_step,
                min_filters=self.min_filters, seed=self.seed)
        return self

    def transform(self, graph):
        return remove_filters(check_graph(graph), self.plan_,
                              min_filters=self.min_filters)

    def fit_transform(self, graph, data=None):
        return self.fit(graph, data).pruned_graph_
