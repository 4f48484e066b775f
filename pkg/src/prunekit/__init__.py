"""prunekit: layer and filter pruning for CNNs with real latency benchmarks."""

__version__ = "0.1.0"

from .criteria import (
    ImportanceTable,
    bn_scale_importance,
    ensemble_rank,
    feature_map_importance,
    taylor_weight_importance,
    weight_norm_importance,
)
from .estimators import FilterPruner, ImportanceRanker, LayerPruner
from .graph import (
    ModelGraph,
    ModelSignature,
    PrunableUnit,
    PrunePlan,
    build_graph,
    format_signature,
    new_graph,
    remove_filters,
    remove_layers,
    save_graph,
)
from .imprint import (
    AccuracyLadder,
    ImprintProxy,
    embed,
    imprint_weights,
    proxy_predict,
    rank_layers_by_imprint,
)
from .latency import LatencyReduction, LatencyReport, latency_reduction, measure
from .pruning import (
    PruneBudget,
    iterative_filter_prune,
    one_shot_filter_prune,
    plan_latency_prune,
    plan_layer_prune,
    spearman_rank_ablation,
)
from .training import TrainRecipe, evaluate, finetune, finetune_graph

__all__ = [
    "AccuracyLadder",
    "FilterPruner",
    "ImportanceRanker",
    "ImportanceTable",
    "ImprintProxy",
    "LatencyReduction",
    "LatencyReport",
    "LayerPruner",
    "ModelGraph",
    "ModelSignature",
    "PrunableUnit",
    "PruneBudget",
    "PrunePlan",
    "TrainRecipe",
    "bn_scale_importance",
    "build_graph",
    "embed",
    "ensemble_rank",
    "evaluate",
    "feature_map_importance",
    "finetune",
    "finetune_graph",
    "format_signature",
    "imprint_weights",
    "iterative_filter_prune",
    "latency_reduction",
    "measure",
    "new_graph",
    "one_shot_filter_prune",
    "plan_latency_prune",
    "plan_layer_prune",
    "proxy_predict",
    "rank_layers_by_imprint",
    "remove_filters",
    "remove_layers",
    "save_graph",
    "spearman_rank_ablation",
    "taylor_weight_importance",
    "weight_norm_importance",
]
