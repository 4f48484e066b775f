import copy

import pytest
import torch

from prunekit import (
    ModelSignature,
    PrunePlan,
    build_graph,
    format_signature,
    new_graph,
    remove_filters,
    remove_layers,
    save_graph,
)
from prunekit.errors import (
    DependencyViolation,
    EmptyModel,
    FloorViolation,
    InvalidPlan,
    ShapeMismatch,
    UnsupportedArchitecture,
)
from prunekit.models import analytic_param_count, build_model, get_descriptor

from conftest import state_dicts_equal

VGG19_SIG = ("[64, 64, 'M', 128, 128, 'M', 256, 256, 256, 256, 'M', "
             "512, 512, 512, 512, 'M', 512, 512, 512, 512, 'M']")
VGG19_PRUNED5_SIG = ("[64, 64, 'M', 128, 128, 'M', 256, 256, 256, 256, 'M', "
                     "512, 512, 0, 0, 'M', 0, 0, 0, 512, 'M']")


def test_vgg19_descriptor_units():
    g = new_graph("vgg19_bn", seed=0)
    assert len(g.units) == 16
    assert format_signature(g.descriptor) == VGG19_SIG


def test_resnet56_descriptor_units():
    g = new_graph("resnet56", seed=0)
    assert len(g.units) == 27
    assert g.descriptor["stage_depths"] == [9, 9, 9]
    # stage-transition blocks carry projections; everything else is identity
    kinds = [u.shortcut_kind for u in g.units]
    assert kinds.count("projection") == 2
    assert kinds[9] == "projection" and kinds[18] == "projection"


def test_degenerate_input_checkpoints_rejected():
    one_layer = {"family": "vgg", "widths": [8], "num_classes": 10}
    state = build_model(one_layer, seed=0).state_dict()
    with pytest.raises(UnsupportedArchitecture):
        build_graph(state, one_layer)
    with pytest.raises(UnsupportedArchitecture):
        build_model({"family": "vgg", "widths": [], "num_classes": 10})
    with pytest.raises(UnsupportedArchitecture):
        build_model({"family": "unknown"})


def test_pruning_down_to_single_unit_is_supported(toy_vgg):
    # random layer sweeps may retain a single conv; the pruned model must
    # build, run, and round-trip even though such a *input* checkpoint
    # would be rejected as degenerate
    plan = PrunePlan("manual", "layer", removed_units=tuple(range(7)))
    pruned = remove_layers(toy_vgg, plan)
    assert len(pruned.units) == 1
    assert pruned.model(torch.randn(1, 3, 32, 32)).shape == (1, 10)


def test_checkpoint_roundtrip_bit_exact(tmp_path, toy_vgg):
    stem = tmp_path / "model"
    save_graph(toy_vgg, stem)
    loaded = build_graph(stem.with_suffix(".pt"))
    assert state_dicts_equal(toy_vgg.model, loaded.model)
    assert [u.name for u in loaded.units] == [u.name for u in toy_vgg.units]


def test_checkpoint_descriptor_mismatch(tmp_path, toy_vgg):
    stem = tmp_path / "model"
    save_graph(toy_vgg, stem)
    with pytest.raises(ShapeMismatch):
        build_graph(stem.with_suffix(".pt"), get_descriptor("toy_resnet"))


def test_remove_layers_empty_plan_is_identity(toy_vgg):
    out = remove_layers(toy_vgg, PrunePlan("manual", "layer"))
    assert out is not toy_vgg
    assert state_dicts_equal(out.model, toy_vgg.model)


def test_vgg19_layer_prune_signature_matches_reference():
    g = new_graph("vgg19_bn", seed=0)
    removed = (10, 11, 12, 13, 14)
    plan = PrunePlan("manual", "layer", removed_units=removed)
    pruned = remove_layers(g, plan)
    assert format_signature(g.descriptor, removed) == VGG19_PRUNED5_SIG
    assert len(pruned.units) == 11
    out = pruned.model(torch.randn(1, 3, 32, 32))
    assert out.shape == (1, 100)


def test_remove_layers_repairs_successor(toy_vgg):
    # conv3 (16 -> 32) removed: conv4's input width changes, so its weight
    # is re-allocated and re-initialized while everything else is copied
    plan = PrunePlan("manual", "layer", removed_units=(2,), seed=7)
    pruned = remove_layers(toy_vgg, plan)
    src = toy_vgg.units
    dst = pruned.units
    assert [u.name for u in dst] == ["conv1", "conv2", "conv4", "conv5",
                                     "conv6", "conv7", "conv8"]
    repaired = dst[2].module
    assert repaired.conv.in_channels == 16
    assert repaired.conv.weight.shape == (32, 16, 3, 3)
    # BN affine kept, running stats reset
    assert torch.equal(repaired.bn.weight, src[3].module.bn.weight)
    assert torch.equal(repaired.bn.running_mean, torch.zeros(32))
    assert torch.equal(repaired.bn.running_var, torch.ones(32))
    # untouched layers are bit-exact
    for old, new in [(0, 0), (1, 1), (4, 3), (5, 4), (6, 5), (7, 6)]:
        assert state_dicts_equal(src[old].module, dst[new].module)
    assert torch.equal(pruned.model.classifier.weight,
                       toy_vgg.model.classifier.weight)
    assert pruned.model(torch.randn(2, 3, 32, 32)).shape == (2, 10)


def test_remove_layers_same_width_keeps_successor_weights(toy_vgg):
    # conv1 (3 in) cannot stand in, but conv2 (16 -> 16) removal leaves
    # conv3's input width at 16, so conv3 keeps its pretrained weights
    plan = PrunePlan("manual", "layer", removed_units=(1,))
    pruned = remove_layers(toy_vgg, plan)
    assert state_dicts_equal(pruned.units[1].module, toy_vgg.units[2].module)


def test_remove_layers_seed_controls_repair(toy_vgg):
    plan_a = PrunePlan("manual", "layer", removed_units=(2,), seed=1)
    plan_b = PrunePlan("manual", "layer", removed_units=(2,), seed=2)
    a = remove_layers(toy_vgg, plan_a)
    a2 = remove_layers(toy_vgg, plan_a)
    b = remove_layers(toy_vgg, plan_b)
    assert state_dicts_equal(a.model, a2.model)
    assert not torch.equal(a.units[2].module.conv.weight,
                           b.units[2].module.conv.weight)


def test_resnet_block_removal_keeps_output_shape(toy_resnet):
    x = torch.randn(2, 3, 32, 32)
    before = toy_resnet.model(x).shape
    plan = PrunePlan("manual", "layer", removed_units=(1, 6))
    pruned = remove_layers(toy_resnet, plan)
    assert pruned.model(x).shape == before
    assert len(pruned.units) == 10


def test_remove_layers_rejects_bad_plans(toy_vgg, toy_resnet):
    with pytest.raises(InvalidPlan):
        remove_layers(toy_vgg, PrunePlan("m", "layer", removed_units=(7,)))  # final
    with pytest.raises(InvalidPlan):
        remove_layers(toy_resnet, PrunePlan("m", "layer", removed_units=(4,)))  # projection
    with pytest.raises(InvalidPlan):
        remove_layers(toy_vgg, PrunePlan("m", "layer", removed_units=(99,)))
    with pytest.raises(EmptyModel):
        remove_layers(toy_vgg, PrunePlan("m", "layer",
                                         removed_units=tuple(range(8))))
    with pytest.raises(InvalidPlan):
        remove_layers(toy_vgg, PrunePlan("m", "filter",
                                         removed_filters={0: (1,)}))


def test_surgery_does_not_mutate_input(toy_vgg):
    before = copy.deepcopy(toy_vgg.model.state_dict())
    remove_layers(toy_vgg, PrunePlan("m", "layer", removed_units=(2, 3)))
    remove_filters(toy_vgg, PrunePlan("m", "filter", removed_filters={1: (0, 5)}))
    after = toy_vgg.model.state_dict()
    assert all(torch.equal(before[k], after[k]) for k in before)


def test_remove_filters_empty_plan_is_identity(toy_vgg):
    out = remove_filters(toy_vgg, PrunePlan("m", "filter"))
    assert out is not toy_vgg
    assert state_dicts_equal(out.model, toy_vgg.model)


def test_remove_one_filter_shifts_successor_channels(toy_vgg):
    plan = PrunePlan("m", "filter", removed_filters={2: (5,)})
    pruned = remove_filters(toy_vgg, plan)
    assert pruned.units[2].module.conv.out_channels == 31
    assert pruned.units[3].module.conv.in_channels == 31
    # the retained filters keep their exact weights
    keep = [i for i in range(32) if i != 5]
    assert torch.equal(pruned.units[2].module.conv.weight,
                       toy_vgg.units[2].module.conv.weight[keep])
    assert pruned.model(torch.randn(1, 3, 32, 32)).shape == (1, 10)


def test_remove_filters_last_conv_prunes_classifier_columns(toy_vgg):
    plan = PrunePlan("m", "filter", removed_filters={7: (0, 2)})
    pruned = remove_filters(toy_vgg, plan)
    keep = [i for i in range(64) if i not in (0, 2)]
    assert pruned.model.classifier.in_features == 62
    assert torch.equal(pruned.model.classifier.weight,
                       toy_vgg.model.classifier.weight[:, keep])


def test_remove_filters_floor(toy_vgg):
    with pytest.raises(FloorViolation):
        remove_filters(toy_vgg, PrunePlan("m", "filter",
                                          removed_filters={0: tuple(range(16))}))
    with pytest.raises(FloorViolation):
        remove_filters(toy_vgg, PrunePlan("m", "filter",
                                          removed_filters={0: tuple(range(15))}))
    # exactly at the floor is fine
    pruned = remove_filters(toy_vgg, PrunePlan("m", "filter",
                                               removed_filters={0: tuple(range(14))}))
    assert pruned.units[0].module.conv.out_channels == 2


def test_remove_filters_dependency_locked(toy_resnet):
    unit = toy_resnet.units[2]
    locked = unit.prunable_filter_count  # first conv2 filter index
    with pytest.raises(DependencyViolation):
        remove_filters(toy_resnet, PrunePlan("m", "filter",
                                             removed_filters={2: (locked,)}))
    with pytest.raises(InvalidPlan):
        remove_filters(toy_resnet, PrunePlan("m", "filter",
                                             removed_filters={2: (unit.num_filters,)}))


def test_resnet_filter_prune_param_count(toy_resnet):
    plan = PrunePlan("m", "filter", removed_filters={0: (0, 1), 5: (3,)})
    pruned = remove_filters(toy_resnet, plan)
    assert pruned.param_count() == analytic_param_count(pruned.descriptor)
    assert pruned.model(torch.randn(1, 3, 32, 32)).shape == (1, 10)


def test_signature_from_graph(toy_vgg):
    sig = ModelSignature.from_graph(toy_vgg)
    assert sig.filters_per_unit == (16, 16, 32, 32, 48, 48, 64, 64)
    assert sig.depth == 8


def test_vgg_without_bn_variant():
    desc = {"family": "vgg", "widths": [8, 8, "M", 16], "num_classes": 10,
            "batch_norm": False}
    model = build_model(desc, seed=0)
    from prunekit.graph import ModelGraph
    g = ModelGraph.from_model(model, desc)
    assert not g.units[0].has_bn
    assert g.param_count() == analytic_param_count(desc)
    pruned = remove_filters(g, PrunePlan("m", "filter", removed_filters={0: (1,)}))
    assert pruned.param_count() == analytic_param_count(pruned.descriptor)
    assert pruned.model(torch.randn(1, 3, 32, 32)).shape == (1, 10)
