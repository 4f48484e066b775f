import math

import numpy as np
import pytest
import torch

from prunekit import (
    bn_scale_importance,
    ensemble_rank,
    feature_map_importance,
    new_graph,
    taylor_weight_importance,
    weight_norm_importance,
)
from prunekit.criteria import ImportanceTable, accumulated_gradients
from prunekit.data import batch_stream, make_loaders
from prunekit.errors import ConfigError, CriterionInapplicable, MismatchedUnits
from prunekit.graph import ModelGraph
from prunekit.models import build_model

# -------------------------------------------------------------------------
# brute-force oracles


def weight_norm_oracle(conv_weight):
    """Elementwise-loop L2 norms per filter."""
    w = conv_weight.detach().numpy()
    out = []
    for i in range(w.shape[0]):
        acc = 0.0
        for v in w[i].ravel():
            acc += float(v) * float(v)
        out.append(math.sqrt(acc))
    return out


def rank_sum_oracle(tables):
    units = tables[0].units
    return {u: sum(list(t.rank_order).index(u) for t in tables) for u in units}


def small_vgg(widths, seed=0, in_channels=3):
    desc = {"family": "vgg", "widths": list(widths), "num_classes": 10,
            "in_channels": in_channels}
    return ModelGraph.from_model(build_model(desc, seed=seed), desc)


# -------------------------------------------------------------------------
# weight norm


def test_weight_norm_zero_layer(toy_vgg):
    with torch.no_grad():
        toy_vgg.units[3].module.conv.weight.zero_()
    table = weight_norm_importance(toy_vgg)
    assert table.layer_scores[3] == 0.0
    assert table.rank_order[0] == 3


def test_weight_norm_identical_filters(toy_vgg):
    unit = toy_vgg.units[0]
    with torch.no_grad():
        unit.module.conv.weight.copy_(
            unit.module.conv.weight[0].unsqueeze(0).expand_as(unit.module.conv.weight))
    v = float(unit.module.conv.weight[0].detach().double().norm())
    table = weight_norm_importance(toy_vgg)
    assert table.layer_scores[0] == pytest.approx(v, rel=1e-12)


def test_weight_norm_matches_loop_oracle():
    g = small_vgg([2, 3])
    table = weight_norm_importance(g)
    for unit in g.units:
        expected = weight_norm_oracle(unit.module.conv.weight)
        assert np.allclose(table.filter_scores[unit.index], expected, rtol=1e-9)
        assert table.layer_scores[unit.index] == pytest.approx(
            sum(expected) / len(expected), rel=1e-9)


def test_weight_norm_scale_behavior(toy_vgg):
    base = weight_norm_importance(toy_vgg)
    with torch.no_grad():
        toy_vgg.units[4].module.conv.weight.mul_(2.0)
    scaled = weight_norm_importance(toy_vgg)
    # doubling the weights doubles the score exactly (powers of two are
    # exact in floating point)
    assert scaled.layer_scores[4] == 2.0 * base.layer_scores[4]
    others = [u for u in base.units if u != 4]
    base_rel = sorted(others, key=lambda u: (base.layer_scores[u], u))
    scaled_rel = sorted(others, key=lambda u: (scaled.layer_scores[u], u))
    assert base_rel == scaled_rel


# -------------------------------------------------------------------------
# taylor weights


def test_taylor_zero_gradients(toy_vgg, train_batches):
    with torch.no_grad():
        toy_vgg.model.classifier.weight.zero_()
        toy_vgg.model.classifier.bias.zero_()
    table = taylor_weight_importance(toy_vgg, train_batches[:2], 2)
    for u in table.units:
        assert np.all(table.filter_scores[u] == 0.0)


def test_taylor_single_weight_filter_is_abs_product():
    # 1x1 inputs leave exactly one active weight per 3x3 kernel, so the
    # filter score collapses to |g*w| at the kernel center
    g = small_vgg([1, 2], in_channels=1)
    g.model.double()
    x = torch.randn(16, 1, 1, 1, generator=torch.Generator().manual_seed(0)).double()
    y = torch.randint(0, 10, (16,), generator=torch.Generator().manual_seed(1))
    grads = accumulated_gradients(g, [(x, y)], 1)
    table = taylor_weight_importance(g, [(x, y)], 1)
    g0 = grads[0][0][0, 0, 1, 1]
    w0 = g.units[0].module.conv.weight[0, 0, 1, 1].double()
    assert table.filter_scores[0][0] == pytest.approx(abs(float(g0 * w0)), rel=1e-12)


def test_taylor_gradients_match_finite_differences():
    g = small_vgg([2, 3], in_channels=2)
    model = g.model.double()
    gen = torch.Generator().manual_seed(42)
    x = torch.randn(8, 2, 6, 6, generator=gen).double()
    y = torch.randint(0, 10, (8,), generator=gen)
    grads = accumulated_gradients(g, [(x, y)], 1)

    def loss_value():
        model.eval()
        with torch.no_grad():
            return float(torch.nn.functional.cross_entropy(model(x), y))

    h = 1e-5
    for unit in g.units:
        conv = unit.module.conv
        w = conv.weight
        fd = torch.zeros_like(w)
        for idx in np.ndindex(*w.shape):
            with torch.no_grad():
                orig = float(w[idx])
                w[idx] = orig + h
                up = loss_value()
                w[idx] = orig - h
                down = loss_value()
                w[idx] = orig
            fd[idx] = (up - down) / (2 * h)
        analytic = grads[unit.index][0]
        denom = torch.maximum(fd.abs(), torch.full_like(fd, 1e-8))
        assert float(((analytic - fd).abs() / denom).max()) < 1e-3


def test_taylor_determinism(toy_vgg, train_batches):
    t1 = taylor_weight_importance(toy_vgg, train_batches[:3], 3)
    t2 = taylor_weight_importance(toy_vgg, train_batches[:3], 3)
    assert t1.rank_order == t2.rank_order
    assert t1.layer_scores == t2.layer_scores


# -------------------------------------------------------------------------
# bn scale


def test_bn_fresh_scales_are_one(toy_vgg):
    table = bn_scale_importance(toy_vgg)
    for u in table.units:
        assert table.layer_scores[u] == pytest.approx(1.0)


def test_bn_half_scales(toy_vgg):
    with torch.no_grad():
        toy_vgg.units[2].module.bn.weight.fill_(0.5)
    table = bn_scale_importance(toy_vgg)
    assert table.layer_scores[2] == pytest.approx(0.25)


def test_bn_without_bn_raises():
    desc = {"family": "vgg", "widths": [4, 4], "num_classes": 10,
            "batch_norm": False}
    g = ModelGraph.from_model(build_model(desc, seed=0), desc)
    with pytest.raises(CriterionInapplicable):
        bn_scale_importance(g)


def test_bn_block_units_cover_both_convs(toy_resnet):
    table = bn_scale_importance(toy_resnet)
    unit = toy_resnet.units[1]
    assert len(table.filter_scores[1]) == unit.num_filters
    expected = np.concatenate([
        unit.module.bn1.weight.detach().numpy() ** 2,
        unit.module.bn2.weight.detach().numpy() ** 2,
    ])
    assert np.allclose(table.filter_scores[1], expected, rtol=1e-6)


# -------------------------------------------------------------------------
# feature maps


def test_feature_map_zero_inputs_zero_scores(toy_vgg):
    x = torch.zeros(8, 3, 32, 32)
    y = torch.arange(8) % 10
    table = feature_map_importance(toy_vgg, [(x, y)], 1)
    for u in table.units:
        assert np.all(table.filter_scores[u] == 0.0)


def test_feature_map_matches_loop_oracle(toy_vgg, train_batches):
    x, y = train_batches[0]
    x, y = x[:16], y[:16]

    # independent capture of activations and their gradients
    acts, grads = {}, {}

    def fwd_hook(idx):
        def hook(mod, inp, out):
            acts[idx] = out.detach().clone()
            out.register_hook(lambda gr: grads.__setitem__(idx, gr.detach().clone()))
        return hook

    handles = [u.module.register_forward_hook(fwd_hook(u.index))
               for u in toy_vgg.units]
    toy_vgg.model.eval()
    loss = torch.nn.functional.cross_entropy(toy_vgg.model(x), y)
    loss.backward()
    for h in handles:
        h.remove()
    toy_vgg.model.zero_grad(set_to_none=True)

    table = feature_map_importance(toy_vgg, [(x, y)], 1)
    for unit in toy_vgg.units:
        a = acts[unit.index].double().numpy()
        gr = grads[unit.index].double().numpy()
        n_samples, n_channels, hh, ww = a.shape
        expected = np.zeros(n_channels)
        for c in range(n_channels):
            total = 0.0
            for s in range(n_samples):
                total += np.linalg.norm((a[s, c] * gr[s, c]).ravel())
            expected[c] = total / n_samples / (hh * ww)
        assert np.allclose(table.filter_scores[unit.index], expected, rtol=1e-5)


def test_feature_map_single_pixel_is_abs_product():
    g = small_vgg([2, 2], in_channels=1)
    x = torch.randn(4, 1, 1, 1, generator=torch.Generator().manual_seed(3))
    y = torch.tensor([0, 1, 2, 3])

    acts, grads = {}, {}

    def hook(mod, inp, out):
        acts["u0"] = out.detach().clone()
        out.register_hook(lambda gr: grads.__setitem__("u0", gr.detach().clone()))

    h = g.units[0].module.register_forward_hook(hook)
    g.model.eval()
    torch.nn.functional.cross_entropy(g.model(x), y).backward()
    h.remove()
    g.model.zero_grad(set_to_none=True)

    table = feature_map_importance(g, [(x, y)], 1)
    a = acts["u0"].double().numpy()[:, :, 0, 0]
    gr = grads["u0"].double().numpy()[:, :, 0, 0]
    expected = np.abs(a * gr).mean(axis=0)
    assert np.allclose(table.filter_scores[0], expected, rtol=1e-9)


def test_feature_map_block_units_span_both_maps(toy_resnet, train_batches):
    x, y = train_batches[0]
    table = feature_map_importance(toy_resnet, [(x[:8], y[:8])], 1)
    for unit in toy_resnet.units:
        assert len(table.filter_scores[unit.index]) == unit.num_filters


# -------------------------------------------------------------------------
# aggregation law, applicable to every criterion with filter scores


def test_aggregation_law(toy_vgg, toy_resnet, train_batches):
    batches = [(x[:16], y[:16]) for x, y in train_batches[:2]]
    for graph in (toy_vgg, toy_resnet):
        tables = [
            weight_norm_importance(graph),
            taylor_weight_importance(graph, batches, 2),
            bn_scale_importance(graph),
            feature_map_importance(graph, batches, 2),
        ]
        for table in tables:
            for u in table.units:
                mean = float(np.mean(table.filter_scores[u]))
                tol = 1e-6 * max(1.0, abs(table.layer_scores[u]))
                assert abs(table.layer_scores[u] - mean) <= tol


# -------------------------------------------------------------------------
# ensemble


def _table(name, scores):
    return ImportanceTable.from_scores(name, layer_scores=scores)


def test_ensemble_identical_tables():
    t = _table("a", {0: 3.0, 1: 1.0, 2: 2.0})
    ens = ensemble_rank([t, t])
    assert ens.rank_order == t.rank_order


def test_ensemble_reversed_orders_tie():
    a = _table("a", {0: 0.0, 1: 1.0, 2: 2.0})
    b = _table("b", {0: 2.0, 1: 1.0, 2: 0.0})
    ens = ensemble_rank([a, b])
    # 0-based positions sum to 2 for every unit; ties break ascending
    assert all(v == 2.0 for v in ens.layer_scores.values())
    assert ens.rank_order == (0, 1, 2)


def test_ensemble_matches_rank_sum_oracle():
    rng = np.random.default_rng(11)
    tables = [_table(f"t{k}", {u: float(rng.normal()) for u in range(8)})
              for k in range(4)]
    ens = ensemble_rank(tables)
    oracle = rank_sum_oracle(tables)
    for u in range(8):
        assert ens.layer_scores[u] == oracle[u]


def test_ensemble_order_invariance():
    rng = np.random.default_rng(5)
    tables = [_table(f"t{k}", {u: float(rng.normal()) for u in range(6)})
              for k in range(3)]
    a = ensemble_rank(tables)
    b = ensemble_rank(tables[::-1])
    assert a.rank_order == b.rank_order
    assert a.layer_scores == b.layer_scores


def test_ensemble_mismatched_units():
    a = _table("a", {0: 1.0, 1: 2.0})
    b = _table("b", {0: 1.0, 2: 2.0})
    with pytest.raises(MismatchedUnits):
        ensemble_rank([a, b])
    with pytest.raises(ConfigError):
        ensemble_rank([a])


# -------------------------------------------------------------------------
# serialization


def test_table_csv_and_summary_roundtrip(tmp_path, toy_vgg):
    table = weight_norm_importance(toy_vgg)
    csv_path = tmp_path / "scores.csv"
    json_path = tmp_path / "summary.json"
    table.write_csv(csv_path)
    table.write_summary(json_path)
    loaded = ImportanceTable.read_summary(json_path)
    assert loaded.rank_order == table.rank_order
    assert loaded.layer_scores == table.layer_scores

    import csv as csv_mod
    rows = list(csv_mod.DictReader(open(csv_path)))
    assert len(rows) == sum(len(s) for s in table.filter_scores.values())
    r0 = rows[0]
    assert float(r0["filter_score"]) == table.filter_scores[0][0]
