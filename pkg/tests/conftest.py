import pytest
import torch

from prunekit import new_graph
from prunekit.data import make_loaders
from prunekit.training import TrainRecipe, finetune

# Desk-scale benchmark knobs shared by the whole suite.  The noise/shift
# levels are tuned so the task is learnable in a few CPU epochs while
# intermediate-layer proxies stay clearly below final-layer accuracy.
DATA_KW = dict(num_classes=10, samples_per_class=120, noise_std=3.5,
               max_shift=10, seed=0, batch_size=64)

TRAIN_RECIPE = TrainRecipe(regime="scratch", epochs=10, lr=0.05,
                           decay={7: 0.2}, batch_size=64)


@pytest.fixture(scope="session")
def loaders():
    """(train, val) loaders with deterministic order (no shuffling)."""
    return make_loaders(shuffle=False, **DATA_KW)


@pytest.fixture(scope="session")
def shuffled_loaders():
    return make_loaders(shuffle=True, **DATA_KW)


@pytest.fixture(scope="session")
def train_batches(loaders):
    return list(loaders[0])


@pytest.fixture()
def toy_vgg():
    return new_graph("toy_vgg8", seed=0)


@pytest.fixture()
def toy_resnet():
    return new_graph("toy_resnet", seed=0)


@pytest.fixture(scope="session")
def trained_vgg():
    """Toy VGG trained to convergence on the benchmark data.

    Builds its own loaders so the training trace is identical no matter
    which test instantiates the fixture first.
    """
    train, val = make_loaders(shuffle=True, **DATA_KW)
    graph = new_graph("toy_vgg8", seed=0)
    finetune(graph.model, train, val, TRAIN_RECIPE, seed=0)
    return graph


@pytest.fixture(scope="session")
def trained_resnet():
    train, val = make_loaders(shuffle=True, **DATA_KW)
    graph = new_graph("toy_resnet", seed=0)
    finetune(graph.model, train, val, TRAIN_RECIPE, seed=0)
    return graph


def state_dicts_equal(a, b):
    sa, sb = a.state_dict(), b.state_dict()
    if sa.keys() != sb.keys():
        return False
    return all(torch.equal(sa[k], sb[k]) for k in sa)
