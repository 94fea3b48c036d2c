import time

import pytest
import torch
import torch.nn as nn

from pathgen.datasets import synthetic_two_blob
from pathgen.generator import GeneratorConfig, PathwayGenerator
from pathgen.instrument import TargetModel
from pathgen.training import TrainConfig, train
from pathgen.zoo import ConvClassifier, fit_target, toy3

# Hyperparameters pinned for the desk-scale training run shared by the
# acceptance tests (alpha fixed at 1, beta within the published order of
# magnitude for small models).
DESK_TRAIN = dict(alpha=1.0, beta=0.005, learning_rate=1e-3, epochs=10, batch_size=32, seed=0)
DESK_N_TRAIN = 512
DESK_N_TEST = 512


def one_conv_model(weight: float = 2.0, channels: int = 1) -> ConvClassifier:
    """Single 1x1 conv (no bias) + ReLU on a 1-pixel input; head sums channels."""
    conv = nn.Conv2d(1, channels, kernel_size=1, bias=False)
    with torch.no_grad():
        conv.weight.fill_(weight)
    head = nn.Linear(channels, 2)
    with torch.no_grad():
        head.weight.zero_()
        head.weight[0].fill_(1.0)
        head.bias.zero_()
    features = nn.Sequential(conv, nn.ReLU())
    return ConvClassifier("custom", features, head, (1, 1, 1), 2)


@pytest.fixture(scope="session")
def toy_model() -> TargetModel:
    torch.manual_seed(7)
    return TargetModel(toy3())


@pytest.fixture(scope="session")
def desk_data():
    train_set = synthetic_two_blob(DESK_N_TRAIN, seed=0, split="train")
    test_set = synthetic_two_blob(DESK_N_TEST, seed=0, split="test")
    return train_set, test_set


@pytest.fixture(scope="session")
def train_times() -> dict:
    """Wall-clock seconds spent building the trained fixtures."""
    return {"target": 0.0, "generator": 0.0}


@pytest.fixture(scope="session")
def desk_target(desk_data, train_times) -> tuple[TargetModel, float]:
    """toy3 trained on the synthetic blobs; returns (model, test accuracy)."""
    train_set, test_set = desk_data
    start = time.time()
    torch.manual_seed(0)
    net = toy3()
    fit_target(net, train_set.images, train_set.labels, epochs=20, lr=1e-3, seed=0)
    with torch.no_grad():
        preds = net(test_set.images).argmax(dim=1)
    acc = (preds == test_set.labels).float().mean().item()
    train_times["target"] = time.time() - start
    return TargetModel(net), acc


@pytest.fixture(scope="session")
def desk_generator(desk_target, desk_data, train_times) -> PathwayGenerator:
    """Pathway generator trained for the acceptance criteria."""
    model, _ = desk_target
    train_set, _ = desk_data
    start = time.time()
    torch.manual_seed(DESK_TRAIN["seed"])
    gen = PathwayGenerator(GeneratorConfig.for_model(model))
    train(model, gen, (train_set.images, train_set.labels), TrainConfig(**DESK_TRAIN))
    gen.eval()
    train_times["generator"] = time.time() - start
    return gen
