"""Small reference architecture family and victim-model training."""

from dataclasses import replace

import numpy as np

from . import nnet
from .errors import ArgumentError
from .nnet import Model, conv2d, flatten, linear, maxpool, relu
from .rng import derive_seed
from .training import TrainConfig, train

ARCH_NAMES = ("mlp2", "cnn_s", "cnn_d")


def build_arch(name: str, input_shape, num_classes: int, seed: int = 0) -> Model:
    """Untrained model for one of the three reference architectures.

    The three templates differ pairwise in layer count and parameter count:
    mlp2 is a two-hidden-layer perceptron, cnn_s a shallow 2-conv network,
    cnn_d a deeper 3-conv network with two linear layers.
    """
    input_shape = tuple(int(d) for d in input_shape)
    n_in = int(np.prod(input_shape))
    c = input_shape[2] if len(input_shape) == 3 else 1
    if name == "mlp2":
        layers = [flatten(), linear(n_in, 64), relu(), linear(64, 32), relu(),
                  linear(32, num_classes)]
    elif name == "cnn_s":
        layers = [conv2d(c, 8, 3, stride=1), relu(), maxpool(2),
                  conv2d(8, 16, 3, stride=2), relu(), flatten(), None]
        shape = input_shape
        for spec in layers[:-1]:
            shape = nnet.output_shape(spec, shape)
        layers[-1] = linear(shape[0], num_classes)
    elif name == "cnn_d":
        layers = [conv2d(c, 8, 3, stride=1), relu(), maxpool(2),
                  conv2d(8, 16, 3, stride=2), relu(),
                  conv2d(16, 32, 3, stride=2), relu(), flatten(), None, relu(), None]
        shape = input_shape
        for spec in layers[:8]:
            shape = nnet.output_shape(spec, shape)
        layers[8] = linear(shape[0], 64)
        layers[10] = linear(64, num_classes)
    else:
        raise ArgumentError(f"unknown architecture {name!r}")
    model = Model(layers, input_shape, num_classes, init_seed=seed)
    model.metadata["arch"] = name
    return model


def train_victims(dataset, archs, config: TrainConfig):
    """Train one victim per architecture; accuracy is recorded in metadata."""
    if not archs:
        raise ArgumentError("at least one architecture is required")
    victims = []
    for i, arch in enumerate(archs):
        seed_i = derive_seed(config.seed, "victim", i, arch)
        model = build_arch(arch, dataset.image_shape, dataset.num_classes, seed=seed_i)
        trained, acc = train(model, dataset, replace(config, seed=seed_i))
        trained.metadata.update({
            "name": f"victim-{i}-{arch}",
            "arch": arch,
            "train_accuracy": float(acc),
            "train_seed": seed_i,
            "dataset": dataset.name,
        })
        victims.append(trained)
    return victims
