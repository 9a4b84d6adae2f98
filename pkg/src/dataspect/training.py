"""Mini-batch SGD training with deterministic seeding."""

from dataclasses import dataclass

import numpy as np

from . import nnet
from .errors import ArgumentError, DataError, NumericError, ShapeError
from .rng import make_rng


@dataclass
class TrainConfig:
    learning_rate: float = 0.05
    epochs: int = 10
    batch_size: int = 32
    seed: int = 0
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ArgumentError("learning_rate must be >= 0")
        if self.epochs < 0:
            raise ArgumentError("epochs must be >= 0")
        if self.batch_size <= 0:
            raise ArgumentError("batch_size must be positive")
        if self.weight_decay < 0:
            raise ArgumentError("weight_decay must be >= 0")


def sgd_step(model, grads, learning_rate: float, weight_decay: float = 0.0,
             frozen_layers=()):
    """In-place SGD update; weight decay applies to weight matrices, not biases."""
    if learning_rate == 0.0:
        return
    lr = np.float32(learning_rate)
    wd = np.float32(weight_decay)
    for i, (w, g) in enumerate(zip(model.weights, grads)):
        if g is None or i in frozen_layers:
            continue
        gw = np.asarray(g["w"], dtype=np.float32)
        if wd != 0.0:
            w["w"] -= lr * (gw + wd * w["w"])
        else:
            w["w"] -= lr * gw
        if "b" in w and "b" in g:
            w["b"] -= lr * np.asarray(g["b"], dtype=np.float32)


def evaluate_accuracy(model, dataset, chunk: int = 256) -> float:
    """Fraction of dataset samples whose argmax prediction matches the label."""
    n = len(dataset)
    if n == 0:
        raise DataError("cannot evaluate accuracy on an empty dataset")
    hits = 0
    for start in range(0, n, chunk):
        xs = dataset.images[start:start + chunk]
        preds = nnet.predict_batch(model, xs)
        hits += int(np.sum(preds == dataset.labels[start:start + chunk]))
    return hits / n


def train(model, dataset, config: TrainConfig, frozen_layers=()):
    """Train a copy of the model; returns (trained model, training accuracy).

    Deterministic: the same (model, dataset, config) always yields bit-identical
    weights. The seed drives only the epoch shuffles, so a pretrained model can
    be fine-tuned without touching its initialization.
    """
    n = len(dataset)
    if n == 0:
        raise DataError("training dataset is empty")
    if dataset.num_classes != model.num_classes:
        raise ShapeError(f"dataset has {dataset.num_classes} classes, "
                         f"model expects {model.num_classes}")
    model = model.copy()
    rng = make_rng(config.seed)
    xs = dataset.images
    ys = dataset.labels
    for epoch in range(config.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = perm[start:start + config.batch_size]
            xb = xs[idx]
            yb = ys[idx]
            logits, ctxs = nnet.forward_with_caches(model, xb)
            loss = nnet.cross_entropy(logits, yb)
            if not np.isfinite(loss):
                raise NumericError(f"loss diverged at epoch {epoch}")
            d = nnet.softmax(logits)
            d[np.arange(len(yb)), yb] -= 1.0
            d = (d / len(yb)).astype(logits.dtype)
            _, grads = nnet.backward(model, ctxs, d, want_param_grads=True)
            sgd_step(model, grads, config.learning_rate, config.weight_decay,
                     frozen_layers)
    return model, evaluate_accuracy(model, dataset)
