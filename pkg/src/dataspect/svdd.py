"""One-class meta-classifier over fingerprint spectra.

A bias-free convolutional encoder is trained to pull embeddings of in-class
spectra toward a fixed hypersphere center; the squared distance to the center
is the anomaly score. Bias-free layers plus center snapping guard against the
trivial collapse solution. The decision threshold is the score at the
quantile index of the descending-sorted validation scores, so roughly
(1 - q) of validation samples score at or below it.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import nnet
from .datasets import split
from .errors import ArgumentError, BuildError, DataError, NumericError
from .nnet import Model, conv2d, flatten, leaky_relu, linear
from .rng import derive_seed, make_rng
from .spectrum import make_spectrum
from .training import sgd_step

logger = logging.getLogger(__name__)

CENTER_SNAP = 0.01


@dataclass
class SvddConfig:
    latent_dim: int = 32
    learning_rate: float = 1e-3
    epochs: int = 20
    batch_size: int = 64
    weight_decay: float = 1e-4
    seed: int = 0
    quantile: float = 0.04

    def __post_init__(self):
        if self.latent_dim <= 0 or self.epochs < 0 or self.batch_size <= 0:
            raise ArgumentError("latent_dim and batch_size must be positive, epochs >= 0")
        if self.learning_rate < 0 or self.weight_decay < 0:
            raise ArgumentError("learning_rate and weight_decay must be >= 0")
        if not 0.0 < self.quantile < 0.5:
            raise ArgumentError("quantile must lie in (0, 0.5)")


class MetaClassifier:
    """Bias-free encoder + hypersphere center + optional decision threshold."""

    def __init__(self, encoder: Model, center: np.ndarray,
                 threshold: Optional[float] = None, history: Optional[dict] = None):
        for i, spec in enumerate(encoder.layers):
            if spec.has_weights and spec.has_bias:
                raise ArgumentError(f"encoder layer {i} has a bias; the meta "
                                    "encoder must be bias-free")
        center = np.asarray(center, dtype=np.float32)
        if center.shape != (encoder.num_classes,):
            raise ArgumentError("center length must equal the encoder output dim")
        if not np.all(np.isfinite(center)):
            raise NumericError("center must be finite")
        self.encoder = encoder
        self.center = center
        self.threshold = None if threshold is None else float(threshold)
        self.history = dict(history or {})

    @property
    def latent_dim(self) -> int:
        return self.encoder.num_classes

    @property
    def calibrated(self) -> bool:
        return self.threshold is not None


def build_encoder(input_hw, latent_dim: int, seed: int = 0) -> Model:
    """Two bias-free strided convolutions with leaky activations, then a
    bias-free linear projection to the latent space."""
    h, w = input_hw
    layers = [conv2d(1, 8, 3, stride=2, bias=False), leaky_relu(0.1),
              conv2d(8, 16, 3, stride=2, bias=False), leaky_relu(0.1),
              flatten(), None]
    shape = (h, w, 1)
    for spec in layers[:-1]:
        shape = nnet.output_shape(spec, shape)
    layers[-1] = linear(shape[0], latent_dim, bias=False)
    return Model(layers, (h, w, 1), latent_dim, init_seed=seed)


def _as_encoder_batch(spectra) -> np.ndarray:
    batch = np.asarray(spectra, dtype=np.float32)
    if batch.ndim == 2:
        batch = batch[None]
    return batch[..., None]   # (N, H, W) -> (N, H, W, 1)


def embed(encoder: Model, spectra) -> np.ndarray:
    """Latent vectors for a list/array of (H, W) spectra; shape (N, d)."""
    return nnet.forward(encoder, _as_encoder_batch(spectra))


def init_center(encoder: Model, spectra) -> np.ndarray:
    """Mean embedding with small coordinates snapped away from zero."""
    if len(spectra) == 0:
        raise DataError("cannot initialize a center from zero spectra")
    total = np.zeros(encoder.num_classes, dtype=np.float64)
    count = 0
    for start in range(0, len(spectra), 256):
        z = embed(encoder, spectra[start:start + 256]).astype(np.float64)
        total += z.sum(axis=0)
        count += len(z)
    center = (total / count).astype(np.float32)
    small = np.abs(center) < CENTER_SNAP
    center[small & (center >= 0)] = CENTER_SNAP
    center[small & (center < 0)] = -CENTER_SNAP
    return center


def score(meta: MetaClassifier, spectrum: np.ndarray) -> float:
    """Squared distance of the embedding from the center; 0 means dead-center."""
    z = embed(meta.encoder, np.asarray(spectrum)[None])[0].astype(np.float64)
    diff = z - meta.center.astype(np.float64)
    return float(np.dot(diff, diff))


def score_many(meta: MetaClassifier, spectra) -> np.ndarray:
    out = np.empty(len(spectra), dtype=np.float64)
    c = meta.center.astype(np.float64)
    for start in range(0, len(spectra), 256):
        z = embed(meta.encoder, spectra[start:start + 256]).astype(np.float64)
        d = z - c
        out[start:start + len(z)] = np.sum(d * d, axis=1)
    return out


def _mean_score(encoder: Model, center: np.ndarray, spectra) -> float:
    meta = MetaClassifier(encoder, center)
    return float(np.mean(score_many(meta, spectra)))


def train_svdd(spectra, config: SvddConfig) -> MetaClassifier:
    """Train the one-class encoder on in-class spectra (uncalibrated result).

    Minimizes mean squared distance to the fixed center plus an L2 weight
    penalty, by plain SGD. The returned classifier records the mean training
    score before and after training in its history.
    """
    if len(spectra) < config.batch_size:
        raise DataError(f"need at least batch_size={config.batch_size} spectra, "
                        f"got {len(spectra)}")
    spectra = np.asarray(spectra, dtype=np.float32)
    h, w = spectra.shape[1:]
    encoder = build_encoder((h, w), config.latent_dim,
                            seed=derive_seed(config.seed, "svdd-encoder"))
    center = init_center(encoder, spectra)
    mean_start = _mean_score(encoder, center, spectra)
    rng = make_rng(derive_seed(config.seed, "svdd-shuffle"))
    xs = _as_encoder_batch(spectra)
    n = len(xs)
    center32 = center.astype(np.float32)
    for epoch in range(config.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = perm[start:start + config.batch_size]
            z, ctxs = nnet.forward_with_caches(encoder, xs[idx])
            diff = z - center32
            loss = float(np.mean(np.sum(diff.astype(np.float64) ** 2, axis=1)))
            if not np.isfinite(loss):
                raise NumericError(f"svdd loss diverged at epoch {epoch}")
            dz = (2.0 / len(idx)) * diff
            _, grads = nnet.backward(encoder, ctxs, dz.astype(z.dtype),
                                     want_param_grads=True)
            sgd_step(encoder, grads, config.learning_rate, config.weight_decay)
    mean_end = _mean_score(encoder, center, spectra)
    history = {"mean_score_start": mean_start, "mean_score_end": mean_end,
               "num_train_spectra": int(n)}
    logger.info("svdd mean score %.6f -> %.6f over %d spectra",
                mean_start, mean_end, n)
    return MetaClassifier(encoder, center, history=history)


def threshold_from_scores(scores, q: float) -> float:
    """Score at index floor(q * m) of the descending-sorted scores."""
    scores = np.asarray(scores, dtype=np.float64)
    m = len(scores)
    if m < math.ceil(1.0 / q):
        raise DataError(f"need at least ceil(1/q)={math.ceil(1.0 / q)} scores, got {m}")
    ordered = np.sort(scores)[::-1]
    return float(ordered[int(math.floor(q * m))])


def calibrate_threshold(meta: MetaClassifier, val_spectra, q: float = 0.04) -> float:
    """Set the decision threshold from validation spectra; returns tau."""
    if not 0.0 < q < 0.5:
        raise ArgumentError("quantile must lie in (0, 0.5)")
    tau = threshold_from_scores(score_many(meta, val_spectra), q)
    meta.threshold = tau
    return tau


def build_meta(subset, victims, config: SvddConfig, split_counts=None,
               eps=0.03, canvas: int = 64):
    """Full meta-classifier build: split, fingerprint all victims, train, calibrate.

    Returns (calibrated MetaClassifier, reserved test split of the subset).
    Training and validation spectra are the concatenation over victim models of
    the successful fingerprints of the respective split.
    """
    if not victims:
        raise ArgumentError("at least one victim model is required")
    if split_counts is None:
        n_val = max(int(round(len(subset) * 288 / 2176)), math.ceil(1.0 / config.quantile))
        split_counts = (len(subset) - 2 * n_val, n_val, n_val)
    d_train, d_val, d_test = split(subset, split_counts,
                                   derive_seed(config.seed, "meta-split"))
    adv_train, adv_val = [], []
    for k, victim in enumerate(victims):
        name = victim.metadata.get("name", f"victim-{k}")
        train_k = [s for img in d_train.images
                   if (s := make_spectrum(victim, img, eps, canvas=canvas)) is not None]
        val_k = [s for img in d_val.images
                 if (s := make_spectrum(victim, img, eps, canvas=canvas)) is not None]
        if not train_k or not val_k:
            raise BuildError(f"victim {name} produced no spectra")
        logger.info("victim %s: %d train / %d val spectra", name, len(train_k), len(val_k))
        adv_train.extend(train_k)
        adv_val.extend(val_k)
    meta = train_svdd(adv_train, config)
    calibrate_threshold(meta, adv_val, config.quantile)
    meta.history["num_val_spectra"] = len(adv_val)
    return meta, d_test
