"""Single-step gradient-sign attack and success-filtered perturbation extraction."""

import logging
from dataclasses import dataclass

import numpy as np

from . import nnet
from .errors import ArgumentError, EmptyFingerprintError
from .nnet import Model

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Epsilon:
    value: float = 0.03

    def __post_init__(self):
        if not 0.0 < self.value < 1.0:
            raise ArgumentError(f"epsilon must lie in (0, 1), got {self.value}")


def _as_epsilon(eps) -> Epsilon:
    return eps if isinstance(eps, Epsilon) else Epsilon(float(eps))


@dataclass
class AdvResult:
    original: np.ndarray
    adversarial: np.ndarray
    perturbation: np.ndarray   # adversarial - original; may be negative
    original_label: int
    adversarial_label: int
    success: bool


def relabel(model: Model, image: np.ndarray) -> int:
    """Label a seed image with the model's own prediction.

    Used unconditionally so the pipeline never needs ground-truth labels,
    which also covers seed images from a different domain than the model.
    """
    return nnet.predict(model, image)


def fgsm(model: Model, image: np.ndarray, label: int, eps, norm: str = "sign") -> AdvResult:
    """One gradient step of size eps away from the given label, clamped to [0, 1].

    norm="sign" takes eps * sgn(grad) per pixel (the max-norm step); norm="l2"
    takes eps * grad / ||grad||_2 instead. A zero gradient leaves the image
    unchanged and reports success=False.
    """
    eps = _as_epsilon(eps)
    image = np.asarray(image, dtype=np.float32)
    if image.min() < 0.0 or image.max() > 1.0:
        raise ArgumentError("image pixels must lie in [0, 1]")
    g = nnet.input_gradient(model, image, label)
    if norm == "sign":
        step = np.float32(eps.value) * np.sign(g).astype(np.float32, copy=False)
    elif norm == "l2":
        g64 = g.astype(np.float64)
        length = np.sqrt(np.sum(g64 * g64))
        step = np.zeros_like(g) if length == 0 else (eps.value * g64 / length).astype(np.float32)
    else:
        raise ArgumentError(f"unknown step norm {norm!r}")
    adversarial = np.clip(image + step, 0.0, 1.0).astype(np.float32)
    perturbation = adversarial - image
    original_label = nnet.predict(model, image)
    adversarial_label = nnet.predict(model, adversarial)
    return AdvResult(original=image, adversarial=adversarial, perturbation=perturbation,
                     original_label=original_label, adversarial_label=adversarial_label,
                     success=adversarial_label != original_label)


def generate_perturbations(model: Model, seeds, eps, norm: str = "sign"):
    """Perturbations of the seeds where the attack flipped the prediction.

    Seeds are relabeled with the model's prediction first; outputs keep the
    input order of the successful seeds. Raises EmptyFingerprintError when no
    seed succeeds.
    """
    if len(seeds) == 0:
        raise ArgumentError("at least one seed image is required")
    kept = []
    for seed_img in seeds:
        label = relabel(model, seed_img)
        result = fgsm(model, seed_img, label, eps, norm=norm)
        if result.success:
            kept.append(result.perturbation)
    logger.info("kept %d/%d perturbations (success ratio %.3f)",
                len(kept), len(seeds), len(kept) / len(seeds))
    if not kept:
        raise EmptyFingerprintError(f"no successful perturbation over {len(seeds)} seeds")
    return kept
