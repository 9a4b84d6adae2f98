"""Fingerprint spectra: 2-D DFT of perturbations, center shift, log scaling.

The transform is an exact DFT (y_k = sum_n x_n exp(-2i*pi*k*n/N), applied
separably over rows then columns) computed by a vectorized radix-2 FFT with a
Bluestein chirp fallback for non-power-of-two lengths. All transform math runs
in double precision; the final normalized spectrum image is single precision.
"""

import functools

import numpy as np

from . import nnet
from .adversarial import fgsm, relabel
from .errors import NumericError, ShapeError
from .nnet import LayerSpec, Model


@functools.lru_cache(maxsize=32)
def _radix2_tables(n: int):
    bits = n.bit_length() - 1
    rev = np.zeros(n, dtype=np.intp)
    for i in range(n):
        rev[i] = int(format(i, f"0{bits}b")[::-1], 2)
    twiddles = []
    size = 2
    while size <= n:
        half = size // 2
        twiddles.append(np.exp(-2j * np.pi * np.arange(half) / size))
        size *= 2
    return rev, tuple(twiddles)


def _fft_pow2(a: np.ndarray) -> np.ndarray:
    """Iterative Cooley-Tukey over the last axis; length must be a power of two."""
    n = a.shape[-1]
    if n == 1:
        return a.copy()
    rev, twiddles = _radix2_tables(n)
    lead = a.shape[:-1]
    a = a[..., rev]
    size = 2
    for tw in twiddles:
        half = size // 2
        a = a.reshape(*lead, n // size, size)
        even = a[..., :half]
        odd = a[..., half:] * tw
        a = np.concatenate([even + odd, even - odd], axis=-1)
        size *= 2
    return a.reshape(*lead, n)


def _ifft_pow2(a: np.ndarray) -> np.ndarray:
    return np.conj(_fft_pow2(np.conj(a))) / a.shape[-1]


def _fft_bluestein(a: np.ndarray) -> np.ndarray:
    """Chirp-z FFT of arbitrary length via a power-of-two circular convolution."""
    n = a.shape[-1]
    k = np.arange(n, dtype=np.float64)
    chirp = np.exp(-1j * np.pi * k * k / n)
    m = 1 << (2 * n - 1).bit_length()
    apad = np.zeros(a.shape[:-1] + (m,), dtype=np.complex128)
    apad[..., :n] = a * chirp
    bpad = np.zeros(m, dtype=np.complex128)
    bpad[:n] = np.conj(chirp)
    bpad[m - n + 1:] = np.conj(chirp)[1:][::-1]
    conv = _ifft_pow2(_fft_pow2(apad) * _fft_pow2(bpad))
    return conv[..., :n] * chirp


def _fft1(a: np.ndarray) -> np.ndarray:
    n = a.shape[-1]
    if n == 1:
        return a.copy()
    if n & (n - 1) == 0:
        return _fft_pow2(a)
    return _fft_bluestein(a)


def dft2(grid: np.ndarray) -> np.ndarray:
    """Exact unnormalized 2-D DFT of a real (H, W) grid; complex128 output."""
    grid = np.asarray(grid)
    if grid.ndim != 2 or grid.shape[0] < 1 or grid.shape[1] < 1:
        raise ShapeError(f"dft2 expects a 2-D grid, got shape {grid.shape}")
    if not np.all(np.isfinite(grid)):
        raise NumericError("dft2 input contains non-finite values")
    a = grid.astype(np.complex128)
    a = _fft1(a)            # rows
    a = _fft1(a.T).T        # columns
    return a


def center_shift(grid: np.ndarray) -> np.ndarray:
    """Quadrant swap moving index (0, 0) to (H//2, W//2)."""
    h, w = grid.shape
    return np.roll(grid, (h // 2, w // 2), axis=(0, 1))


def inverse_center_shift(grid: np.ndarray) -> np.ndarray:
    h, w = grid.shape
    return np.roll(grid, (-(h // 2), -(w // 2)), axis=(0, 1))


def _shift_log_normalize_mag(mag: np.ndarray) -> np.ndarray:
    v = np.log1p(center_shift(mag))
    lo = v.min()
    hi = v.max()
    if hi == lo:
        return np.zeros(mag.shape, dtype=np.float32)
    return ((v - lo) / (hi - lo)).astype(np.float32)


def shift_log_normalize(cg: np.ndarray) -> np.ndarray:
    """Spectrum image: centered, log(1 + |y|)-scaled, min-max normalized to [0, 1]."""
    cg = np.asarray(cg)
    if cg.ndim != 2:
        raise ShapeError(f"expected a 2-D complex grid, got shape {cg.shape}")
    return _shift_log_normalize_mag(np.abs(cg))


def upsample_nearest(image: np.ndarray, scale: int) -> np.ndarray:
    """Nearest-neighbor upsample of an (H, W, C) image by an integer factor."""
    if scale == 1:
        return image
    return np.repeat(np.repeat(image, scale, axis=0), scale, axis=1)


def pool_adapter(model: Model, scale: int) -> Model:
    """View of the model accepting inputs upsampled by ``scale``.

    A fixed average-pooling convolution is prepended, so the adapted model
    predicts identically to the original on nearest-upsampled images while
    exposing input gradients at the larger canvas resolution.
    """
    if scale == 1:
        return model
    h, w, c = model.input_shape
    spec = LayerSpec("conv2d", in_channels=c, out_channels=c, kernel=scale,
                     stride=scale, has_bias=False)
    kernel = np.zeros((scale, scale, c, c), dtype=np.float32)
    for ch in range(c):
        kernel[:, :, ch, ch] = 1.0 / (scale * scale)
    layers = [spec] + list(model.layers)
    weights = [{"w": kernel}] + model.weights
    return Model(layers, (h * scale, w * scale, c), model.num_classes,
                 weights=weights, metadata=dict(model.metadata))


def make_spectrum(model: Model, seed: np.ndarray, eps, canvas: int = 64,
                  norm: str = "sign"):
    """Fingerprint spectrum of one seed image, or None when the attack fails.

    The seed is upsampled (nearest-neighbor) to the square canvas, attacked
    through a pooling adapter, and the resulting perturbation is transformed:
    per-channel DFT, channel-averaged magnitude, center shift, log scaling and
    normalization.
    """
    seed = np.asarray(seed, dtype=np.float32)
    if seed.shape != model.input_shape:
        raise ShapeError(f"seed shape {seed.shape} != model input {model.input_shape}")
    h, w, c = model.input_shape
    if canvas is None or (h, w) == (canvas, canvas):
        scale = 1
    else:
        if canvas % h or canvas % w or canvas // h != canvas // w:
            raise ShapeError(f"canvas {canvas} is not an integer multiple of {h}x{w}")
        scale = canvas // h
    attacked = pool_adapter(model, scale)
    image = upsample_nearest(seed, scale)
    label = relabel(attacked, image)
    result = fgsm(attacked, image, label, eps, norm=norm)
    if not result.success:
        return None
    mags = [np.abs(dft2(result.perturbation[:, :, ch])) for ch in range(c)]
    return _shift_log_normalize_mag(np.mean(mags, axis=0))


def spectra_for_seeds(model: Model, seeds, eps, canvas: int = 64, norm: str = "sign"):
    """make_spectrum over many seeds, dropping unsuccessful ones."""
    out = []
    for seed in seeds:
        s = make_spectrum(model, seed, eps, canvas=canvas, norm=norm)
        if s is not None:
            out.append(s)
    return out
