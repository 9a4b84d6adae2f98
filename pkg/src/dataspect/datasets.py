"""Labeled image datasets: synthetic texture generation, IDX files, splits.

The synthetic generator produces small grayscale texture classes whose
frequency content differs strongly between families (oriented stripes vs.
isotropic blobs vs. checkerboards vs. rings), so that models trained on
different families leave distinguishable traces in the frequency domain.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, DataError, FormatError, ShapeError
from .rng import make_rng

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

TEXTURE_FAMILIES = ("gabor_stripes", "blobs", "checker", "ring")


@dataclass
class Dataset:
    name: str
    images: np.ndarray   # (N, H, W, C) float32 in [0, 1]
    labels: np.ndarray   # (N,) int64
    num_classes: int

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 4:
            raise ShapeError("images must be a (N, H, W, C) array")
        if len(self.images) != len(self.labels):
            raise DataError("images and labels must have the same length")
        if len(self.labels) and self.labels.min() < 0:
            raise DataError("labels must be nonnegative")
        if len(self.labels) and self.labels.max() >= self.num_classes:
            raise DataError("every label must be < num_classes")

    def __len__(self) -> int:
        return len(self.images)

    @property
    def image_shape(self) -> tuple:
        return tuple(self.images.shape[1:])

    def take(self, indices, name=None) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(name or self.name, self.images[idx], self.labels[idx],
                       self.num_classes)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)


@dataclass
class SynthSpec:
    num_classes: int
    samples_per_class: int
    image_size: tuple = (32, 32, 1)
    texture_family: str = "gabor_stripes"
    noise_std: float = 0.08
    seed: int = 0

    def __post_init__(self):
        if self.num_classes < 1 or self.samples_per_class < 1:
            raise ArgumentError("num_classes and samples_per_class must be >= 1")
        if len(self.image_size) != 3 or min(self.image_size) < 1:
            raise ArgumentError("image_size must be a positive (H, W, C)")
        if self.texture_family not in TEXTURE_FAMILIES:
            raise ArgumentError(f"unknown texture family {self.texture_family!r}")
        if self.noise_std < 0:
            raise ArgumentError("noise_std must be >= 0")


def _grid(h, w):
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    return yy, xx


def _stripes(c, num_classes, h, w, rng):
    # per-class orientation, slightly distinct spatial frequency
    theta = np.pi * c / num_classes
    cycles = 5.0 + (c % 3)
    phase = rng.uniform(-0.5, 0.5)
    amp = 0.35 + rng.uniform(-0.05, 0.05)
    yy, xx = _grid(h, w)
    u = (xx / w) * np.cos(theta) + (yy / h) * np.sin(theta)
    return 0.5 + amp * np.sin(2 * np.pi * cycles * u + phase)


def _blobs(c, num_classes, h, w, rng):
    n_blobs = 4 + c
    sigma = 1.6 + 0.8 * c
    yy, xx = _grid(h, w)
    img = np.full((h, w), 0.15)
    for _ in range(n_blobs):
        cy = rng.uniform(0, h)
        cx = rng.uniform(0, w)
        img += 0.75 * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * sigma ** 2))
    return img


def _checker(c, num_classes, h, w, rng):
    period = 4 + 2 * c
    oy = rng.integers(0, period)
    ox = rng.integers(0, period)
    yy, xx = _grid(h, w)
    parity = ((yy + oy) // period + (xx + ox) // period) % 2
    return 0.2 + 0.6 * parity


def _ring(c, num_classes, h, w, rng):
    wavelength = 4.0 + 2.0 * c
    cy = h / 2 + rng.uniform(-3, 3)
    cx = w / 2 + rng.uniform(-3, 3)
    yy, xx = _grid(h, w)
    r = np.sqrt((yy - cy) ** 2 + (xx - cx) ** 2)
    return 0.5 + 0.35 * np.cos(2 * np.pi * r / wavelength)


_TEXTURES = {"gabor_stripes": _stripes, "blobs": _blobs, "checker": _checker,
             "ring": _ring}


def synth_generate(spec: SynthSpec) -> Dataset:
    """Deterministic synthetic dataset with exact per-class sample counts."""
    h, w, c = spec.image_size
    rng = make_rng(spec.seed)
    texture = _TEXTURES[spec.texture_family]
    images = np.empty((spec.num_classes * spec.samples_per_class, h, w, c),
                      dtype=np.float32)
    labels = np.empty(len(images), dtype=np.int64)
    i = 0
    for cls in range(spec.num_classes):
        for _ in range(spec.samples_per_class):
            for ch in range(c):
                img = texture(cls, spec.num_classes, h, w, rng)
                if spec.noise_std > 0:
                    img = img + rng.normal(0.0, spec.noise_std, size=(h, w))
                images[i, :, :, ch] = np.clip(img, 0.0, 1.0)
            labels[i] = cls
            i += 1
    name = f"synth-{spec.texture_family}-c{spec.num_classes}-s{spec.seed}"
    return Dataset(name, images, labels, spec.num_classes)


def _read_u32be(raw: bytes, offset: int, what: str) -> int:
    if len(raw) < offset + 4:
        raise FormatError(f"truncated while reading {what}")
    return int.from_bytes(raw[offset:offset + 4], "big")


def load_idx(images_path, labels_path) -> Dataset:
    """Load an IDX image/label file pair; pixels are scaled into [0, 1]."""
    with open(images_path, "rb") as f:
        raw = f.read()
    magic = _read_u32be(raw, 0, "image magic")
    if magic != IDX_IMAGES_MAGIC:
        raise FormatError(f"bad image magic 0x{magic:08x}")
    count = _read_u32be(raw, 4, "image count")
    rows = _read_u32be(raw, 8, "image rows")
    cols = _read_u32be(raw, 12, "image cols")
    expected = 16 + count * rows * cols
    if len(raw) != expected:
        raise FormatError(f"image file has {len(raw)} bytes, expected {expected}")
    pixels = np.frombuffer(raw, dtype=np.uint8, offset=16)
    images = (pixels.astype(np.float32) / 255.0).reshape(count, rows, cols, 1)

    with open(labels_path, "rb") as f:
        raw = f.read()
    magic = _read_u32be(raw, 0, "label magic")
    if magic != IDX_LABELS_MAGIC:
        raise FormatError(f"bad label magic 0x{magic:08x}")
    lcount = _read_u32be(raw, 4, "label count")
    if lcount != count:
        raise FormatError(f"label count {lcount} != image count {count}")
    if len(raw) != 8 + lcount:
        raise FormatError(f"label file has {len(raw)} bytes, expected {8 + lcount}")
    labels = np.frombuffer(raw, dtype=np.uint8, offset=8).astype(np.int64)
    num_classes = int(labels.max()) + 1 if count else 0
    return Dataset(str(images_path), images, labels, num_classes)


def save_idx(dataset: Dataset, images_path, labels_path):
    """Write the dataset as a big-endian IDX pair (single-channel only)."""
    h, w, c = dataset.image_shape
    if c != 1:
        raise FormatError("IDX image files hold single-channel images only")
    if dataset.num_classes > 256:
        raise FormatError("IDX label files hold at most 256 classes")
    n = len(dataset)
    with open(images_path, "wb") as f:
        f.write(IDX_IMAGES_MAGIC.to_bytes(4, "big"))
        f.write(n.to_bytes(4, "big"))
        f.write(h.to_bytes(4, "big"))
        f.write(w.to_bytes(4, "big"))
        f.write(np.round(dataset.images[..., 0] * 255.0).astype(np.uint8).tobytes())
    with open(labels_path, "wb") as f:
        f.write(IDX_LABELS_MAGIC.to_bytes(4, "big"))
        f.write(n.to_bytes(4, "big"))
        f.write(dataset.labels.astype(np.uint8).tobytes())


def split(dataset: Dataset, counts, seed: int):
    """Seeded permutation split into three pairwise-disjoint parts."""
    n_train, n_val, n_test = (int(c) for c in counts)
    if min(n_train, n_val, n_test) < 0:
        raise DataError("split counts must be nonnegative")
    if n_train + n_val + n_test > len(dataset):
        raise DataError(f"split counts {counts} exceed dataset size {len(dataset)}")
    perm = make_rng(seed).permutation(len(dataset))
    a = perm[:n_train]
    b = perm[n_train:n_train + n_val]
    c = perm[n_train + n_val:n_train + n_val + n_test]
    return (dataset.take(a, f"{dataset.name}-train"),
            dataset.take(b, f"{dataset.name}-val"),
            dataset.take(c, f"{dataset.name}-test"))


def subsample(dataset: Dataset, fraction: float, seed: int) -> Dataset:
    """Class-balanced subsample keeping floor(fraction * per-class count) each."""
    if not 0 < fraction <= 1:
        raise DataError("fraction must lie in (0, 1]")
    rng = make_rng(seed)
    keep = []
    for cls in range(dataset.num_classes):
        idx = np.flatnonzero(dataset.labels == cls)
        k = int(np.floor(fraction * len(idx)))
        if k == 0:
            raise DataError(f"fraction {fraction} yields zero samples for class {cls}")
        keep.append(rng.choice(idx, size=k, replace=False))
    keep = np.sort(np.concatenate(keep))
    return dataset.take(keep, f"{dataset.name}-sub{fraction:g}")


def augment_merge(base: Dataset, extra: Dataset, seed: int = 0) -> Dataset:
    """Merge two datasets; extra classes are appended after the base classes."""
    if len(extra) == 0:
        return base.take(np.arange(len(base)))
    if base.image_shape != extra.image_shape:
        raise ShapeError(f"image shapes differ: {base.image_shape} vs {extra.image_shape}")
    images = np.concatenate([base.images, extra.images])
    labels = np.concatenate([base.labels, extra.labels + base.num_classes])
    perm = make_rng(seed).permutation(len(images))
    return Dataset(f"{base.name}+{extra.name}", images[perm], labels[perm],
                   base.num_classes + extra.num_classes)
