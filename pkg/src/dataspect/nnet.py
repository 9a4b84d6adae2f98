"""Minimal differentiable network engine on numpy.

Supports the small layer family used throughout the toolkit (linear, conv2d,
relu, leaky_relu, maxpool, flatten), forward evaluation, gradients with
respect to inputs and weights, and deterministic seeded initialization.
Weights are stored in single precision; computations follow the dtype of the
weights, so a float64 copy of a model evaluates in double precision.

Layout conventions: images are NHWC, conv kernels are (kh, kw, in_ch, out_ch),
linear weights are (in_features, out_features).
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import LabelError, NumericError, ShapeError
from .rng import make_rng

LAYER_KINDS = ("linear", "conv2d", "relu", "leaky_relu", "maxpool", "flatten")


@dataclass
class LayerSpec:
    kind: str
    in_features: int = 0
    out_features: int = 0
    in_channels: int = 0
    out_channels: int = 0
    kernel: int = 0
    stride: int = 1
    slope: float = 0.1
    has_bias: bool = True

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ShapeError(f"unknown layer kind {self.kind!r}")
        if self.kind == "linear":
            if self.in_features <= 0 or self.out_features <= 0:
                raise ShapeError("linear layer needs positive in/out features")
        elif self.kind == "conv2d":
            if min(self.in_channels, self.out_channels, self.kernel, self.stride) <= 0:
                raise ShapeError("conv2d layer needs positive channels, kernel and stride")
        elif self.kind == "maxpool":
            if self.kernel <= 0 or self.stride <= 0:
                raise ShapeError("maxpool layer needs positive kernel and stride")
        elif self.kind == "leaky_relu":
            if not 0.0 < self.slope < 1.0:
                raise ShapeError("leaky_relu slope must lie in (0, 1)")

    @property
    def has_weights(self) -> bool:
        return self.kind in ("linear", "conv2d")


def linear(in_features: int, out_features: int, bias: bool = True) -> LayerSpec:
    return LayerSpec("linear", in_features=in_features, out_features=out_features, has_bias=bias)


def conv2d(in_channels: int, out_channels: int, kernel: int, stride: int = 1,
           bias: bool = True) -> LayerSpec:
    return LayerSpec("conv2d", in_channels=in_channels, out_channels=out_channels,
                     kernel=kernel, stride=stride, has_bias=bias)


def relu() -> LayerSpec:
    return LayerSpec("relu", has_bias=False)


def leaky_relu(slope: float = 0.1) -> LayerSpec:
    return LayerSpec("leaky_relu", slope=slope, has_bias=False)


def maxpool(kernel: int, stride: Optional[int] = None) -> LayerSpec:
    return LayerSpec("maxpool", kernel=kernel, stride=stride or kernel, has_bias=False)


def flatten() -> LayerSpec:
    return LayerSpec("flatten", has_bias=False)


def output_shape(spec: LayerSpec, shape: tuple) -> tuple:
    """Shape produced by one layer for a single (unbatched) input shape."""
    if spec.kind == "linear":
        if len(shape) != 1 or shape[0] != spec.in_features:
            raise ShapeError(f"linear expects ({spec.in_features},), got {shape}")
        return (spec.out_features,)
    if spec.kind in ("conv2d", "maxpool"):
        if len(shape) != 3:
            raise ShapeError(f"{spec.kind} expects (H, W, C), got {shape}")
        h, w, c = shape
        if spec.kind == "conv2d" and c != spec.in_channels:
            raise ShapeError(f"conv2d expects {spec.in_channels} channels, got {c}")
        if h < spec.kernel or w < spec.kernel:
            raise ShapeError(f"{spec.kind} kernel {spec.kernel} exceeds input {h}x{w}")
        oh = (h - spec.kernel) // spec.stride + 1
        ow = (w - spec.kernel) // spec.stride + 1
        oc = spec.out_channels if spec.kind == "conv2d" else c
        return (oh, ow, oc)
    if spec.kind == "flatten":
        return (int(np.prod(shape)),)
    return shape  # relu / leaky_relu


def init_layer_weights(spec: LayerSpec, rng: np.random.Generator) -> dict:
    """Uniform init in [-a, a] with a = sqrt(6 / (fan_in + fan_out))."""
    if spec.kind == "linear":
        a = np.sqrt(6.0 / (spec.in_features + spec.out_features))
        w = rng.uniform(-a, a, size=(spec.in_features, spec.out_features)).astype(np.float32)
        out = {"w": w}
        if spec.has_bias:
            out["b"] = np.zeros(spec.out_features, dtype=np.float32)
        return out
    if spec.kind == "conv2d":
        k = spec.kernel
        fan_in = k * k * spec.in_channels
        fan_out = k * k * spec.out_channels
        a = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-a, a, size=(k, k, spec.in_channels, spec.out_channels)).astype(np.float32)
        out = {"w": w}
        if spec.has_bias:
            out["b"] = np.zeros(spec.out_channels, dtype=np.float32)
        return out
    return {}


class Model:
    """An ordered layer graph with trainable weights.

    The final layer must produce ``num_classes`` values; for classifiers these
    are logits, for embedding networks they form the latent vector.
    """

    def __init__(self, layers, input_shape, num_classes, weights=None,
                 metadata=None, init_seed: int = 0):
        self.layers = list(layers)
        self.input_shape = tuple(int(d) for d in input_shape)
        self.num_classes = int(num_classes)
        self.metadata = dict(metadata or {})
        if weights is None:
            rng = make_rng(init_seed)
            weights = [init_layer_weights(spec, rng) for spec in self.layers]
        self.weights = weights
        self._validate()

    def _validate(self):
        if len(self.weights) != len(self.layers):
            raise ShapeError("one weight dict required per layer")
        shape = self.input_shape
        for i, spec in enumerate(self.layers):
            shape = output_shape(spec, shape)
            got = self.weights[i]
            if spec.has_weights:
                expect_w = ((spec.in_features, spec.out_features) if spec.kind == "linear"
                            else (spec.kernel, spec.kernel, spec.in_channels, spec.out_channels))
                if "w" not in got or got["w"].shape != expect_w:
                    raise ShapeError(f"layer {i} ({spec.kind}) weight shape mismatch")
                if spec.has_bias and "b" not in got:
                    raise ShapeError(f"layer {i} ({spec.kind}) missing bias")
                if not spec.has_bias and "b" in got:
                    raise ShapeError(f"layer {i} ({spec.kind}) declared bias-free")
        if shape != (self.num_classes,):
            raise ShapeError(f"model produces {shape}, expected ({self.num_classes},)")

    def copy(self) -> "Model":
        weights = [{k: v.copy() for k, v in w.items()} for w in self.weights]
        return Model(self.layers, self.input_shape, self.num_classes,
                     weights=weights, metadata=dict(self.metadata))

    def param_count(self) -> int:
        return int(sum(v.size for w in self.weights for v in w.values()))

    def astype(self, dtype) -> "Model":
        weights = [{k: v.astype(dtype) for k, v in w.items()} for w in self.weights]
        return Model(self.layers, self.input_shape, self.num_classes,
                     weights=weights, metadata=dict(self.metadata))


def _check_finite_weights(model: Model):
    for i, w in enumerate(model.weights):
        for name, arr in w.items():
            if not np.all(np.isfinite(arr)):
                raise NumericError(f"non-finite values in layer {i} tensor {name!r}")


def _as_batch(model: Model, x: np.ndarray):
    x = np.asarray(x)
    if x.shape == model.input_shape:
        return x[None], False
    if x.ndim == len(model.input_shape) + 1 and x.shape[1:] == model.input_shape:
        return x, True
    raise ShapeError(f"input shape {x.shape} incompatible with model input {model.input_shape}")


def _windows(x: np.ndarray, kernel: int, stride: int) -> np.ndarray:
    # (N, H, W, C) -> (N, OH, OW, C, k, k) view
    win = np.lib.stride_tricks.sliding_window_view(x, (kernel, kernel), axis=(1, 2))
    return win[:, ::stride, ::stride]


def _layer_forward(spec: LayerSpec, w: dict, x: np.ndarray):
    """Returns (output, ctx) where ctx carries what backward needs."""
    if spec.kind == "linear":
        y = x @ w["w"]
        if spec.has_bias:
            y = y + w["b"]
        return y, x
    if spec.kind == "conv2d":
        k, s = spec.kernel, spec.stride
        win = _windows(x, k, s)                          # (N,OH,OW,C,k,k)
        n, oh, ow = win.shape[:3]
        cols = win.transpose(0, 1, 2, 4, 5, 3).reshape(n * oh * ow, k * k * spec.in_channels)
        w2 = w["w"].reshape(k * k * spec.in_channels, spec.out_channels)
        y = cols @ w2
        if spec.has_bias:
            y = y + w["b"]
        return y.reshape(n, oh, ow, spec.out_channels), (x.shape, cols)
    if spec.kind == "relu":
        return np.maximum(x, 0), x
    if spec.kind == "leaky_relu":
        return np.where(x > 0, x, np.asarray(spec.slope, dtype=x.dtype) * x), x
    if spec.kind == "maxpool":
        k, s = spec.kernel, spec.stride
        win = _windows(x, k, s)                          # (N,OH,OW,C,k,k)
        n, oh, ow, c = win.shape[:4]
        flat = win.reshape(n, oh, ow, c, k * k)
        idx = flat.argmax(axis=-1)                       # first max wins on ties
        y = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]
        return y, (x.shape, idx)
    # flatten
    return x.reshape(x.shape[0], -1), x.shape


def _layer_backward(spec: LayerSpec, w: dict, ctx, dy: np.ndarray, want_param_grads: bool):
    """Returns (dx, param_grads or None)."""
    if spec.kind == "linear":
        x = ctx
        dx = dy @ w["w"].T
        if not want_param_grads:
            return dx, None
        grads = {"w": x.T @ dy}
        if spec.has_bias:
            grads["b"] = dy.sum(axis=0)
        return dx, grads
    if spec.kind == "conv2d":
        x_shape, cols = ctx
        k, s = spec.kernel, spec.stride
        n, oh, ow, oc = dy.shape
        dy2 = dy.reshape(n * oh * ow, oc)
        w2 = w["w"].reshape(k * k * spec.in_channels, oc)
        dcols = (dy2 @ w2.T).reshape(n, oh, ow, k, k, spec.in_channels)
        dx = np.zeros(x_shape, dtype=dy.dtype)
        for kh in range(k):
            for kw in range(k):
                dx[:, kh:kh + s * oh:s, kw:kw + s * ow:s, :] += dcols[:, :, :, kh, kw, :]
        if not want_param_grads:
            return dx, None
        grads = {"w": (cols.T @ dy2).reshape(w["w"].shape)}
        if spec.has_bias:
            grads["b"] = dy2.sum(axis=0)
        return dx, grads
    if spec.kind == "relu":
        x = ctx
        return dy * (x > 0), None
    if spec.kind == "leaky_relu":
        x = ctx
        return dy * np.where(x > 0, np.asarray(1.0, dtype=dy.dtype),
                             np.asarray(spec.slope, dtype=dy.dtype)), None
    if spec.kind == "maxpool":
        x_shape, idx = ctx
        k, s = spec.kernel, spec.stride
        n, oh, ow, c = dy.shape
        dx = np.zeros(x_shape, dtype=dy.dtype)
        for j in range(k * k):
            kh, kw = divmod(j, k)
            contrib = dy * (idx == j)
            dx[:, kh:kh + s * oh:s, kw:kw + s * ow:s, :] += contrib
        return dx, None
    # flatten
    return dy.reshape(ctx), None


def forward_with_caches(model: Model, xb: np.ndarray):
    """Batched forward pass keeping per-layer contexts for backward()."""
    _check_finite_weights(model)
    ctxs = []
    out = xb
    for spec, w in zip(model.layers, model.weights):
        out, ctx = _layer_forward(spec, w, out)
        ctxs.append(ctx)
    return out, ctxs


def backward(model: Model, ctxs, dout: np.ndarray, want_param_grads: bool = False):
    """Backpropagate an output-gradient seed; returns (dinput, per-layer grads)."""
    grads = [None] * len(model.layers)
    dy = dout
    for i in range(len(model.layers) - 1, -1, -1):
        dy, g = _layer_backward(model.layers[i], model.weights[i], ctxs[i], dy,
                                want_param_grads)
        grads[i] = g
    return dy, grads


def forward(model: Model, x: np.ndarray) -> np.ndarray:
    """Logits for one input or a batch; batch dimension is preserved."""
    xb, batched = _as_batch(model, x)
    out, _ = forward_with_caches(model, xb)
    return out if batched else out[0]


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> float:
    """Mean cross-entropy of a (N, C) logits batch against integer labels."""
    logits = np.atleast_2d(logits)
    labels = np.atleast_1d(labels)
    z = logits - logits.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1))
    return float(np.mean(lse - z[np.arange(len(labels)), labels]))


def sample_loss(model: Model, x: np.ndarray, label: int) -> float:
    """Cross-entropy of a single sample; the quantity fgsm ascends."""
    return cross_entropy(forward(model, x), np.array([label]))


def predict(model: Model, image: np.ndarray) -> int:
    """Argmax class of a single image; ties break to the lowest index."""
    logits = forward(model, image)
    if logits.ndim != 1:
        raise ShapeError("predict expects a single image, not a batch")
    return int(np.argmax(logits))


def predict_batch(model: Model, images: np.ndarray) -> np.ndarray:
    logits = forward(model, images)
    return np.argmax(logits, axis=-1)


def input_gradient(model: Model, x: np.ndarray, label: int) -> np.ndarray:
    """Gradient of the cross-entropy loss with respect to each input element."""
    if not 0 <= int(label) < model.num_classes:
        raise LabelError(f"label {label} outside [0, {model.num_classes})")
    x = np.asarray(x)
    if x.shape != model.input_shape:
        raise ShapeError(f"input shape {x.shape} != model input {model.input_shape}")
    logits, ctxs = forward_with_caches(model, x[None])
    dlogits = softmax(logits)
    dlogits[0, int(label)] -= 1.0
    dlogits = dlogits.astype(logits.dtype)
    dx, _ = backward(model, ctxs, dlogits, want_param_grads=False)
    return dx[0]
