"""Forward and backward math for the six-layer scaffold classifier.

Topology (valid padding, stride 1 everywhere)::

    conv 3x3x32 -> relu -> conv 3x3x32 -> relu -> conv 3x3x64 -> relu
    -> global average pool -> dropout(0.5) -> dense 32 -> relu
    -> dropout(0.5) -> dense 3 -> softmax

All layer functions work on batches in channels-last layout ``(N, H, W, C)``
and also accept a single unbatched ``(H, W, C)`` image. They keep the dtype
of their inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .errors import ConfigError, ShapeError
from .tensor_core import DTYPE, Pcg32

KERNEL = 3
DROPOUT_RATE = 0.5
NUM_CLASSES = 3
CLASS_NAMES = ("airbrushed", "electrospun", "steel_wire")
MIN_INPUT_SIZE = 3 * (KERNEL - 1) + 1


@dataclass
class ConvParams:
    kernels: np.ndarray  # (kh, kw, in_c, out_c)
    bias: np.ndarray  # (out_c,)


@dataclass
class DenseParams:
    weights: np.ndarray  # (in, out)
    bias: np.ndarray  # (out,)


@dataclass
class ModelParams:
    conv1: ConvParams
    conv2: ConvParams
    conv3: ConvParams
    dense1: DenseParams
    dense2: DenseParams

    def named_tensors(self):
        """Ordered ``{"conv1.kernels": array, ...}`` view of every parameter."""
        out = {}
        for layer in fields(self):
            p = getattr(self, layer.name)
            for f in fields(p):
                out[f"{layer.name}.{f.name}"] = getattr(p, f.name)
        return out

    @classmethod
    def from_named(cls, tensors):
        layers = {}
        for layer in fields(cls):
            kind = ConvParams if layer.name.startswith("conv") else DenseParams
            layers[layer.name] = kind(
                **{f.name: tensors[f"{layer.name}.{f.name}"] for f in fields(kind)}
            )
        return cls(**layers)

    def map(self, fn):
        return ModelParams.from_named({k: fn(v) for k, v in self.named_tensors().items()})

    def copy(self):
        return self.map(np.array)

    def astype(self, dtype):
        return self.map(lambda t: t.astype(dtype))


def _as_batch(x, rank):
    x = np.asarray(x)
    if x.ndim == rank - 1:
        return x[None], True
    if x.ndim != rank:
        raise ShapeError(f"expected rank {rank - 1} or {rank} input, got shape {x.shape}")
    return x, False


# ---------------------------------------------------------------------------
# Convolution
# ---------------------------------------------------------------------------

def im2col(x, kh=KERNEL, kw=KERNEL):
    """Gather every ``kh x kw`` window of ``x`` (N, H, W, C) into rows.

    Returns an array of shape ``(N, Ho, Wo, kh*kw*C)`` whose last axis is
    ordered (row offset, column offset, channel), matching a kernel tensor
    ``(kh, kw, C, out)`` reshaped to ``(kh*kw*C, out)``.
    """
    n, h, w, c = x.shape
    ho, wo = h - kh + 1, w - kw + 1
    return np.concatenate(
        [x[:, i:i + ho, j:j + wo, :] for i in range(kh) for j in range(kw)], axis=-1
    )


def col2im(cols, input_shape, kh=KERNEL, kw=KERNEL):
    """Adjoint of :func:`im2col`: scatter-add window rows back onto the input grid."""
    n, h, w, c = input_shape
    ho, wo = h - kh + 1, w - kw + 1
    out = np.zeros(input_shape, dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            k = (i * kw + j) * c
            out[:, i:i + ho, j:j + wo, :] += cols[..., k:k + c]
    return out


def _check_conv(x, kernels, bias):
    if kernels.ndim != 4:
        raise ShapeError(f"kernels must be (kh, kw, in_c, out_c), got {kernels.shape}")
    kh, kw, cin, cout = kernels.shape
    if x.shape[-1] != cin:
        raise ShapeError(f"input has {x.shape[-1]} channels, kernels expect {cin}")
    if x.shape[1] < kh or x.shape[2] < kw:
        raise ShapeError(f"input {x.shape[1:3]} smaller than kernel {(kh, kw)}")
    if bias.shape != (cout,):
        raise ShapeError(f"bias shape {bias.shape} does not match {cout} output channels")


def conv2d_forward(x, kernels, bias):
    """Valid, stride-1 cross-correlation plus per-channel bias, lowered to one GEMM."""
    x, single = _as_batch(x, 4)
    _check_conv(x, kernels, bias)
    kh, kw, cin, cout = kernels.shape
    cols = im2col(x, kh, kw)
    out = cols.reshape(-1, kh * kw * cin) @ kernels.reshape(-1, cout)
    out = out.reshape(cols.shape[:3] + (cout,))
    out += bias
    return out[0] if single else out


def conv2d_naive(x, kernels, bias):
    """Sliding-window loop version of :func:`conv2d_forward`, used as a reference."""
    x, single = _as_batch(x, 4)
    _check_conv(x, kernels, bias)
    kh, kw, cin, cout = kernels.shape
    n, h, w, _ = x.shape
    out = np.empty((n, h - kh + 1, w - kw + 1, cout), dtype=np.result_type(x, kernels))
    for b in range(n):
        for i in range(h - kh + 1):
            for j in range(w - kw + 1):
                window = x[b, i:i + kh, j:j + kw, :]
                for o in range(cout):
                    out[b, i, j, o] = np.sum(window * kernels[..., o]) + bias[o]
    return out[0] if single else out


def conv2d_backward(grad_out, x, kernels, need_input_grad=True):
    """Gradients of :func:`conv2d_forward` given the forward input ``x``.

    Returns ``(grad_input, grad_kernels, grad_bias)``; ``grad_input`` is None
    when ``need_input_grad`` is false (first layer).
    """
    x, single = _as_batch(x, 4)
    grad_out, _ = _as_batch(grad_out, 4)
    kh, kw, cin, cout = kernels.shape
    expected = (x.shape[0], x.shape[1] - kh + 1, x.shape[2] - kw + 1, cout)
    if grad_out.shape != expected:
        raise ShapeError(f"grad_out shape {grad_out.shape}, expected {expected}")
    g2d = grad_out.reshape(-1, cout)
    grad_bias = g2d.sum(axis=0)
    cols = im2col(x, kh, kw).reshape(-1, kh * kw * cin)
    grad_kernels = (cols.T @ g2d).reshape(kernels.shape)
    grad_input = None
    if need_input_grad:
        gcols = (g2d @ kernels.reshape(-1, cout).T).reshape(expected[:3] + (kh * kw * cin,))
        grad_input = col2im(gcols, x.shape, kh, kw)
        if single:
            grad_input = grad_input[0]
    return grad_input, grad_kernels, grad_bias


# ---------------------------------------------------------------------------
# Pointwise and pooling layers
# ---------------------------------------------------------------------------

def relu(x):
    return np.maximum(x, 0)


def relu_backward(grad_out, x):
    """Pass ``grad_out`` where the cached input is strictly positive."""
    return np.asarray(grad_out) * (np.asarray(x) > 0)


def global_avg_pool(x):
    """Mean over the spatial axes: (N, H, W, D) -> (N, D)."""
    x, single = _as_batch(x, 4)
    out = x.mean(axis=(1, 2), dtype=x.dtype)
    return out[0] if single else out


def global_avg_pool_backward(grad_out, input_shape):
    """Spread each channel's gradient uniformly over its H*W positions."""
    grad_out = np.asarray(grad_out)
    single = len(input_shape) == 3
    if single:
        input_shape = (1,) + tuple(input_shape)
        grad_out = grad_out[None]
    n, h, w, d = input_shape
    if grad_out.shape != (n, d):
        raise ShapeError(f"grad_out shape {grad_out.shape}, expected {(n, d)}")
    g = np.broadcast_to((grad_out / (h * w))[:, None, None, :], input_shape).copy()
    return g[0] if single else g


def dense_forward(x, weights, bias):
    """Affine map ``x @ W + b`` for (in,) or (N, in) inputs."""
    x = np.asarray(x)
    if weights.ndim != 2 or x.shape[-1] != weights.shape[0]:
        raise ShapeError(f"input {x.shape} incompatible with weights {weights.shape}")
    if bias.shape != (weights.shape[1],):
        raise ShapeError(f"bias {bias.shape} incompatible with weights {weights.shape}")
    return x @ weights + bias


def dense_backward(grad_out, x, weights):
    """Return ``(grad_input, grad_weights, grad_bias)``."""
    x2 = np.atleast_2d(x)
    g2 = np.atleast_2d(grad_out)
    if g2.shape != (x2.shape[0], weights.shape[1]):
        raise ShapeError(f"grad_out {np.shape(grad_out)} incompatible with weights {weights.shape}")
    grad_input = g2 @ weights.T
    if np.ndim(x) == 1:
        grad_input = grad_input[0]
    return grad_input, x2.T @ g2, g2.sum(axis=0)


def dropout(x, rate=DROPOUT_RATE, mode="infer", rng: Pcg32 | None = None):
    """Inverted dropout.

    In ``"train"`` mode each entry survives with probability ``1 - rate`` and
    is scaled by ``1 / (1 - rate)``; the returned mask holds those per-entry
    multipliers. ``"infer"`` mode is the identity and returns no mask.
    """
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    if mode not in ("train", "infer"):
        raise ConfigError(f"mode must be 'train' or 'infer', got {mode!r}")
    x = np.asarray(x)
    if mode == "infer":
        return x, None
    if rate == 0.0:
        return x, np.ones_like(x)
    if rng is None:
        raise ConfigError("train-mode dropout needs an rng")
    keep = rng.uniform_array(x.shape) >= rate
    mask = (keep / (1.0 - rate)).astype(x.dtype)
    return x * mask, mask


def softmax(z):
    """Softmax over the last axis, with max subtraction for stability."""
    z = np.asarray(z)
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


# ---------------------------------------------------------------------------
# Initialisation and the assembled model
# ---------------------------------------------------------------------------

def glorot_limit(fan_in, fan_out):
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def glorot_init(shape, fan_in, fan_out, rng: Pcg32, dtype=DTYPE):
    """Glorot-uniform samples on [-L, L] with L = sqrt(6 / (fan_in + fan_out))."""
    if fan_in < 1 or fan_out < 1:
        raise ConfigError(f"fans must be >= 1, got {fan_in}, {fan_out}")
    limit = glorot_limit(fan_in, fan_out)
    u = rng.uniform_array(shape)
    return (limit * (2.0 * u - 1.0)).astype(dtype)


def _conv_init(cin, cout, rng, dtype):
    fan_in = KERNEL * KERNEL * cin
    fan_out = KERNEL * KERNEL * cout
    return ConvParams(
        glorot_init((KERNEL, KERNEL, cin, cout), fan_in, fan_out, rng, dtype),
        np.zeros(cout, dtype=dtype),
    )


def _dense_init(n_in, n_out, rng, dtype):
    return DenseParams(
        glorot_init((n_in, n_out), n_in, n_out, rng, dtype),
        np.zeros(n_out, dtype=dtype),
    )


def init_params(rng: Pcg32, dtype=DTYPE):
    """Fresh parameters for the fixed topology: Glorot weights, zero biases."""
    return ModelParams(
        conv1=_conv_init(1, 32, rng, dtype),
        conv2=_conv_init(32, 32, rng, dtype),
        conv3=_conv_init(32, 64, rng, dtype),
        dense1=_dense_init(64, 32, rng, dtype),
        dense2=_dense_init(32, NUM_CLASSES, rng, dtype),
    )


@dataclass
class ForwardCache:
    """Activations saved by a training-mode forward pass."""

    x: np.ndarray
    r1: np.ndarray
    r2: np.ndarray
    r3: np.ndarray
    drop1: np.ndarray
    mask1: np.ndarray
    h1: np.ndarray
    drop2: np.ndarray
    mask2: np.ndarray
    logits: np.ndarray


def model_forward(img, params: ModelParams, mode="infer", rng: Pcg32 | None = None):
    """Run the network on one image (H, W, 1) or a batch (N, H, W, 1).

    Returns ``(probs, cache)``. ``cache`` is None in ``"infer"`` mode; in
    ``"train"`` mode dropout is active and ``rng`` must be given.
    """
    x, single = _as_batch(img, 4)
    if x.shape[-1] != 1 or x.shape[1] < MIN_INPUT_SIZE or x.shape[2] < MIN_INPUT_SIZE:
        raise ShapeError(
            f"expected a single-channel image of at least {MIN_INPUT_SIZE}x{MIN_INPUT_SIZE}, "
            f"got {np.shape(img)}"
        )
    x = x.astype(params.conv1.kernels.dtype, copy=False)
    r1 = relu(conv2d_forward(x, params.conv1.kernels, params.conv1.bias))
    r2 = relu(conv2d_forward(r1, params.conv2.kernels, params.conv2.bias))
    r3 = relu(conv2d_forward(r2, params.conv3.kernels, params.conv3.bias))
    pooled = global_avg_pool(r3)
    drop1, mask1 = dropout(pooled, DROPOUT_RATE, mode, rng)
    h1 = relu(dense_forward(drop1, params.dense1.weights, params.dense1.bias))
    drop2, mask2 = dropout(h1, DROPOUT_RATE, mode, rng)
    logits = dense_forward(drop2, params.dense2.weights, params.dense2.bias)
    probs = softmax(logits)
    cache = None
    if mode == "train":
        cache = ForwardCache(x, r1, r2, r3, drop1, mask1, h1, drop2, mask2, logits)
    return (probs[0] if single else probs), cache


def model_backward(grad_logits, cache: ForwardCache, params: ModelParams):
    """Backpropagate ``dL/dlogits`` (N, 3) through the cached forward pass.

    Returns the parameter gradients as a :class:`ModelParams`.
    """
    g = np.atleast_2d(grad_logits).astype(cache.logits.dtype, copy=False)
    if g.shape != cache.logits.shape:
        raise ShapeError(f"grad_logits {g.shape} does not match logits {cache.logits.shape}")
    g, gw5, gb5 = dense_backward(g, cache.drop2, params.dense2.weights)
    g = relu_backward(g * cache.mask2, cache.h1)
    g, gw4, gb4 = dense_backward(g, cache.drop1, params.dense1.weights)
    g = global_avg_pool_backward(g * cache.mask1, cache.r3.shape)
    g = relu_backward(g, cache.r3)
    g, gk3, gb3 = conv2d_backward(g, cache.r2, params.conv3.kernels)
    g = relu_backward(g, cache.r2)
    g, gk2, gb2 = conv2d_backward(g, cache.r1, params.conv2.kernels)
    g = relu_backward(g, cache.r1)
    _, gk1, gb1 = conv2d_backward(g, cache.x, params.conv1.kernels, need_input_grad=False)
    return ModelParams(
        ConvParams(gk1, gb1),
        ConvParams(gk2, gb2),
        ConvParams(gk3, gb3),
        DenseParams(gw4, gb4),
        DenseParams(gw5, gb5),
    )
