"""Cross-entropy loss, Adam, and the epoch loop with best-validation selection."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import layers
from .data import AugmentPolicy, assemble_batch, augment, make_batches, standardize
from .errors import ConfigError, InputError, ShapeError
from .layers import ModelParams, init_params, model_backward, model_forward
from .tensor_core import Pcg32, rng_from_seed

PROB_FLOOR = 1e-12

# Sub-stream tags derived from the root seed.
_TAG_INIT = 1
_TAG_EPOCH = 1000
_TAG_SHUFFLE, _TAG_AUGMENT, _TAG_DROPOUT = 0, 1, 2


@dataclass
class TrainConfig:
    epochs: int = 11
    batch_size: int = 32
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    augment: AugmentPolicy = field(default_factory=AugmentPolicy)
    # samples per forward/backward call inside a batch; bounds peak memory only
    chunk_size: int = 8

    def __post_init__(self):
        # lr == 0 is allowed: it freezes the parameters
        if not self.lr >= 0:
            raise ConfigError(f"learning rate must be >= 0, got {self.lr}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("betas must lie in [0, 1)")
        if self.batch_size < 1 or self.epochs < 1 or self.chunk_size < 1:
            raise ConfigError("epochs, batch_size and chunk_size must be >= 1")
        if self.eps <= 0:
            raise ConfigError("eps must be > 0")


def one_hot(labels, num_classes=layers.NUM_CLASSES, dtype=np.float64):
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.size, num_classes), dtype=dtype)
    out[np.arange(labels.size), labels.ravel()] = 1
    return out


def _check_onehot(onehot):
    ok = np.all((onehot == 0) | (onehot == 1), axis=-1) & (onehot.sum(axis=-1) == 1)
    if not np.all(ok):
        raise InputError("targets must be one-hot rows")


def cross_entropy(probs, onehot):
    """Mean over samples of ``-sum_c y_c * ln(p_c)``; works on (K,) or (N, K)."""
    probs = np.asarray(probs, dtype=np.float64)
    onehot = np.asarray(onehot, dtype=np.float64)
    if probs.shape != onehot.shape:
        raise ShapeError(f"probs {probs.shape} and targets {onehot.shape} differ")
    _check_onehot(onehot)
    per_sample = -np.sum(onehot * np.log(np.maximum(probs, PROB_FLOOR)), axis=-1)
    return float(np.mean(per_sample))


def cross_entropy_grad(probs, onehot):
    """Gradient of the batch-mean loss with respect to the logits: (p - y) / N."""
    probs = np.atleast_2d(probs)
    return (probs - np.asarray(onehot, dtype=probs.dtype).reshape(probs.shape)) / probs.shape[0]


@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0

    @classmethod
    def zeros_like(cls, params: ModelParams):
        named = params.named_tensors()
        return cls(
            {k: np.zeros_like(p) for k, p in named.items()},
            {k: np.zeros_like(p) for k, p in named.items()},
        )


def adam_step(params: ModelParams, grads: ModelParams, state: AdamState, cfg: TrainConfig):
    """One bias-corrected Adam update, applied in place; returns ``(params, state)``."""
    state.t += 1
    t = state.t
    b1, b2 = cfg.beta1, cfg.beta2
    correction1 = 1 - b1 ** t
    correction2 = 1 - b2 ** t
    gnamed = grads.named_tensors()
    for name, theta in params.named_tensors().items():
        g = gnamed[name]
        if g.shape != theta.shape or state.m[name].shape != theta.shape:
            raise ShapeError(f"{name}: gradient {g.shape} vs parameter {theta.shape}")
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * np.square(g)
        m_hat = m / correction1
        v_hat = v / correction2
        theta -= (cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps)).astype(theta.dtype, copy=False)
    return params, state


@dataclass
class EpochMetrics:
    loss: float
    accuracy: float
    mae: float


@dataclass
class EpochRecord:
    epoch: int
    train: EpochMetrics
    val: EpochMetrics


@dataclass
class Checkpoint:
    params: ModelParams
    epoch: int = 0
    val_loss: float = float("nan")
    val_accuracy: float = float("nan")
    val_mae: float = float("nan")
    seed: int = 0


@dataclass
class FitResult:
    best: Checkpoint
    history: list


def _metrics(probs, labels):
    onehot = one_hot(labels)
    return EpochMetrics(
        loss=cross_entropy(probs, onehot),
        accuracy=float(np.mean(np.argmax(probs, axis=1) == labels)),
        mae=float(np.mean(np.abs(probs - onehot))),
    )


def train_batch(params, state, x, labels, cfg: TrainConfig, rng: Pcg32):
    """Forward/backward on one mini-batch, then one Adam step. Returns the train-mode probs."""
    n = len(labels)
    targets = one_hot(labels, dtype=params.conv1.kernels.dtype)
    total = None
    probs_out = []
    for c, start in enumerate(range(0, n, cfg.chunk_size)):
        sl = slice(start, start + cfg.chunk_size)
        probs, cache = model_forward(x[sl], params, "train", rng.derive(c))
        grad_logits = (probs - targets[sl]) / n
        grads = model_backward(grad_logits, cache, params)
        if total is None:
            total = grads
        else:
            for acc, g in zip(total.named_tensors().values(), grads.named_tensors().values()):
                acc += g
        probs_out.append(probs)
    adam_step(params, total, state, cfg)
    return np.concatenate(probs_out)


def _training_image(sample, policy, rng):
    if policy.is_identity:
        return sample.image
    return standardize(augment(sample.raw, policy, rng))


def train_epoch(params, state, samples, cfg: TrainConfig, rng: Pcg32):
    """One pass over ``samples`` in shuffled mini-batches with fresh augmentation.

    Sample ``i`` is augmented with ``rng.derive(1).derive(i)``, so the result does
    not depend on processing order. Metrics are computed from the train-mode
    (augmented, dropout-on) outputs.
    """
    if not samples:
        raise InputError("training split is empty")
    aug_rng = rng.derive(_TAG_AUGMENT)
    drop_rng = rng.derive(_TAG_DROPOUT)
    all_probs, all_labels = [], []
    for b, idx in enumerate(make_batches(len(samples), cfg.batch_size, rng.derive(_TAG_SHUFFLE))):
        x = np.stack([_training_image(samples[i], cfg.augment, aug_rng.derive(int(i))) for i in idx])
        labels = np.array([samples[i].label for i in idx])
        all_probs.append(train_batch(params, state, x, labels, cfg, drop_rng.derive(b)))
        all_labels.append(labels)
    return _metrics(np.concatenate(all_probs).astype(np.float64), np.concatenate(all_labels))


def predict_probs(params, samples, chunk_size=16):
    """Inference-mode class probabilities, shape (N, 3)."""
    out = []
    for idx in make_batches(len(samples), chunk_size):
        x, _ = assemble_batch(samples, idx)
        probs, _ = model_forward(x, params, "infer")
        out.append(probs)
    return np.concatenate(out).astype(np.float64)


def evaluate(params, samples, chunk_size=16):
    """Loss, accuracy and MAE on un-augmented samples with dropout off."""
    probs = predict_probs(params, samples, chunk_size)
    return _metrics(probs, np.array([s.label for s in samples]))


def fit(split, cfg: TrainConfig, on_epoch=None, params=None):
    """Train for ``cfg.epochs`` epochs and keep the lowest-validation-loss snapshot.

    Ties keep the earlier epoch. ``on_epoch(record)`` is called after every epoch.
    """
    for name, part in split.parts().items():
        if not part:
            raise InputError(f"{name} split is empty")
    root = rng_from_seed(cfg.seed)
    if params is None:
        params = init_params(root.derive(_TAG_INIT))
    state = AdamState.zeros_like(params)
    history = []
    best = None
    for epoch in range(1, cfg.epochs + 1):
        train_m = train_epoch(params, state, split.train, cfg, root.derive(_TAG_EPOCH + epoch))
        val_m = evaluate(params, split.validation, cfg.chunk_size)
        record = EpochRecord(epoch, train_m, val_m)
        history.append(record)
        if on_epoch is not None:
            on_epoch(record)
        if best is None or val_m.loss < best.val_loss or math.isnan(best.val_loss):
            best = Checkpoint(params.copy(), epoch, val_m.loss, val_m.accuracy, val_m.mae, cfg.seed)
    return FitResult(best, history)
