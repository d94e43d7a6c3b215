import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gradcheck import numeric_grad
from scaffoldnet.data import AugmentPolicy, DatasetSplit, RawImage, Sample, make_batches
from scaffoldnet.errors import ConfigError, InputError, ShapeError
from scaffoldnet.layers import init_params, model_forward, softmax
from scaffoldnet.tensor_core import Pcg32, rng_from_seed
from scaffoldnet.training import (
    AdamState,
    TrainConfig,
    adam_step,
    cross_entropy,
    cross_entropy_grad,
    fit,
    one_hot,
    train_epoch,
)


def reference_adam(theta, grads, lr=0.001, b1=0.9, b2=0.999, eps=1e-8):
    """Scalar Adam written from the textbook recurrence, one float at a time."""
    m = v = 0.0
    out = []
    for t, g in enumerate(grads, 1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        theta = theta - lr * m_hat / (math.sqrt(v_hat) + eps)
        out.append(theta)
    return out


def _params64(seed=0):
    return init_params(rng_from_seed(seed), dtype=np.float64)


def _noise_split(n_train=9, n_val=3, n_test=3, size=12, seed=0):
    gen = np.random.default_rng(seed)

    def part(n):
        return [Sample(RawImage(gen.integers(0, 256, (size, size), dtype=np.uint8)), i % 3) for i in range(n)]

    return DatasetSplit(part(n_train), part(n_val), part(n_test), {"a": 0, "b": 1, "c": 2})


class TestCrossEntropy:
    def test_confident_correct(self):
        assert abs(cross_entropy([0.98, 0.01, 0.01], [1, 0, 0]) - 0.0202) < 1e-4

    def test_uniform(self):
        assert abs(cross_entropy([1 / 3] * 3, [0, 1, 0]) - math.log(3)) < 1e-12

    def test_zero_probability_is_finite(self):
        value = cross_entropy([0.0, 1.0, 0.0], [1, 0, 0])
        assert math.isfinite(value)
        assert abs(value - -math.log(1e-12)) < 1e-9

    def test_batch_is_mean(self):
        p = np.array([[0.98, 0.01, 0.01], [1 / 3, 1 / 3, 1 / 3]])
        y = np.eye(3)[[0, 1]]
        assert abs(cross_entropy(p, y) - (cross_entropy(p[0], y[0]) + cross_entropy(p[1], y[1])) / 2) < 1e-15

    def test_not_one_hot(self):
        with pytest.raises(InputError):
            cross_entropy([0.5, 0.5, 0.0], [0.5, 0.5, 0])

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            cross_entropy([0.5, 0.5], [1, 0, 0])

    @settings(max_examples=100, deadline=None)
    # logit spread under 20 keeps every probability above the 1e-12 floor
    @given(st.lists(st.floats(-10, 10), min_size=3, max_size=3), st.integers(0, 2))
    def test_fused_gradient_matches_finite_differences(self, z, label):
        z = np.array(z, dtype=np.float64)
        y = np.eye(3)[label]
        analytic = cross_entropy_grad(softmax(z), y)[0]
        numeric = numeric_grad(lambda: cross_entropy(softmax(z), y), z, h=1e-6)
        np.testing.assert_allclose(analytic, numeric, atol=1e-6)

    def test_one_hot(self):
        np.testing.assert_array_equal(one_hot([2, 0]), [[0, 0, 1], [1, 0, 0]])


class TestAdam:
    def test_first_step_is_minus_lr(self):
        params = _params64()
        before = params.dense2.bias.copy()
        grads = params.map(np.zeros_like)
        grads.dense2.bias[:] = [0.5, -2.0, 1e-3]
        adam_step(params, grads, AdamState.zeros_like(params), TrainConfig())
        np.testing.assert_allclose(params.dense2.bias - before, [-0.001, 0.001, -0.001], atol=1e-8)

    def test_matches_reference_over_many_steps(self):
        gen = np.random.default_rng(0)
        params = _params64()
        state = AdamState.zeros_like(params)
        start = params.copy()
        seq = [params.map(lambda p: gen.standard_normal(p.shape)) for _ in range(25)]
        for g in seq:
            adam_step(params, g, state, TrainConfig())
        assert state.t == 25
        for name, final in params.named_tensors().items():
            flat0 = start.named_tensors()[name].ravel()
            for j in gen.choice(flat0.size, size=min(5, flat0.size), replace=False):
                ref = reference_adam(flat0[j], [g.named_tensors()[name].ravel()[j] for g in seq])[-1]
                assert abs(final.ravel()[j] - ref) <= 1e-12

    def test_zero_lr_keeps_parameters(self):
        params = _params64()
        start = params.copy()
        grads = params.map(lambda p: np.ones_like(p))
        adam_step(params, grads, AdamState.zeros_like(params), TrainConfig(lr=0.0))
        for a, b in zip(params.named_tensors().values(), start.named_tensors().values()):
            np.testing.assert_array_equal(a, b)

    @pytest.mark.parametrize("kwargs", [{"lr": -1e-3}, {"beta1": 1.0}, {"batch_size": 0}, {"eps": 0.0}, {"lr": float("nan")}])
    def test_bad_config(self, kwargs):
        with pytest.raises(ConfigError):
            TrainConfig(**kwargs)


class TestTrainingLoop:
    def test_batch_count(self):
        assert len(make_batches(600, 32)) == 19
        assert [len(b) for b in make_batches(600, 32)][-1] == 24

    def test_epoch_runs_one_step_per_batch(self):
        split = _noise_split(n_train=10)
        params = _params64()
        state = AdamState.zeros_like(params)
        cfg = TrainConfig(batch_size=4, augment=AugmentPolicy.off())
        train_epoch(params, state, split.train, cfg, Pcg32.seeded(0))
        assert state.t == 3

    def test_batch_gradient_is_sum_over_chunks(self):
        from scaffoldnet.layers import model_backward

        split = _noise_split(n_train=8)
        x = np.stack([s.image for s in split.train]).astype(np.float64)
        y = one_hot([s.label for s in split.train])
        p = _params64(2)
        probs, cache = model_forward(x, p, "train", Pcg32.seeded(1))
        full = model_backward((probs - y) / 8, cache, p)
        total = p.map(np.zeros_like)
        for sl in (slice(0, 3), slice(3, 6), slice(6, 8)):
            # reuse the full-batch dropout masks for the chunk
            _, c = model_forward(x[sl], p, "train", Pcg32.seeded(1))
            c.mask1, c.mask2 = cache.mask1[sl], cache.mask2[sl]
            c.drop1 = cache.drop1[sl]
            c.h1 = cache.h1[sl]
            c.drop2 = cache.drop2[sl]
            g = model_backward((probs[sl] - y[sl]) / 8, c, p)
            for acc, gi in zip(total.named_tensors().values(), g.named_tensors().values()):
                acc += gi
        for a, b in zip(full.named_tensors().values(), total.named_tensors().values()):
            np.testing.assert_allclose(a, b, atol=1e-12)

    def test_empty_split(self):
        split = _noise_split()
        split.validation = []
        with pytest.raises(InputError):
            fit(split, TrainConfig(epochs=1))

    def test_fit_is_deterministic(self):
        split = _noise_split()
        cfg = TrainConfig(epochs=2, batch_size=4, seed=5)
        a = fit(split, cfg)
        b = fit(split, cfg)
        for ta, tb in zip(a.best.params.named_tensors().values(), b.best.params.named_tensors().values()):
            assert ta.tobytes() == tb.tobytes()
        assert [r.val.loss for r in a.history] == [r.val.loss for r in b.history]

    def test_fit_selects_lowest_validation_loss(self):
        split = _noise_split()
        result = fit(split, TrainConfig(epochs=4, batch_size=3, lr=0.01, seed=1))
        losses = [r.val.loss for r in result.history]
        assert len(losses) == 4
        assert result.best.epoch == int(np.argmin(losses)) + 1
        assert result.best.val_loss == min(losses)

    def test_selection_ties_keep_earlier_epoch(self):
        # lr = 0 freezes the model so every epoch has the same validation loss
        result = fit(_noise_split(), TrainConfig(epochs=3, lr=0.0, batch_size=4))
        assert len({r.val.loss for r in result.history}) == 1
        assert result.best.epoch == 1

    def test_snapshot_is_a_copy(self):
        split = _noise_split()
        result = fit(split, TrainConfig(epochs=2, batch_size=3, lr=0.01, seed=3))
        probs, _ = model_forward(np.stack([s.image for s in split.validation]), result.best.params)
        labels = np.array([s.label for s in split.validation])
        assert abs(cross_entropy(probs, one_hot(labels)) - result.best.val_loss) < 1e-5

    def test_single_sample_descent(self):
        split = _noise_split(n_train=1)
        params = _params64(4)
        state = AdamState.zeros_like(params)
        cfg = TrainConfig(batch_size=1, augment=AugmentPolicy.off())
        x = split.train[0].image[None].astype(np.float64)
        y = one_hot([split.train[0].label])
        initial = cross_entropy(model_forward(x, params)[0], y)
        for step in range(50):
            train_epoch(params, state, split.train, cfg, Pcg32.seeded(step))
        assert cross_entropy(model_forward(x, params)[0], y) < initial

    def test_cross_entropy_nonnegative(self):
        p = np.random.default_rng(0).dirichlet(np.ones(3), 50)
        assert cross_entropy(p, one_hot(np.arange(50) % 3)) >= 0
        assert cross_entropy(np.eye(3), np.eye(3)) == 0
