"""
Checking backpropagation with finite differences
================================================

The full network runs on a 12x12 input here. Dropout masks are pinned
by copying the generator before each forward pass, so the loss is a
smooth function of the weights and central differences apply.
"""

import numpy as np

from scaffoldnet.layers import init_params, model_backward, model_forward
from scaffoldnet.tensor_core import Pcg32, rng_from_seed
from scaffoldnet.training import cross_entropy, cross_entropy_grad, one_hot

params = init_params(rng_from_seed(0), dtype=np.float64)
x = np.random.default_rng(0).standard_normal((2, 12, 12, 1))
y = one_hot([0, 2])
drop = Pcg32.seeded(5)


def loss():
    probs, _ = model_forward(x, params, "train", drop.copy())
    return cross_entropy(probs, y)


probs, cache = model_forward(x, params, "train", drop.copy())
grads = model_backward(cross_entropy_grad(probs, y), cache, params)

h = 1e-5
for name, tensor in params.named_tensors().items():
    flat = tensor.reshape(-1)
    analytic = grads.named_tensors()[name].reshape(-1)
    worst = 0.0
    for i in np.random.default_rng(1).choice(flat.size, size=min(10, flat.size), replace=False):
        orig = flat[i]
        flat[i] = orig + h
        up = loss()
        flat[i] = orig - h
        down = loss()
        flat[i] = orig
        numeric = (up - down) / (2 * h)
        worst = max(worst, abs(numeric - analytic[i]) / max(abs(numeric), abs(analytic[i]), 1e-12))
    print(f"{name:16s} worst relative error {worst:.2e}")
