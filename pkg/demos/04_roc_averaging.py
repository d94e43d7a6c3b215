"""
Micro and macro ROC averaging
=============================

Tied scores collapse into a single ROC point, so the trapezoid area
equals the probability that a random positive outscores a random
negative, with ties counting half. Macro averaging keeps both sides of
every vertical jump, which makes its area exactly the mean of the
per-class areas.
"""

import numpy as np

from scaffoldnet.metrics import multiclass_roc, roc_binary
from scaffoldnet.training import one_hot

scores = np.array([0.9, 0.8, 0.8, 0.6, 0.4, 0.4, 0.2])
labels = np.array([1, 1, 0, 1, 0, 1, 0])
curve = roc_binary(scores, labels)
for f, t, th in curve.points:
    print(f"threshold {th:>5}  fpr {f:.3f}  tpr {t:.3f}")

pos, neg = scores[labels == 1], scores[labels == 0]
pairs = np.mean([(p > n) + 0.5 * (p == n) for p in pos for n in neg])
print(f"AUC {curve.auc:.6f}  pair count {pairs:.6f}")

gen = np.random.default_rng(0)
y = gen.integers(0, 3, 40)
probs = np.round(gen.dirichlet(np.ones(3), 40) + 0.3 * one_hot(y), 1)
rocs = multiclass_roc(probs, one_hot(y))
per_class = [c.auc for c in rocs.per_class]
print("per-class AUC", np.round(per_class, 4))
print(f"micro {rocs.micro.auc:.4f}  macro {rocs.macro.auc:.4f}  mean of classes {np.mean(per_class):.4f}")
