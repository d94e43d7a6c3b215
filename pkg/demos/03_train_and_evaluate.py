"""
Training a small model end to end
=================================

A miniature run: 64x64 synthetic images, a few epochs, then test-set
metrics and ROC files. The full-size setting (128x128, 600 training
images, 11 epochs) uses the same calls and takes about 20 minutes.
At this size and budget the airbrushed class is the last to separate.
"""

import numpy as np

from scaffoldnet.checkpoint import checkpoint_load, checkpoint_save
from scaffoldnet.metrics import emit_report, evaluate_predictions, format_report
from scaffoldnet.synth import synthetic_split
from scaffoldnet.training import TrainConfig, fit, predict_probs
from scaffoldnet.layers import CLASS_NAMES

split = synthetic_split((180, 45, 45), image_size=64, seed=2)
print("train/validation/test:", len(split.train), len(split.validation), len(split.test))

cfg = TrainConfig(epochs=8, batch_size=16, seed=2)


def show(rec):
    print(f"epoch {rec.epoch:2d}  train loss {rec.train.loss:.3f}  "
          f"val loss {rec.val.loss:.3f}  val acc {rec.val.accuracy:.3f}")


result = fit(split, cfg, on_epoch=show)
print("kept epoch", result.best.epoch)

# the checkpoint round trip is exact, so reload before scoring
checkpoint_save(result.best, "demo_model.scfn")
model = checkpoint_load("demo_model.scfn")

probs = predict_probs(model.params, split.test)
report, rocs = evaluate_predictions(probs, np.array([s.label for s in split.test]))
for line in format_report(report):
    print(line)
print("confusion (rows = true):")
print(report.confusion)
emit_report(report, rocs, "demo_roc.csv", "demo_roc.svg", CLASS_NAMES)
