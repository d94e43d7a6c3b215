"""``scaffoldnet`` command line: synth, train, eval, predict.

Machine-readable results go to stdout, diagnostics to stderr. Values can
also come from a ``key = value`` config file (``--config``); command-line
flags win over the file, and the file wins over built-in defaults.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .checkpoint import checkpoint_load, checkpoint_save
from .data import AugmentPolicy, IMAGE_SIZE, load_dataset, load_grayscale_image, resize_bilinear, standardize, stratified_split, write_split_manifest
from .errors import ScaffoldError
from .layers import CLASS_NAMES, model_forward
from .metrics import emit_report, evaluate_predictions, format_report
from .synth import SOURCE_SIZE, generate_dataset
from .training import TrainConfig, fit, predict_probs

DEFAULTS = {
    "seed": 0,
    "per_class": 100,
    "size": SOURCE_SIZE,
    "epochs": 11,
    "batch": 32,
    "lr": 0.001,
    "image_size": IMAGE_SIZE,
    "augment": True,
    "split": "test",
    "out_csv": "roc.csv",
    "out_svg": "roc.svg",
}
_TYPES = {"seed": int, "per_class": int, "size": int, "epochs": int, "batch": int, "lr": float, "image_size": int}


def read_config(path):
    """Parse ``key = value`` lines; ``#`` starts a comment. Dashes in keys become underscores."""
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ScaffoldError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key == "augment":
            values[key] = value.lower() in ("1", "true", "yes", "on")
        elif key in _TYPES:
            try:
                values[key] = _TYPES[key](value)
            except ValueError:
                raise ScaffoldError(f"{path}:{lineno}: bad value for {key}: {value!r}") from None
        else:
            values[key] = value
    return values


def _resolve(args):
    merged = dict(DEFAULTS)
    if args.config:
        merged.update(read_config(args.config))
    merged.update({k: v for k, v in vars(args).items() if v is not None})
    return argparse.Namespace(**merged)


def _require(opts, *names):
    missing = [n for n in names if getattr(opts, n, None) in (None, "")]
    if missing:
        raise ScaffoldError("missing required option(s): " + ", ".join("--" + m.replace("_", "-") for m in missing))


def _err(msg):
    print(msg, file=sys.stderr)


def cmd_synth(opts):
    _require(opts, "out")
    manifest = generate_dataset(opts.out, int(opts.per_class), int(opts.seed), int(opts.size))
    for name, count in manifest.items():
        print(f"{name}\t{count}")
    _err(f"wrote {sum(manifest.values())} images to {opts.out}")
    return 0


def _load_split(opts, seed):
    samples, class_index = load_dataset(opts.data, int(opts.image_size))
    split = stratified_split(samples, seed=seed, class_index=class_index)
    return split


def cmd_train(opts):
    _require(opts, "data", "out")
    seed = int(opts.seed)
    split = _load_split(opts, seed)
    _err(f"split: train {len(split.train)}, validation {len(split.validation)}, test {len(split.test)}")
    if getattr(opts, "manifest", None):
        write_split_manifest(split, opts.manifest)
    policy = AugmentPolicy() if opts.augment else AugmentPolicy.off()
    cfg = TrainConfig(epochs=int(opts.epochs), batch_size=int(opts.batch), lr=float(opts.lr), seed=seed, augment=policy)

    def report(rec):
        print(f"epoch,{rec.epoch},{rec.train.loss:.6f},{rec.val.loss:.6f},{rec.val.accuracy:.6f},{rec.val.mae:.6f}", flush=True)

    result = fit(split, cfg, on_epoch=report)
    checkpoint_save(result.best, opts.out)
    _err(f"best epoch {result.best.epoch} (validation loss {result.best.val_loss:.4f}) saved to {opts.out}")
    return 0


def cmd_eval(opts):
    _require(opts, "data", "model")
    ckpt = checkpoint_load(opts.model)
    split = _load_split(opts, ckpt.seed)
    part = {"test": split.test, "validation": split.validation, "train": split.train}[opts.split]
    if not part:
        raise ScaffoldError(f"{opts.split} split is empty")
    probs = predict_probs(ckpt.params, part)
    report, rocs = evaluate_predictions(probs, np.array([s.label for s in part]))
    names = sorted(split.class_index, key=split.class_index.get)
    emit_report(report, rocs, opts.out_csv, opts.out_svg, names)
    for line in format_report(report):
        print(line)
    _err(f"evaluated {len(part)} {opts.split} images; ROC written to {opts.out_csv} and {opts.out_svg}")
    return 0


def cmd_predict(opts):
    _require(opts, "model")
    ckpt = checkpoint_load(opts.model)
    size = int(opts.image_size)
    ok = 0
    for path in opts.images:
        try:
            img = standardize(resize_bilinear(load_grayscale_image(path), size, size))
        except ScaffoldError as exc:
            _err(f"{path},error,{exc}")
            continue
        probs, _ = model_forward(img, ckpt.params)
        probs = probs.astype(np.float64)
        print(f"{path}," + ",".join(f"{p:.6f}" for p in probs) + f",{CLASS_NAMES[int(np.argmax(probs))]}")
        ok += 1
    return 0 if ok == len(opts.images) else 1


def build_parser():
    parser = argparse.ArgumentParser(prog="scaffoldnet", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value file; flags override it")
    common.add_argument("--seed", type=int, help="64-bit seed (default 0)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic scaffold dataset")
    p.add_argument("--out")
    p.add_argument("--per-class", type=int)
    p.add_argument("--size", type=int, help="source image side in pixels (default 256)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", parents=[common], help="train and save the best-validation checkpoint")
    p.add_argument("--data")
    p.add_argument("--out")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--image-size", type=int)
    p.add_argument("--no-augment", dest="augment", action="store_false", default=None)
    p.add_argument("--manifest", help="write the split manifest here")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint on the held-out split")
    p.add_argument("--data")
    p.add_argument("--model")
    p.add_argument("--out-csv")
    p.add_argument("--out-svg")
    p.add_argument("--image-size", type=int)
    p.add_argument("--split", choices=("test", "validation", "train"),
                   help="which partition to score (default test)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", parents=[common], help="class probabilities for image files")
    p.add_argument("--model")
    p.add_argument("--image-size", type=int)
    p.add_argument("images", nargs="+")
    p.set_defaults(func=cmd_predict)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        opts = _resolve(args)
        return opts.func(opts)
    except (ScaffoldError, OSError) as exc:
        _err(f"error: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
