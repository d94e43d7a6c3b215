"""Image ingestion, preprocessing, augmentation and dataset splitting.

Dataset layout on disk is ``<root>/<class_name>/*.{pgm,png}``; class indices
are assigned alphabetically over the class directory names.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .errors import InputError, IngestionError
from .tensor_core import DTYPE, Pcg32, rng_from_seed

IMAGE_SIZE = 128
SPLIT_RATIOS = (8.8, 1.2, 1.0)
SPLIT_NAMES = ("train", "validation", "test")
IMAGE_SUFFIXES = (".pgm", ".png")
STD_FLOOR = 1e-7


@dataclass
class RawImage:
    """8-bit grayscale image stored as a ``(height, width)`` uint8 array."""

    pixels: np.ndarray

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels)
        if self.pixels.ndim != 2 or min(self.pixels.shape) < 1:
            raise InputError(f"image must be a non-empty 2-D grid, got {self.pixels.shape}")
        if self.pixels.dtype != np.uint8:
            self.pixels = np.clip(np.rint(self.pixels), 0, 255).astype(np.uint8)

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def width(self):
        return self.pixels.shape[1]

    def __eq__(self, other):
        return isinstance(other, RawImage) and np.array_equal(self.pixels, other.pixels)


@dataclass
class Sample:
    raw: RawImage
    label: int
    path: str = ""
    _image: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def image(self):
        """Standardized ``(H, W, 1)`` float32 tensor, computed once."""
        if self._image is None:
            self._image = standardize(self.raw)
        return self._image


@dataclass
class AugmentPolicy:
    horizontal_flip: bool = True
    max_rotation_deg: float = 5.0
    width_shift_frac: float = 0.05
    height_shift_frac: float = 0.05
    zoom_frac: float = 0.05

    def __post_init__(self):
        for name in ("max_rotation_deg", "width_shift_frac", "height_shift_frac", "zoom_frac"):
            if getattr(self, name) < 0:
                raise InputError(f"{name} must be >= 0")
        if self.zoom_frac >= 1:
            raise InputError("zoom_frac must be < 1")

    @classmethod
    def off(cls):
        return cls(False, 0.0, 0.0, 0.0, 0.0)

    @property
    def is_identity(self):
        return not self.horizontal_flip and not any(
            (self.max_rotation_deg, self.width_shift_frac, self.height_shift_frac, self.zoom_frac)
        )


@dataclass
class DatasetSplit:
    train: list
    validation: list
    test: list
    class_index: dict

    def parts(self):
        return dict(zip(SPLIT_NAMES, (self.train, self.validation, self.test)))


# ---------------------------------------------------------------------------
# File I/O
# ---------------------------------------------------------------------------

def _parse_pgm(data, path):
    tokens = []
    pos = 2
    while len(tokens) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos >= len(data):
            raise IngestionError(path, "truncated PGM header")
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    pos += 1  # single whitespace byte before the raster
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError:
        raise IngestionError(path, "malformed PGM header") from None
    if width < 1 or height < 1 or not 0 < maxval < 256:
        raise IngestionError(path, f"unsupported PGM geometry {width}x{height} maxval {maxval}")
    raster = data[pos:pos + width * height]
    if len(raster) != width * height:
        raise IngestionError(path, "truncated PGM raster")
    pixels = np.frombuffer(raster, dtype=np.uint8).reshape(height, width)
    if maxval != 255:
        pixels = np.rint(pixels.astype(np.float64) * 255.0 / maxval)
    return RawImage(pixels.copy())


def _decode_png(path):
    from PIL import Image

    try:
        with Image.open(path) as im:
            im.load()
            if im.mode in ("L", "P", "1"):
                arr = np.asarray(im.convert("L"), dtype=np.float64)
            else:
                rgb = np.asarray(im.convert("RGB"), dtype=np.float64)
                arr = rgb.mean(axis=2)
    except OSError as exc:
        raise IngestionError(path, f"cannot decode PNG ({exc})") from None
    return RawImage(arr)


def load_grayscale_image(path):
    """Read an 8-bit binary PGM (P5) or a PNG; RGB PNGs are averaged to gray."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise IngestionError(path, exc.strerror or "unreadable") from None
    if data[:2] == b"P5":
        return _parse_pgm(data, path)
    if data[:8] == b"\x89PNG\r\n\x1a\n":
        return _decode_png(path)
    raise IngestionError(path, "not a binary PGM or PNG file")


def write_pgm(path, img: RawImage):
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + np.ascontiguousarray(img.pixels, dtype=np.uint8).tobytes())


# ---------------------------------------------------------------------------
# Geometry
# ---------------------------------------------------------------------------

def _bilinear(src, ys, xs):
    """Sample ``src`` at fractional coordinates, clamping to the nearest edge."""
    h, w = src.shape
    ys = np.clip(ys, 0.0, h - 1.0)
    xs = np.clip(xs, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = ys - y0
    fx = xs - x0
    top = src[y0, x0] * (1 - fx) + src[y0, x1] * fx
    bottom = src[y1, x0] * (1 - fx) + src[y1, x1] * fx
    return top * (1 - fy) + bottom * fy


def resize_bilinear(img: RawImage, height=IMAGE_SIZE, width=IMAGE_SIZE):
    """Bilinear resize with pixel-centre alignment."""
    if (img.height, img.width) == (height, width):
        return RawImage(img.pixels.copy())
    sy = img.height / height
    sx = img.width / width
    ys = (np.arange(height) + 0.5) * sy - 0.5
    xs = (np.arange(width) + 0.5) * sx - 0.5
    out = _bilinear(img.pixels.astype(np.float64), ys[:, None], xs[None, :])
    return RawImage(out)


def standardize(img):
    """Zero-mean, unit-(population)-std float32 tensor of shape (H, W, 1)."""
    x = img.pixels if isinstance(img, RawImage) else np.asarray(img)
    x = x.astype(np.float64).reshape(x.shape[0], x.shape[1])
    centred = x - x.mean()
    out = centred / max(float(centred.std()), STD_FLOOR)
    return out.astype(DTYPE)[:, :, None]


def horizontal_flip(img: RawImage):
    return RawImage(img.pixels[:, ::-1].copy())


def augment(img: RawImage, policy: AugmentPolicy, rng: Pcg32):
    """Random flip, then rotation, shift and zoom about the image centre.

    Five uniforms are always drawn, so the stream advances identically
    whatever the policy. Uncovered regions take the nearest edge pixel.
    """
    u_flip, u_rot, u_dx, u_dy, u_zoom = (rng.uniform() for _ in range(5))
    if policy.is_identity:
        return img
    pixels = img.pixels
    if policy.horizontal_flip and u_flip < 0.5:
        pixels = pixels[:, ::-1]
    angle = math.radians((2 * u_rot - 1) * policy.max_rotation_deg)
    dx = (2 * u_dx - 1) * policy.width_shift_frac * img.width
    dy = (2 * u_dy - 1) * policy.height_shift_frac * img.height
    zoom = 1 + (2 * u_zoom - 1) * policy.zoom_frac
    if angle == 0 and dx == 0 and dy == 0 and zoom == 1:
        return RawImage(pixels.copy())
    cy = (img.height - 1) / 2
    cx = (img.width - 1) / 2
    yy, xx = np.mgrid[0:img.height, 0:img.width].astype(np.float64)
    # invert out = c + zoom * R(angle) (in - c) + shift
    ry = (yy - cy - dy) / zoom
    rx = (xx - cx - dx) / zoom
    cos, sin = math.cos(angle), math.sin(angle)
    src_x = cx + cos * rx + sin * ry
    src_y = cy - sin * rx + cos * ry
    return RawImage(_bilinear(pixels.astype(np.float64), src_y, src_x))


# ---------------------------------------------------------------------------
# Dataset assembly
# ---------------------------------------------------------------------------

def largest_remainder(n, ratios=SPLIT_RATIOS):
    """Split ``n`` items by ``ratios``: floors first, leftovers by largest remainder.

    Equal remainders favour the earlier part, so train wins ties.
    """
    weights = [Fraction(str(r)) for r in ratios]
    total = sum(weights)
    quotas = [n * w / total for w in weights]
    counts = [math.floor(q) for q in quotas]
    order = sorted(range(len(quotas)), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in order[: n - sum(counts)]:
        counts[i] += 1
    return counts


def stratified_split(samples, ratios=SPLIT_RATIOS, seed=0, class_index=None):
    """Per-class seeded shuffle, then largest-remainder allocation to train/validation/test."""
    by_class = {}
    for s in samples:
        by_class.setdefault(s.label, []).append(s)
    parts = ([], [], [])
    rng = rng_from_seed(seed)
    for label in sorted(by_class):
        members = by_class[label]
        if len(members) < 3:
            raise InputError(f"class {label} has {len(members)} samples; at least 3 required")
        order = rng.derive(label).permutation(len(members))
        counts = largest_remainder(len(members), ratios)
        start = 0
        for part, count in zip(parts, counts):
            part.extend(members[i] for i in order[start:start + count])
            start += count
    if class_index is None:
        class_index = {str(k): k for k in sorted(by_class)}
    return DatasetSplit(*parts, class_index=dict(class_index))


def make_batches(n, batch_size=32, rng: Pcg32 | None = None):
    """Shuffled index permutation cut into consecutive chunks; the last may be short."""
    n = len(n) if not isinstance(n, (int, np.integer)) else int(n)
    if n < 1:
        raise InputError("cannot batch an empty split")
    if batch_size < 1:
        raise InputError("batch_size must be >= 1")
    order = rng.permutation(n) if rng is not None else np.arange(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


def assemble_batch(samples, indices):
    """Stack standardized images into ``(B, H, W, 1)`` plus a label vector."""
    x = np.stack([samples[i].image for i in indices])
    y = np.array([samples[i].label for i in indices], dtype=np.int64)
    return x, y


def discover_dataset(root):
    """Return ``(class_index, [(path, label), ...])`` for a dataset directory."""
    root = Path(root)
    if not root.is_dir():
        raise IngestionError(root, "dataset root is not a directory")
    class_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if not class_dirs:
        raise IngestionError(root, "no class subdirectories")
    class_index = {d.name: i for i, d in enumerate(class_dirs)}
    entries = []
    for d in class_dirs:
        files = sorted(p for p in d.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
        if not files:
            raise IngestionError(d, "class directory contains no .pgm/.png images")
        entries.extend((str(p), class_index[d.name]) for p in files)
    return class_index, entries


def load_dataset(root, image_size=IMAGE_SIZE):
    """Load and resize every image under ``root``; returns ``(samples, class_index)``."""
    class_index, entries = discover_dataset(root)
    samples = []
    for path, label in entries:
        raw = resize_bilinear(load_grayscale_image(path), image_size, image_size)
        samples.append(Sample(raw, label, path))
    return samples, class_index


def write_split_manifest(split: DatasetSplit, path):
    lines = []
    for name, part in split.parts().items():
        lines.extend(f"{name}\t{s.label}\t{s.path}" for s in part)
    Path(path).write_text("\n".join(lines) + "\n")
