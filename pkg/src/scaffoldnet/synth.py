"""Procedural SEM-like fibre images for the three scaffold families.

Each image is a dark background with fibres painted back to front as
anti-aliased thick quadratic curves; later (upper) fibres are brighter, as
in secondary-electron images where the top of the mat charges most. A
separable Gaussian blur and additive Gaussian noise finish the image.

The presets encode the qualitative differences between the classes:
electrospun mats are dense and thin, steel wire is sparse and thick, and
airbrushed fibres are curved, of uneven diameter and carry bead-like blobs.
Electrospun and steel wire share the same (isotropic, straight) orientation
statistics, so only diameter and porosity separate them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import RawImage, write_pgm
from .errors import InputError
from .layers import CLASS_NAMES
from .tensor_core import Pcg32, rng_from_seed

SOURCE_SIZE = 256
CURVE_SEGMENTS = 12
TOP_BRIGHTNESS = 235.0
BOTTOM_BRIGHTNESS = 105.0


@dataclass(frozen=True)
class FiberClassParams:
    fiber_count: tuple  # inclusive (lo, hi)
    diameter_px: tuple  # (lo, hi), at SOURCE_SIZE
    curvature: float  # max control-point offset as a fraction of image size
    orientation_spread_deg: float  # fibre angles uniform in [0, spread)
    length_frac: tuple  # fibre length range as a fraction of image size
    diameter_jitter: float  # relative diameter variation along one fibre
    blob_count: tuple
    blob_radius_px: tuple
    background_level: float
    noise_sigma: float
    blur_sigma: float

    def __post_init__(self):
        if self.diameter_px[0] <= 0 or self.diameter_px[0] > self.diameter_px[1]:
            raise InputError(f"bad diameter range {self.diameter_px}")
        if self.fiber_count[0] < 0 or self.fiber_count[0] > self.fiber_count[1]:
            raise InputError(f"bad fiber_count range {self.fiber_count}")
        if self.noise_sigma < 0 or self.blur_sigma < 0 or self.curvature < 0:
            raise InputError("sigmas and curvature must be >= 0")


_PRESETS = {
    "electrospun": FiberClassParams(
        fiber_count=(120, 250),
        diameter_px=(1.5, 4.0),
        curvature=0.0,
        orientation_spread_deg=180.0,
        length_frac=(2.0, 2.0),
        diameter_jitter=0.0,
        blob_count=(0, 0),
        blob_radius_px=(1.0, 1.0),
        background_level=35.0,
        noise_sigma=3.0,
        blur_sigma=0.7,
    ),
    "steel_wire": FiberClassParams(
        fiber_count=(8, 25),
        diameter_px=(8.0, 18.0),
        curvature=0.0,
        orientation_spread_deg=180.0,
        length_frac=(2.0, 2.0),
        diameter_jitter=0.0,
        blob_count=(0, 0),
        blob_radius_px=(1.0, 1.0),
        background_level=35.0,
        noise_sigma=3.0,
        blur_sigma=0.7,
    ),
    "airbrushed": FiberClassParams(
        fiber_count=(40, 120),
        diameter_px=(2.0, 10.0),
        curvature=0.25,
        orientation_spread_deg=180.0,
        length_frac=(0.3, 0.8),
        diameter_jitter=0.4,
        blob_count=(4, 12),
        blob_radius_px=(4.0, 12.0),
        background_level=35.0,
        noise_sigma=3.0,
        blur_sigma=1.0,
    ),
}


def class_default_params(name):
    """Preset for ``"airbrushed"``, ``"electrospun"`` or ``"steel_wire"``."""
    try:
        return _PRESETS[name]
    except KeyError:
        raise InputError(f"unknown scaffold class {name!r}; expected one of {CLASS_NAMES}") from None


def gaussian_kernel(sigma):
    """Normalised 1-D Gaussian taps on [-ceil(3 sigma), ceil(3 sigma)]."""
    radius = max(1, math.ceil(3 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_blur(img, sigma):
    """Separable Gaussian blur with edge-replicating borders."""
    if sigma <= 0:
        return img.copy()
    k = gaussian_kernel(sigma)
    r = len(k) // 2
    padded = np.pad(img, r, mode="edge")
    rows = sum(k[i] * padded[:, i:i + img.shape[1]] for i in range(len(k)))
    return sum(k[i] * rows[i:i + img.shape[0], :] for i in range(len(k)))


def _uniform(rng, lo, hi):
    return lo + (hi - lo) * rng.uniform()


def _randint(rng, lo, hi):
    return lo + rng.bounded(hi - lo + 1)


def _paint(canvas, coverage, y0, x0, brightness):
    h, w = coverage.shape
    region = canvas[y0:y0 + h, x0:x0 + w]
    region *= 1 - coverage
    region += brightness * coverage


def _segment_band(size, a, b, ra, rb):
    """Coverage of one tapered segment over a band of pixels around it.

    Walks the segment's major axis one pixel line at a time, so each pixel is
    visited at most once and the cost scales with length x width. Returns
    flat pixel indices and their coverage in (0, 1].
    """
    d = b - a
    major = 0 if abs(d[0]) >= abs(d[1]) else 1  # 0: walk columns (x), 1: walk rows (y)
    minor = 1 - major
    reach = max(ra, rb) + 2
    lo = max(0, math.floor(min(a[major], b[major]) - reach))
    hi = min(size - 1, math.ceil(max(a[major], b[major]) + reach))
    if lo > hi:
        return np.zeros(0, dtype=np.intp), np.zeros(0)
    steps = np.arange(lo, hi + 1, dtype=np.float64)
    slope = d[minor] / d[major] if abs(d[major]) > 1e-9 else 0.0
    centre = np.rint(a[minor] + (steps - a[major]) * slope)
    half = math.ceil(reach * math.hypot(1.0, slope)) + 1
    offsets = np.arange(-half, half + 1, dtype=np.float64)
    along = np.broadcast_to(steps[:, None], (len(steps), len(offsets)))
    across = centre[:, None] + offsets[None, :]
    keep = (across >= 0) & (across <= size - 1)
    along, across = along[keep], across[keep]
    px, py = (along, across) if major == 0 else (across, along)
    length2 = float(d @ d)
    if length2 > 1e-12:
        t = np.clip(((px - a[0]) * d[0] + (py - a[1]) * d[1]) / length2, 0.0, 1.0)
    else:
        t = np.zeros_like(px)
    dist = np.hypot(px - a[0] - t * d[0], py - a[1] - t * d[1])
    coverage = np.clip(0.5 - (dist - (ra + t * (rb - ra))), 0.0, 1.0)
    hit = coverage > 0
    flat = py[hit].astype(np.intp) * size + px[hit].astype(np.intp)
    return flat, coverage[hit]


def _draw_fiber(canvas, pts, radii, brightness):
    """Composite one polyline whose radius varies linearly along each segment."""
    size = canvas.shape[0]
    pieces = [
        _segment_band(size, a, b, ra, rb)
        for a, b, ra, rb in zip(pts[:-1], pts[1:], radii[:-1], radii[1:])
    ]
    flat = np.concatenate([p[0] for p in pieces])
    coverage = np.concatenate([p[1] for p in pieces])
    if len(pieces) > 1 and flat.size:
        # segments overlap at joints: keep the max coverage per pixel
        order = np.argsort(flat, kind="stable")
        flat = flat[order]
        starts = np.flatnonzero(np.r_[True, flat[1:] != flat[:-1]])
        coverage = np.maximum.reduceat(coverage[order], starts)
        flat = flat[starts]
    view = canvas.reshape(-1)
    view[flat] = view[flat] * (1 - coverage) + brightness * coverage


def _draw_blob(canvas, cx, cy, radius, brightness):
    size = canvas.shape[0]
    x0, x1 = max(0, int(cx - radius - 2)), min(size, int(cx + radius + 3))
    y0, y1 = max(0, int(cy - radius - 2)), min(size, int(cy + radius + 3))
    if x0 >= x1 or y0 >= y1:
        return
    py, px = np.mgrid[y0:y1, x0:x1].astype(np.float64)
    coverage = np.clip(0.5 - (np.hypot(px - cx, py - cy) - radius), 0.0, 1.0)
    _paint(canvas, coverage, y0, x0, brightness)


def _fiber_geometry(params, size, rng):
    cx = _uniform(rng, 0, size)
    cy = _uniform(rng, 0, size)
    theta = math.radians(_uniform(rng, 0, params.orientation_spread_deg))
    half = 0.5 * size * _uniform(rng, *params.length_frac)
    direction = np.array([math.cos(theta), math.sin(theta)])
    normal = np.array([-direction[1], direction[0]])
    centre = np.array([cx, cy])
    p0 = centre - half * direction
    p2 = centre + half * direction
    bend = params.curvature * size * (2 * rng.uniform() - 1)
    diameter = _uniform(rng, *params.diameter_px)
    if params.curvature == 0:
        t = np.array([0.0, 1.0])
    else:
        t = np.linspace(0.0, 1.0, CURVE_SEGMENTS + 1)
    p1 = centre + 2 * bend * normal  # the curve's midpoint sits ``bend`` off the chord
    pts = ((1 - t) ** 2)[:, None] * p0 + (2 * t * (1 - t))[:, None] * p1 + (t ** 2)[:, None] * p2
    jitter = params.diameter_jitter
    if jitter > 0:
        scale = 1 + jitter * (2 * rng.uniform_array(len(t)) - 1)
    else:
        scale = np.ones(len(t))
    return pts, 0.5 * diameter * scale


def render_fiber_image(params: FiberClassParams, size=SOURCE_SIZE, seed=0):
    """Render one image; fully determined by ``(params, size, seed)``.

    ``seed`` may be an integer or a :class:`Pcg32` stream (which is consumed).
    """
    if size < 32:
        raise InputError(f"size must be >= 32, got {size}")
    rng = seed if isinstance(seed, Pcg32) else rng_from_seed(seed)
    canvas = np.full((size, size), float(params.background_level))
    count = _randint(rng, *params.fiber_count)
    blobs = _randint(rng, *params.blob_count)
    blob_after = sorted(rng.bounded(count + 1) for _ in range(blobs))
    scale = size / SOURCE_SIZE
    scaled = params
    if scale != 1:
        scaled = FiberClassParams(**{
            **params.__dict__,
            "diameter_px": tuple(d * scale for d in params.diameter_px),
            "blob_radius_px": tuple(r * scale for r in params.blob_radius_px),
        })
    b = 0
    for k in range(count + 1):
        while b < blobs and blob_after[b] == k:
            radius = _uniform(rng, *scaled.blob_radius_px)
            _draw_blob(canvas, _uniform(rng, 0, size), _uniform(rng, 0, size), radius,
                       _layer_brightness(k, count, rng))
            b += 1
        if k == count:
            break
        pts, radii = _fiber_geometry(scaled, size, rng)
        _draw_fiber(canvas, pts, radii, _layer_brightness(k, count, rng))
    canvas = gaussian_blur(canvas, params.blur_sigma * scale)
    if params.noise_sigma > 0:
        canvas += params.noise_sigma * rng.normal_array(canvas.shape)
    return RawImage(np.clip(np.rint(canvas), 0, 255))


def _layer_brightness(k, count, rng):
    depth = k / max(count - 1, 1)
    base = BOTTOM_BRIGHTNESS + (TOP_BRIGHTNESS - BOTTOM_BRIGHTNESS) * depth
    return min(255.0, base + 15.0 * (2 * rng.uniform() - 1))


def generate_dataset(root, per_class=100, seed=0, size=SOURCE_SIZE):
    """Write ``<root>/<class>/img_<seed>_<i>.pgm`` for every class plus ``manifest.txt``.

    ``per_class`` is a single count or a mapping ``{class_name: count}``.
    Returns the ``{class_name: count}`` manifest.
    """
    root = Path(root)
    counts = per_class if isinstance(per_class, dict) else {c: int(per_class) for c in CLASS_NAMES}
    base = rng_from_seed(seed)
    manifest = {}
    root.mkdir(parents=True, exist_ok=True)
    for class_idx, name in enumerate(CLASS_NAMES):
        n = int(counts.get(name, 0))
        params = class_default_params(name)
        class_dir = root / name
        class_dir.mkdir(exist_ok=True)
        class_rng = base.derive(class_idx)
        for i in range(n):
            img = render_fiber_image(params, size, class_rng.derive(i))
            write_pgm(class_dir / f"img_{seed}_{i:05d}.pgm", img)
        manifest[name] = n
    (root / "manifest.txt").write_text("".join(f"{k}\t{v}\n" for k, v in manifest.items()))
    return manifest


def synthetic_split(counts=(600, 100, 100), image_size=128, seed=0, source_size=SOURCE_SIZE):
    """Render a train/validation/test split in memory, skipping the disk.

    ``counts`` gives the size of each part; classes are assigned round-robin
    so every part is as balanced as its size allows. Images are rendered at
    ``source_size`` and resized to ``image_size`` like files on disk would be.
    """
    from .data import DatasetSplit, Sample, resize_bilinear

    base = rng_from_seed(seed)
    presets = [class_default_params(c) for c in CLASS_NAMES]
    parts = []
    for part_idx, n in enumerate(counts):
        part_rng = base.derive(part_idx)
        samples = []
        for i in range(int(n)):
            label = i % len(CLASS_NAMES)
            raw = render_fiber_image(presets[label], source_size, part_rng.derive(i))
            raw = resize_bilinear(raw, image_size, image_size)
            samples.append(Sample(raw, label, f"synthetic/{part_idx}/{CLASS_NAMES[label]}/{i}"))
        parts.append(samples)
    return DatasetSplit(*parts, class_index={c: i for i, c in enumerate(CLASS_NAMES)})
