"""
Synthetic scaffold images
=========================

Render one image per scaffold family, save them as PGM files and compare
a couple of simple texture statistics. Electrospun mats are dense and
thin, steel wire is sparse and thick, airbrushed fibres curve and carry
blobs.
"""

import sys
from pathlib import Path

import numpy as np

from scaffoldnet.data import write_pgm
from scaffoldnet.layers import CLASS_NAMES
from scaffoldnet.synth import class_default_params, render_fiber_image

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_images")
out.mkdir(exist_ok=True)

for name in CLASS_NAMES:
    params = class_default_params(name)
    img = render_fiber_image(params, size=256, seed=1)
    write_pgm(out / f"{name}.pgm", img)

    px = img.pixels.astype(np.float64)
    edge = np.abs(np.diff(px, axis=1)).mean()
    print(f"{name:12s} fibres {params.fiber_count}  diameter {params.diameter_px} px  "
          f"mean {px.mean():6.1f}  edge density {edge:5.2f}")

# same seed, same picture
a = render_fiber_image(class_default_params("electrospun"), seed=3)
b = render_fiber_image(class_default_params("electrospun"), seed=3)
print("deterministic:", a == b)
print("images written to", out.resolve())
