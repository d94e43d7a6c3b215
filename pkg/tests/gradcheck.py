"""Central finite differences in float64, independent of the hand-written backward code."""

import numpy as np

H = 1e-5


def numeric_grad(f, x, h=H, indices=None):
    """d f / d x by central differences; ``x`` is perturbed in place and restored.

    ``indices`` restricts the check to a subset of flat positions; other
    entries of the result are left as NaN.
    """
    flat = x.reshape(-1)
    out = np.full(flat.shape, np.nan)
    for i in range(flat.size) if indices is None else indices:
        orig = flat[i]
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        out[i] = (fp - fm) / (2 * h)
    return out.reshape(x.shape)


def rel_error(analytic, numeric):
    """Norm-wise relative error over the checked entries."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    mask = ~np.isnan(n)
    a, n = a[mask], n[mask]
    denom = max(np.linalg.norm(a), np.linalg.norm(n), 1e-30)
    return float(np.linalg.norm(a - n) / denom)
