"""Tensor helpers, the GEMM kernel and the PCG32 generator.

Tensors are plain ``numpy.ndarray`` objects. Images use the channels-last
layout ``(H, W, C)``, batches ``(N, H, W, C)``. Parameters and activations
are stored as float32; every routine preserves its input dtype so the
gradient-check harness can run the same code in float64.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError

DTYPE = np.float32

_MASK64 = (1 << 64) - 1
_MASK32 = (1 << 32) - 1
PCG_MULT = 6364136223846793005
PCG_DEFAULT_STREAM = 1442695040888963407


def tensor_new(shape, fill=0.0, dtype=DTYPE):
    """Return a tensor of ``shape`` with every entry equal to ``fill``."""
    shape = tuple(int(d) for d in shape)
    if not shape or any(d < 1 for d in shape):
        raise ShapeError(f"every dimension must be >= 1, got {shape}")
    return np.full(shape, fill, dtype=dtype)


def matmul(a, b):
    """Matrix product of ``a`` (m x k) and ``b`` (k x n) via BLAS."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"inner dimensions differ: {a.shape} x {b.shape}")
    return a @ b


def matmul_naive(a, b):
    """Triple-loop matrix product. Slow; kept as the reference kernel."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"incompatible shapes {a.shape} x {b.shape}")
    m, k = a.shape
    n = b.shape[1]
    out = np.zeros((m, n), dtype=np.result_type(a, b))
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for t in range(k):
                acc += float(a[i, t]) * float(b[t, j])
            out[i, j] = acc
    return out


def reduce_mean(t, axes=None):
    """Arithmetic mean over ``axes`` (all axes when None), keeping the rest in order."""
    t = np.asarray(t)
    if axes is None:
        axes = tuple(range(t.ndim))
    elif isinstance(axes, int):
        axes = (axes,)
    norm = []
    for ax in axes:
        if not -t.ndim <= ax < t.ndim:
            raise ShapeError(f"axis {ax} out of range for rank {t.ndim}")
        norm.append(ax % t.ndim)
    if len(set(norm)) != len(norm):
        raise ShapeError(f"repeated axis in {tuple(axes)}")
    return t.mean(axis=tuple(norm), dtype=t.dtype if t.dtype.kind == "f" else None)


# ---------------------------------------------------------------------------
# PCG32 (XSH-RR 64/32, O'Neill 2014)
# ---------------------------------------------------------------------------

def _splitmix64(x):
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def _output(old):
    xorshifted = (((old >> 18) ^ old) >> 27) & _MASK32
    rot = old >> 59
    return ((xorshifted >> rot) | (xorshifted << ((-rot) & 31))) & _MASK32


# Jump-ahead coefficients: state_k = A[k] * state_0 + G[k] * inc (mod 2**64).
_jump_a = np.ones(1, dtype=np.uint64)
_jump_g = np.zeros(1, dtype=np.uint64)


def _jump_tables(n):
    global _jump_a, _jump_g
    while len(_jump_a) < n:
        size = len(_jump_a)
        a_l = pow(PCG_MULT, size, 1 << 64)
        g_l = (int(_jump_g[-1]) * PCG_MULT + 1) & _MASK64
        a_arr = np.array([a_l], dtype=np.uint64)
        g_arr = np.array([g_l], dtype=np.uint64)
        _jump_g = np.concatenate([_jump_g, _jump_g * a_arr + g_arr])
        _jump_a = np.concatenate([_jump_a, _jump_a * a_arr])
    return _jump_a[:n], _jump_g[:n]


class Pcg32:
    """Portable PCG32 stream with a 64-bit state and an odd 64-bit increment.

    Identical ``(state, inc)`` pairs produce identical sequences everywhere.
    A generator is single-owner; hand derived children to parallel consumers.
    """

    __slots__ = ("state", "inc")

    def __init__(self, state, inc):
        self.state = int(state) & _MASK64
        self.inc = (int(inc) | 1) & _MASK64

    @classmethod
    def seeded(cls, initstate, initseq=PCG_DEFAULT_STREAM):
        """Seed exactly like the reference ``pcg32_srandom_r``."""
        rng = cls(0, ((int(initseq) << 1) | 1) & _MASK64)
        rng.next_u32()
        rng.state = (rng.state + int(initstate)) & _MASK64
        rng.next_u32()
        return rng

    def __eq__(self, other):
        return isinstance(other, Pcg32) and (self.state, self.inc) == (other.state, other.inc)

    def __hash__(self):
        return hash((self.state, self.inc))

    def __repr__(self):
        return f"Pcg32(state={self.state:#018x}, inc={self.inc:#018x})"

    def copy(self):
        return Pcg32(self.state, self.inc)

    def next_u32(self):
        old = self.state
        self.state = (old * PCG_MULT + self.inc) & _MASK64
        return _output(old)

    def uniform(self):
        """Uniform float in [0, 1): the next output divided by 2**32."""
        return self.next_u32() / 4294967296.0

    def random_u32(self, n):
        """Next ``n`` outputs as a uint64 array, vectorised by jump-ahead."""
        n = int(n)
        if n <= 0:
            return np.zeros(0, dtype=np.uint64)
        a, g = _jump_tables(n + 1)
        s0 = np.array([self.state], dtype=np.uint64)
        inc = np.array([self.inc], dtype=np.uint64)
        states = a * s0 + g * inc
        self.state = int(states[n])
        old = states[:n]
        xorshifted = (((old >> np.uint64(18)) ^ old) >> np.uint64(27)) & np.uint64(_MASK32)
        rot = old >> np.uint64(59)
        left = (np.uint64(32) - rot) & np.uint64(31)
        return ((xorshifted >> rot) | (xorshifted << left)) & np.uint64(_MASK32)

    def uniform_array(self, shape):
        """Float64 array of uniforms in [0, 1), same values as repeated ``uniform()``."""
        shape = (shape,) if np.isscalar(shape) else tuple(shape)
        n = int(np.prod(shape, dtype=np.int64))
        return (self.random_u32(n).astype(np.float64) / 4294967296.0).reshape(shape)

    def normal_array(self, shape):
        """Standard normal variates by the Box-Muller transform."""
        shape = (shape,) if np.isscalar(shape) else tuple(shape)
        n = int(np.prod(shape, dtype=np.int64))
        half = (n + 1) // 2
        u = self.uniform_array(2 * half)
        r = np.sqrt(-2.0 * np.log1p(-u[:half]))
        theta = 2.0 * np.pi * u[half:]
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])
        return z[:n].reshape(shape)

    def bounded(self, bound):
        """Unbiased integer in [0, bound), as in ``pcg32_boundedrand_r``."""
        bound = int(bound)
        if bound <= 0 or bound > _MASK32 + 1:
            raise ValueError(f"bound must be in [1, 2**32], got {bound}")
        threshold = ((1 << 32) - bound) % bound
        while True:
            r = self.next_u32()
            if r >= threshold:
                return r % bound

    def permutation(self, n):
        """Fisher-Yates shuffle of ``range(n)``."""
        perm = list(range(int(n)))
        for i in range(len(perm) - 1, 0, -1):
            j = self.bounded(i + 1)
            perm[i], perm[j] = perm[j], perm[i]
        return np.array(perm, dtype=np.int64)

    def derive(self, tag):
        """Child stream that is a pure function of ``(state, inc, tag)``.

        The parent is not advanced.
        """
        tag = int(tag) & _MASK64
        key = _splitmix64(tag ^ 0x5851F42D4C957F2D)
        initstate = _splitmix64(self.state ^ key)
        initseq = _splitmix64((self.inc + _splitmix64(key)) & _MASK64)
        return Pcg32.seeded(initstate, initseq)


def rng_from_seed(seed):
    """Root generator for a user-facing 64-bit seed."""
    return Pcg32.seeded(int(seed) & _MASK64)
