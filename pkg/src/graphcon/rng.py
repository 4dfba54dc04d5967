"""Deterministic random streams.

The generator is PCG64 (O'Neill, 2014; the XSL-RR 128/64 variant shipped by
numpy), initialised through ``numpy.random.SeedSequence(seed)``. Only its raw
64-bit output is used; the float transforms below are defined here so that
streams do not depend on numpy's distribution code:

* uniform: ``(x >> 11) * 2**-53`` in ``[0, 1)``
* normal: Box-Muller on pairs of uniforms, cosine branch first

Child streams for sweeps come from :func:`derive_seed`, which folds keys into
the parent seed with the SplitMix64 finaliser.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


def derive_seed(seed: int, *keys) -> int:
    """Child seed for ``keys`` (ints or strings), stable across platforms."""
    h = splitmix64(int(seed) & _MASK)
    for k in keys:
        if isinstance(k, str):
            for b in k.encode("utf-8"):
                h = splitmix64(h ^ b)
            h = splitmix64(h ^ 0xFF)
        else:
            h = splitmix64(h ^ (int(k) & _MASK))
    return h


class Rng:
    def __init__(self, seed: int):
        self.seed = int(seed)
        self._bits = np.random.PCG64(np.random.SeedSequence(self.seed & _MASK))

    def raw(self, n: int) -> np.ndarray:
        return self._bits.random_raw(n).astype(np.uint64)

    def uniform(self, low=0.0, high=1.0, size=None) -> np.ndarray:
        shape = () if size is None else (size if isinstance(size, tuple) else (size,))
        n = int(np.prod(shape, dtype=np.int64))
        u = (self.raw(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53
        out = low + (high - low) * u
        return out.reshape(shape) if shape else float(out[0])

    def normal(self, mean=0.0, std=1.0, size=None) -> np.ndarray:
        shape = () if size is None else (size if isinstance(size, tuple) else (size,))
        n = int(np.prod(shape, dtype=np.int64))
        k = (n + 1) // 2
        u = self.uniform(size=2 * k).reshape(k, 2)
        r = np.sqrt(-2.0 * np.log1p(-u[:, 0]))
        theta = 2.0 * np.pi * u[:, 1]
        z = np.column_stack([r * np.cos(theta), r * np.sin(theta)]).ravel()[:n]
        out = mean + std * z
        return out.reshape(shape) if shape else float(out[0])

    def integers(self, n: int, size=None) -> np.ndarray:
        """Uniform integers in ``[0, n)``."""
        u = self.uniform(size=size if size is not None else 1)
        out = np.minimum((u * n).astype(np.int64), n - 1)
        return out if size is not None else int(out[0])

    def permutation(self, n: int) -> np.ndarray:
        return np.argsort(self.uniform(size=n), kind="stable")

    def spawn(self, *keys) -> "Rng":
        return Rng(derive_seed(self.seed, *keys))


def rng(seed: int) -> Rng:
    return Rng(seed)
