"""Counter-based pseudo-random generator for bit-exact reproducibility.

Every stochastic component in this package (weight init, minibatch order,
dropout masks, data generators, noise injectors) draws from this generator
rather than the platform default, so that a run is fully determined by its
seed on any machine.

The core is the splitmix64 output function applied to a Weyl sequence:
``out_i = mix64(key + (i+1) * GOLDEN)``.  Being a pure function of
(key, counter) it vectorises over numpy uint64 blocks with no sequential
dependency between draws.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_MASK = np.uint64(0xFFFFFFFFFFFFFFFF)

# 2^-53, the spacing of uniform doubles produced from the top 53 bits
_U53 = float(2.0 ** -53)


def mix64(z: int | np.uint64) -> np.uint64:
    """splitmix64 finalizer; bijective on 64-bit integers (wrapping mod 2^64)."""
    with np.errstate(over="ignore"):
        z = np.uint64(int(z) & 0xFFFFFFFFFFFFFFFF)
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        return z ^ (z >> np.uint64(31))


def fnv1a64(text: str) -> int:
    """FNV-1a hash of a UTF-8 string, for deriving stream tags from names."""
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


class Rng:
    """Deterministic stream of uniforms / normals / integers / permutations.

    Identical seeds give bit-identical streams.  ``spawn`` derives an
    independent child stream from an integer or string tag, so concurrent
    consumers (grid cells, per-epsilon noise draws) never share state.
    """

    def __init__(self, seed: int):
        self._key = mix64(seed)
        self._counter = np.uint64(0)

    @property
    def key(self) -> int:
        return int(self._key)

    def spawn(self, tag: int | str) -> "Rng":
        """Child generator whose stream depends only on (seed, tag)."""
        if isinstance(tag, str):
            tag = fnv1a64(tag)
        child = Rng.__new__(Rng)
        with np.errstate(over="ignore"):
            salted = np.uint64(tag & 0xFFFFFFFFFFFFFFFF) * _GOLDEN + _GOLDEN
        child._key = mix64(self._key ^ salted)
        child._counter = np.uint64(0)
        return child

    def _raw(self, n: int) -> np.ndarray:
        with np.errstate(over="ignore"):
            idx = np.arange(int(n), dtype=np.uint64) + self._counter
            self._counter = self._counter + np.uint64(int(n))
            z = (self._key + (idx + np.uint64(1)) * _GOLDEN) & _MASK
            z = (z ^ (z >> np.uint64(30))) * _MIX1
            z = (z ^ (z >> np.uint64(27))) * _MIX2
            return z ^ (z >> np.uint64(31))

    def uniform(self, size=None) -> np.ndarray | float:
        """Uniform float64 in [0, 1)."""
        if size is None:
            return float(self._raw(1)[0] >> np.uint64(11)) * _U53
        shape = (size,) if isinstance(size, int) else tuple(size)
        n = int(np.prod(shape)) if shape else 1
        out = (self._raw(n) >> np.uint64(11)).astype(np.float64) * _U53
        return out.reshape(shape)

    def normal(self, size=None, mean: float = 0.0, sd: float = 1.0):
        """Standard normals via Box-Muller on disjoint uniform pairs."""
        shape = () if size is None else ((size,) if isinstance(size, int) else tuple(size))
        n = int(np.prod(shape)) if shape else 1
        half = (n + 1) // 2
        # u1 in (0, 1] so the log is finite
        u1 = ((self._raw(half) >> np.uint64(11)).astype(np.float64) + 1.0) * _U53
        u2 = (self._raw(half) >> np.uint64(11)).astype(np.float64) * _U53
        r = np.sqrt(-2.0 * np.log(u1))
        theta = (2.0 * np.pi) * u2
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]
        z = mean + sd * z
        return float(z[0]) if size is None else z.reshape(shape)

    def integers(self, high: int, size=None):
        """Integers uniform on [0, high).  Bias from the floor construction
        is O(high / 2^53), negligible for the ranges used here."""
        if high <= 0:
            raise ValueError("high must be positive")
        u = self.uniform(size if size is not None else 1)
        out = np.minimum(np.floor(np.asarray(u) * high), high - 1).astype(np.int64)
        return int(out[0]) if size is None else out

    def permutation(self, n: int) -> np.ndarray:
        """Uniform random permutation of range(n)."""
        return np.argsort(self.uniform(n), kind="stable")

    def choice_without_replacement(self, n: int, k: int) -> np.ndarray:
        """First k entries of a uniform permutation of range(n)."""
        if not 0 <= k <= n:
            raise ValueError(f"cannot choose {k} from {n}")
        return self.permutation(n)[:k]
