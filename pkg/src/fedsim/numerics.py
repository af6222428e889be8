"""Flat parameter-vector arithmetic and seeded random streams.

Every vector in the simulator (model weights, momenta, second moments,
global offsets) is a 1-D float64 ``numpy.ndarray``. The helpers here add the
two guarantees the rest of the package relies on: binary operations refuse
mismatched dimensions, and any non-finite result raises instead of
propagating silently through an adaptive denominator.

Randomness comes from :class:`RngStream`, a thin wrapper around numpy's
counter-based Philox bit generator keyed by ``(seed, stream tag, stream id)``.
"""
from __future__ import annotations

import numpy as np

__all__ = [
    "DimensionError",
    "NonFiniteError",
    "RngStream",
    "as_vector",
    "axpy",
    "check_finite",
    "elementwise_max",
    "hadamard",
    "inv_sqrt",
    "l2_norm_sq",
]


class DimensionError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    pass


def as_vector(values) -> np.ndarray:
    """Copy ``values`` into a fresh, finite, 1-D float64 array."""
    x = np.array(values, dtype=np.float64).reshape(-1)
    return check_finite(x)


def check_finite(x: np.ndarray, what: str = "vector") -> np.ndarray:
    if not np.all(np.isfinite(x)):
        bad = np.flatnonzero(~np.isfinite(x))
        raise NonFiniteError(
            f"{what} has {bad.size} non-finite entries (first at index {bad[0]})"
        )
    return x


def _same_dim(x: np.ndarray, y: np.ndarray) -> None:
    if x.shape != y.shape:
        raise DimensionError(f"dimension mismatch: {x.shape} vs {y.shape}")


def axpy(a: float, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Return ``a * x + y`` as a new vector."""
    if not np.isfinite(a):
        raise NonFiniteError(f"scalar a={a} is not finite")
    _same_dim(x, y)
    return check_finite(a * x + y, "axpy result")


def hadamard(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    _same_dim(x, y)
    return check_finite(x * y, "hadamard result")


def elementwise_max(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    _same_dim(x, y)
    return np.maximum(x, y)


def inv_sqrt(x: np.ndarray) -> np.ndarray:
    """Elementwise ``1 / sqrt(x)``; every entry must be strictly positive.

    A nonpositive entry means the second-moment floor was lost upstream, so
    it is reported rather than turned into ``inf``.
    """
    if np.any(x <= 0.0):
        j = int(np.flatnonzero(x <= 0.0)[0])
        raise ValueError(f"inv_sqrt needs positive entries; x[{j}] = {x[j]!r}")
    return check_finite(1.0 / np.sqrt(x), "inv_sqrt result")


def l2_norm_sq(x: np.ndarray) -> float:
    return float(np.dot(x, x))


# Stream tags. Values are part of the reproducibility contract: changing them
# changes every seeded run.
_TAGS = {"data": 0, "server": 1, "client": 2, "model": 3, "misc": 4}


class RngStream:
    """Reproducible random stream identified by ``(seed, tag, stream_id)``.

    The bit generator is Philox-4x64 keyed through ``numpy.random.SeedSequence``;
    equal identifiers give bit-identical draw sequences on every platform.
    Distribution sampling goes through ``numpy.random.Generator``.
    """

    def __init__(self, seed: int, tag: str = "misc", stream_id: int = 0):
        if tag not in _TAGS:
            raise ValueError(f"unknown stream tag {tag!r}; expected one of {sorted(_TAGS)}")
        if seed < 0 or stream_id < 0:
            raise ValueError("seed and stream_id must be nonnegative")
        self.seed = int(seed)
        self.tag = tag
        self.stream_id = int(stream_id)
        ss = np.random.SeedSequence(self.seed, spawn_key=(_TAGS[tag], self.stream_id))
        self.generator = np.random.Generator(np.random.Philox(ss))

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, tag={self.tag!r}, stream_id={self.stream_id})"

    def child(self, stream_id: int) -> "RngStream":
        """Independent stream under the same seed and tag, e.g. one per round."""
        return RngStream(self.seed, self.tag, self.stream_id * 1_000_003 + stream_id + 1)

    # Thin pass-throughs used across the package.
    def normal(self, loc=0.0, scale=1.0, size=None):
        return self.generator.normal(loc, scale, size)

    def dirichlet(self, alpha, size=None):
        return self.generator.dirichlet(alpha, size)

    def choice(self, a, size=None, replace=True):
        return self.generator.choice(a, size=size, replace=replace)

    def permutation(self, x):
        return self.generator.permutation(x)

    def integers(self, low, high=None, size=None):
        return self.generator.integers(low, high, size=size)

    def random(self, size=None):
        return self.generator.random(size)
