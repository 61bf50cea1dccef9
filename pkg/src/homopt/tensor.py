"""Dense tensors, last-dimension slicing and factor sets.

Tensors are plain ``float64`` numpy arrays in C (row-major) order, so
``vec(x)`` is ``x.ravel()`` with the first dimension varying slowest.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Raised when tensor shapes are inconsistent."""


def as_tensor(data, shape=None) -> np.ndarray:
    """Validate ``data`` and return it as a finite float64 C-ordered array.

    When ``shape`` is given, the number of entries must equal its
    cardinality and the result is reshaped to it.
    """
    x = np.array(data, dtype=np.float64, order="C")
    if shape is not None:
        shape = tuple(int(d) for d in shape)
        if any(d < 1 for d in shape):
            raise ShapeError(f"extents must be positive, got {shape}")
        if x.size != cardinality(shape):
            raise ShapeError(
                f"{x.size} entries cannot fill shape {shape} "
                f"(cardinality {cardinality(shape)})"
            )
        x = x.reshape(shape)
    if not np.all(np.isfinite(x)):
        raise ValueError("tensor entries must be finite")
    return x


def cardinality(shape: Sequence[int]) -> int:
    return int(np.prod(shape, dtype=np.int64)) if len(shape) else 1


def slice_last(x: np.ndarray, i: int) -> np.ndarray:
    """Return slice ``i`` of ``x`` along its last dimension."""
    n = x.shape[-1]
    if not 0 <= i < n:
        raise IndexError(f"slice index {i} out of range for last extent {n}")
    return x[..., i].copy()


def concat_last(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Concatenate two tensors along the last dimension."""
    if x.shape[:-1] != y.shape[:-1]:
        raise ShapeError(
            f"cannot concatenate shapes {x.shape} and {y.shape} along the last dimension"
        )
    return np.concatenate([x, y], axis=-1)


def inner(x: np.ndarray, y: np.ndarray) -> float:
    """``vec(x)^T vec(y)``."""
    if np.shape(x) != np.shape(y):
        raise ShapeError(f"inner product of shapes {np.shape(x)} and {np.shape(y)}")
    return float(np.dot(np.ravel(x), np.ravel(y)))


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, order="C")
    a.flags.writeable = False
    return a


class FactorSet:
    """A size-``r`` set of ``K`` factor tensors sharing the last extent ``r``.

    Factors are stored as read-only copies. ``fs[k]`` is factor ``k`` and
    ``fs.slices(i)`` the ``K`` slices at index ``i``.
    """

    __slots__ = ("_factors",)

    def __init__(self, factors: Iterable):
        factors = tuple(_frozen(f) for f in factors)
        if not factors:
            raise ShapeError("a factor set needs at least one factor")
        r = factors[0].shape[-1] if factors[0].ndim else 0
        for f in factors:
            if f.ndim == 0 or f.shape[-1] != r:
                raise ShapeError(
                    f"all factors must share the last extent; got "
                    f"{[g.shape for g in factors]}"
                )
        if r < 1:
            raise ShapeError("a factor set needs r >= 1")
        for f in factors:
            if not np.all(np.isfinite(f)):
                raise ValueError("factor entries must be finite")
        self._factors = factors

    @classmethod
    def zeros(cls, slice_shapes, r: int = 1) -> "FactorSet":
        return cls(np.zeros((*s, r)) for s in slice_shapes)

    @classmethod
    def random(cls, slice_shapes, r: int, rng: np.random.Generator, scale=0.5):
        return cls(rng.uniform(-scale, scale, size=(*s, r)) for s in slice_shapes)

    @property
    def r(self) -> int:
        return self._factors[0].shape[-1]

    @property
    def K(self) -> int:
        return len(self._factors)

    @property
    def slice_shapes(self):
        return tuple(f.shape[:-1] for f in self._factors)

    def __len__(self):
        return len(self._factors)

    def __getitem__(self, k):
        return self._factors[k]

    def __iter__(self):
        return iter(self._factors)

    def __repr__(self):
        return f"FactorSet(K={self.K}, r={self.r}, shapes={[f.shape for f in self]})"

    def slices(self, i: int):
        return [slice_last(f, i) for f in self._factors]

    def is_zero_slice(self, i: int) -> bool:
        return all(not np.any(f[..., i]) for f in self._factors)

    def zero_slices(self):
        nz = np.zeros(self.r, dtype=bool)
        for f in self._factors:
            nz |= np.any(f.reshape(-1, self.r) != 0, axis=0)
        return np.flatnonzero(~nz)

    def concat(self, other: "FactorSet") -> "FactorSet":
        if other.K != self.K:
            raise ShapeError(f"cannot concatenate {self.K} factors with {other.K}")
        return FactorSet(concat_last(a, b) for a, b in zip(self, other))

    def take(self, idx) -> "FactorSet":
        idx = np.asarray(idx)
        return FactorSet(f[..., idx] for f in self)

    def scale_slices(self, coef) -> "FactorSet":
        """Multiply slice ``i`` of every factor by ``coef[i]``."""
        coef = np.asarray(coef, dtype=np.float64)
        return FactorSet(f * coef for f in self)

    def with_slice(self, i: int, slices) -> "FactorSet":
        out = [np.array(f) for f in self]
        for f, s in zip(out, slices):
            f[..., i] = s
        return FactorSet(out)

    def equals(self, other: "FactorSet") -> bool:
        return self.K == other.K and all(
            a.shape == b.shape and np.array_equal(a, b) for a, b in zip(self, other)
        )
