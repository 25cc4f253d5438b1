"""Dense truncated tensor algebra over R^d.

An element is stored level by level: the degree-n component is an ndarray of
shape (d,)*n (degree 0 is a scalar).  The graded product truncates at the
stored level, which is all the signature machinery downstream needs.  Values
are immutable after construction, so they can be shared freely.
"""

from __future__ import annotations

import math
from functools import lru_cache
from itertools import permutations

import numpy as np

# Supported envelope: dense storage stays cache friendly up to d**p = 16384.
MAX_DIM = 4
MAX_LEVEL = 7


class TruncatedTensor:
    """One element of the step-p truncated tensor algebra over R^d."""

    __slots__ = ("dim", "level", "data")

    def __init__(self, dim: int, level: int, data):
        if not 1 <= dim <= MAX_DIM:
            raise ValueError(f"dim={dim} outside supported range 1..{MAX_DIM}")
        if not 1 <= level <= MAX_LEVEL:
            raise ValueError(f"level={level} outside supported range 1..{MAX_LEVEL}")
        if len(data) != level + 1:
            raise ValueError(f"expected {level + 1} level arrays, got {len(data)}")
        arrays = []
        for n, entry in enumerate(data):
            arr = np.array(entry, dtype=float)
            if arr.shape != (dim,) * n:
                raise ValueError(
                    f"level {n} entry has shape {arr.shape}, expected {(dim,) * n}"
                )
            arr.setflags(write=False)
            arrays.append(arr)
        self.dim = dim
        self.level = level
        self.data = tuple(arrays)

    @classmethod
    def identity(cls, dim: int, level: int) -> "TruncatedTensor":
        """Unit of the algebra: scalar part 1, all higher levels 0."""
        data = [np.ones(()) if n == 0 else np.zeros((dim,) * n) for n in range(level + 1)]
        return cls(dim, level, data)

    @property
    def scalar(self) -> float:
        return float(self.data[0])

    def is_group_like(self, atol: float = 1e-12) -> bool:
        """Scalar part equal to 1 (checked, never forced)."""
        return abs(self.scalar - 1.0) <= atol

    def max_abs(self) -> float:
        return max(float(np.max(np.abs(a))) if a.size else 0.0 for a in self.data)

    def __repr__(self) -> str:
        return f"TruncatedTensor(dim={self.dim}, level={self.level}, scalar={self.scalar:g})"


def tensor_mul(a: TruncatedTensor, b: TruncatedTensor) -> TruncatedTensor:
    """Graded (Chen) product: level n collects sum_k a^(n-k) (x) b^(k)."""
    if a.dim != b.dim or a.level != b.level:
        raise ValueError(
            f"shape mismatch: ({a.dim},{a.level}) vs ({b.dim},{b.level})"
        )
    out = []
    for n in range(a.level + 1):
        acc = np.multiply.outer(a.data[n], b.data[0])
        for k in range(1, n + 1):
            acc = acc + np.multiply.outer(a.data[n - k], b.data[k])
        out.append(acc)
    return TruncatedTensor(a.dim, a.level, out)


def tensor_inverse(a: TruncatedTensor) -> TruncatedTensor:
    """Multiplicative inverse, exact in the truncated algebra.

    Writing a = a0 (1 + x) with x of degree >= 1, the Neumann series for
    (1 + x)^{-1} terminates at the truncation level because x is nilpotent.
    """
    a0 = a.scalar
    if a0 == 0.0:
        raise ValueError("element with zero scalar part is not invertible")
    x = TruncatedTensor(
        a.dim,
        a.level,
        [np.zeros(())] + [-arr / a0 for arr in a.data[1:]],
    )
    acc = TruncatedTensor.identity(a.dim, a.level)
    term = acc
    for _ in range(a.level):
        term = tensor_mul(term, x)
        acc = TruncatedTensor(
            a.dim, a.level, [u + v for u, v in zip(acc.data, term.data)]
        )
    return TruncatedTensor(a.dim, a.level, [arr / a0 for arr in acc.data])


def segment_signature(delta_x, level: int) -> TruncatedTensor:
    """Signature of a straight segment with increment delta_x.

    The iterated integrals of a linear path close to tensor powers, so the
    result is the exponential exp(delta_x): level n equals delta_x^{(x)n}/n!.
    """
    dx = np.atleast_1d(np.asarray(delta_x, dtype=float))
    if dx.ndim != 1:
        raise ValueError("delta_x must be a vector")
    data = [np.ones(())]
    for n in range(1, level + 1):
        data.append(np.multiply.outer(data[-1], dx) / n)
    return TruncatedTensor(dx.shape[0], level, data)


@lru_cache(maxsize=None)
def _perms(n: int):
    return tuple(permutations(range(n)))


def symmetrize(a: TruncatedTensor, n: int) -> np.ndarray:
    """Average of the level-n entry over all index permutations."""
    if not 1 <= n <= a.level:
        raise ValueError(f"level index {n} out of range 1..{a.level}")
    return symmetrize_array(a.data[n], n)


def symmetrize_array(arr: np.ndarray, n: int) -> np.ndarray:
    """Symmetrize the trailing n axes of ``arr`` (leading axes are batch)."""
    if n <= 1:
        return np.array(arr, dtype=float)
    lead = arr.ndim - n
    acc = np.zeros_like(arr, dtype=float)
    for perm in _perms(n):
        axes = tuple(range(lead)) + tuple(lead + p for p in perm)
        acc += np.transpose(arr, axes)
    return acc / math.factorial(n)


def max_abs_diff(a: TruncatedTensor, b: TruncatedTensor) -> float:
    """Max-norm distance between two elements, over all levels."""
    if a.dim != b.dim or a.level != b.level:
        raise ValueError("shape mismatch")
    return max(
        float(np.max(np.abs(u - v))) if u.size else abs(float(u) - float(v))
        for u, v in zip(a.data, b.data)
    )
