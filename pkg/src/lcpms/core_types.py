"""Shared domain types: intervals, interval unions, datasets, kernels, grids.

Everything here is immutable after construction and safe to share across
parallel workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np

__all__ = [
    "ModelFn",
    "Interval",
    "IntervalUnion",
    "Dataset",
    "KernelFamily",
    "KernelSpec",
    "GammaGrid",
    "union_insert",
    "interval_length",
]

# A candidate regressor: a fixed, pure function mapping covariates to
# predictions — (m,) -> (m,) for 1-d covariates, (m, d) -> (m,) otherwise.
ModelFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Interval:
    """Closed symmetric interval [center - half_width, center + half_width].

    half_width may be +inf; that is a legitimate value (it arises when the
    required quantile mass is unreachable), not an error state.
    """

    center: float
    half_width: float

    def __post_init__(self):
        if math.isnan(self.half_width) or self.half_width < 0:
            raise ValueError(f"half_width must be >= 0, got {self.half_width}")

    @property
    def lo(self) -> float:
        return self.center - self.half_width

    @property
    def hi(self) -> float:
        return self.center + self.half_width

    @property
    def length(self) -> float:
        return 2.0 * self.half_width

    def contains(self, y: float) -> bool:
        """Closed membership: |y - center| <= half_width."""
        return abs(y - self.center) <= self.half_width


def interval_length(iv: Interval) -> float:
    """Length of a symmetric interval; +inf half-width yields +inf."""
    return iv.length


@dataclass(frozen=True)
class IntervalUnion:
    """Canonical finite union of disjoint closed intervals.

    parts are (lo, hi) pairs sorted by lo; no two parts overlap or touch
    (touching closed intervals share a point and are merged). Endpoint
    comparisons are exact: all endpoints derive from the same arithmetic,
    so no epsilon is used.
    """

    parts: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        prev_hi = -math.inf
        first = True
        for lo, hi in self.parts:
            if lo > hi:
                raise ValueError(f"empty part ({lo}, {hi})")
            if not first and lo <= prev_hi:
                raise ValueError("parts must be disjoint and sorted")
            prev_hi = hi
            first = False

    @classmethod
    def empty(cls) -> IntervalUnion:
        return cls(())

    @classmethod
    def from_intervals(cls, intervals) -> IntervalUnion:
        u = cls(())
        for iv in intervals:
            u = u.insert(iv.lo, iv.hi)
        return u

    def insert(self, lo: float, hi: float) -> IntervalUnion:
        """Return the canonical union of self and the closed interval [lo, hi]."""
        if math.isnan(lo) or math.isnan(hi) or lo > hi:
            raise ValueError(f"invalid interval ({lo}, {hi})")
        merged = []
        placed = False
        for plo, phi in self.parts:
            if phi < lo or (placed and plo > hi):
                merged.append((plo, phi))
            elif plo > hi and not placed:
                merged.append((lo, hi))
                merged.append((plo, phi))
                placed = True
            else:
                # overlaps (or touches) the pending interval: absorb it
                lo = min(lo, plo)
                hi = max(hi, phi)
        if not placed:
            merged.append((lo, hi))
        merged.sort(key=lambda p: p[0])
        return IntervalUnion(tuple(merged))

    @property
    def measure(self) -> float:
        return float(sum(hi - lo for lo, hi in self.parts))

    def contains(self, y: float) -> bool:
        return any(lo <= y <= hi for lo, hi in self.parts)

    def __len__(self) -> int:
        return len(self.parts)


def union_insert(u: IntervalUnion, iv: Interval | tuple[float, float]) -> IntervalUnion:
    """Insert a closed interval into a union, keeping canonical form."""
    if isinstance(iv, Interval):
        return u.insert(iv.lo, iv.hi)
    lo, hi = iv
    return u.insert(lo, hi)


class _FrozenArrayMixin:
    @staticmethod
    def _freeze(a: np.ndarray) -> np.ndarray:
        a = np.array(a, dtype=np.float64)
        a.flags.writeable = False
        return a


@dataclass(frozen=True)
class Dataset(_FrozenArrayMixin):
    """Calibration pairs (X_i, Y_i). Covariates are vectors; x has shape (n, d).

    1-d covariate input of shape (n,) is accepted and stored as (n, 1).
    Leave-one-out subsets are taken by index downstream; this type never
    copies itself for that.
    """

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2:
            raise ValueError(f"x must be 1- or 2-dimensional, got ndim={x.ndim}")
        y = np.asarray(self.y, dtype=np.float64)
        if y.ndim != 1 or y.shape[0] != x.shape[0]:
            raise ValueError("y must be 1-dimensional with one response per covariate row")
        if x.shape[0] < 1:
            raise ValueError("dataset needs at least one point")
        object.__setattr__(self, "x", self._freeze(x))
        object.__setattr__(self, "y", self._freeze(y))

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def model_input(self) -> np.ndarray:
        """Covariates in the shape model functions expect: (n,) when d == 1."""
        return self.x[:, 0] if self.dim == 1 else self.x


class KernelFamily(Enum):
    EXPONENTIAL = "exponential"
    GAUSSIAN = "gaussian"


@dataclass(frozen=True)
class KernelSpec:
    """Localizer family and bandwidth.

    exponential: weight = exp(-||x - x'||_2 / h)
    gaussian:    weight = exp(-||x - x'||_2^2 / h^2)

    Weights lie in (0, 1] before underflow; weight(x, x) == 1.
    """

    family: KernelFamily
    bandwidth: float

    def __post_init__(self):
        if not (self.bandwidth > 0):
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth}")
        if not isinstance(self.family, KernelFamily):
            object.__setattr__(self, "family", KernelFamily(self.family))

    def _weights_from_sqdist(self, d2: np.ndarray) -> np.ndarray:
        h = self.bandwidth
        if self.family is KernelFamily.GAUSSIAN:
            return np.exp(-(d2 / (h * h)))
        return np.exp(-(np.sqrt(d2) / h))

    def weights_to_point(self, xs: np.ndarray, x0: np.ndarray) -> np.ndarray:
        """Raw kernel weights of each row of xs (n, d) against x0 (d,)."""
        diff = xs - x0[None, :]
        d2 = np.einsum("ij,ij->i", diff, diff)
        return self._weights_from_sqdist(d2)

    def pairwise(self, xs: np.ndarray) -> np.ndarray:
        """Raw kernel weight matrix W with W[j, i] = weight(xs[j], xs[i])."""
        diff = xs[:, None, :] - xs[None, :, :]
        d2 = np.einsum("jid,jid->ji", diff, diff)
        return self._weights_from_sqdist(d2)


@dataclass(frozen=True)
class GammaGrid(_FrozenArrayMixin):
    """Strictly increasing miscoverage levels, all in the open interval (0, 1)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1 or v.size == 0:
            raise ValueError("grid must be a nonempty 1-d sequence")
        if not (np.all(v > 0.0) and np.all(v < 1.0)):
            raise ValueError("grid values must lie strictly inside (0, 1)")
        if not np.all(np.diff(v) > 0):
            raise ValueError("grid values must be strictly increasing")
        object.__setattr__(self, "values", self._freeze(v))

    @classmethod
    def from_range(cls, lo: float, hi: float, step: float) -> GammaGrid:
        if step <= 0:
            raise ValueError("step must be positive")
        count = int(math.floor((hi - lo) / step + 0.5)) + 1
        return cls(lo + step * np.arange(count))

    @classmethod
    def default(cls) -> GammaGrid:
        return cls.from_range(0.01, 0.99, 0.01)

    @property
    def size(self) -> int:
        return self.values.size

    def __iter__(self):
        return iter(self.values)
