"""Exact probability distributions over finite, integer-indexed domains.

A :class:`FiniteDist` stores an ndarray of probabilities. Its shape is the
domain: a 1-d array is a plain domain ``0..size-1``, an ``(n1, ..., nk)``
array is the product domain with row-major flattening (last coordinate
fastest). All objects are immutable; sampling takes an explicit
``numpy.random.Generator``.
"""

from __future__ import annotations

import itertools
import math
from typing import Iterator, Sequence

import numpy as np

NORMALIZATION_TOL = 1e-9


class DistributionError(ValueError):
    """Raised for invalid probability vectors or ill-posed operations."""


def _frozen(arr) -> np.ndarray:
    out = np.array(arr, dtype=np.float64)
    out.setflags(write=False)
    return out


class FiniteDist:
    """Probability vector over a finite (possibly multi-coordinate) domain."""

    __slots__ = ("_probs",)

    def __init__(self, probs):
        probs = _frozen(probs)
        if probs.ndim == 0 or probs.size == 0:
            raise DistributionError("domain must contain at least one element")
        # one pass each: a non-finite entry makes the sum non-finite
        total = float(probs.sum())
        if not math.isfinite(total):
            raise DistributionError("probabilities must be finite")
        lowest = float(probs.min())
        if lowest < 0:
            raise DistributionError(
                f"negative probability {lowest!r} at index "
                f"{np.unravel_index(int(np.argmin(probs)), probs.shape)}"
            )
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise DistributionError(f"probabilities sum to {total!r}, expected 1")
        self._probs = probs

    @classmethod
    def normalized(cls, weights) -> FiniteDist:
        """Build a distribution proportional to non-negative ``weights``."""
        w = np.asarray(weights, dtype=np.float64)
        if np.any(w < 0):
            raise DistributionError("weights must be non-negative")
        total = w.sum()
        if not total > 0:
            raise DistributionError("cannot normalize zero total mass")
        return cls(w / total)

    @classmethod
    def point_mass(cls, shape, index) -> FiniteDist:
        shape = (shape,) if np.isscalar(shape) else tuple(shape)
        probs = np.zeros(shape)
        probs[index] = 1.0
        return cls(probs)

    @classmethod
    def uniform(cls, shape) -> FiniteDist:
        shape = (shape,) if np.isscalar(shape) else tuple(shape)
        return cls(np.full(shape, 1.0 / int(np.prod(shape))))

    @property
    def probs(self) -> np.ndarray:
        return self._probs

    @property
    def shape(self) -> tuple[int, ...]:
        return self._probs.shape

    @property
    def size(self) -> int:
        return self._probs.size

    def __getitem__(self, index) -> float:
        return float(self._probs[index])

    def __len__(self) -> int:
        return self.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, FiniteDist):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self._probs, other._probs)

    def __hash__(self):
        return hash((self.shape, self._probs.tobytes()))

    def __repr__(self) -> str:
        return f"FiniteDist({np.array2string(self._probs, precision=6)})"

    def support(self) -> Iterator[tuple[int, ...]]:
        """Yield indices with positive mass in row-major order."""
        for flat in np.flatnonzero(self._probs.ravel() > 0):
            yield tuple(int(x) for x in np.unravel_index(flat, self.shape))


class ProductDist:
    """Independent coordinates, one :class:`FiniteDist` factor per coordinate."""

    __slots__ = ("_factors",)

    def __init__(self, factors: Sequence[FiniteDist]):
        factors = tuple(f if isinstance(f, FiniteDist) else FiniteDist(f) for f in factors)
        if not factors:
            raise DistributionError("product needs at least one factor")
        for f in factors:
            if len(f.shape) != 1:
                raise DistributionError("product factors must be 1-d distributions")
        self._factors = factors

    @property
    def factors(self) -> tuple[FiniteDist, ...]:
        return self._factors

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(f.size for f in self._factors)

    def prob(self, point: Sequence[int]) -> float:
        if len(point) != len(self._factors):
            raise DistributionError("point has wrong number of coordinates")
        p = 1.0
        for f, x in zip(self._factors, point):
            p *= f.probs[x]
        return float(p)

    def joint(self) -> FiniteDist:
        """Dense joint distribution (row-major, last coordinate fastest)."""
        out = np.ones(())
        for f in self._factors:
            out = np.multiply.outer(out, f.probs)
        return FiniteDist(out)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ProductDist):
            return NotImplemented
        return self._factors == other._factors

    def __repr__(self) -> str:
        return f"ProductDist({list(self._factors)!r})"


class MixtureOfProducts:
    """Uniform mixture of ``T`` product distributions over a common domain."""

    __slots__ = ("_components",)

    def __init__(self, components: Sequence[ProductDist]):
        components = tuple(components)
        if not components:
            raise DistributionError("mixture needs at least one component")
        shape = components[0].shape
        for c in components[1:]:
            if c.shape != shape:
                raise DistributionError(
                    f"component domain {c.shape} differs from {shape}"
                )
        self._components = components

    @property
    def components(self) -> tuple[ProductDist, ...]:
        return self._components

    @property
    def rank(self) -> int:
        return len(self._components)

    @property
    def shape(self) -> tuple[int, ...]:
        return self._components[0].shape

    def prob(self, point: Sequence[int]) -> float:
        return sum(c.prob(point) for c in self._components) / self.rank

    def joint(self) -> FiniteDist:
        total = sum(c.joint().probs for c in self._components)
        return FiniteDist(total / self.rank)


def _check_same_domain(p: FiniteDist, q: FiniteDist) -> None:
    if p.shape != q.shape:
        raise DistributionError(f"domain mismatch: {p.shape} vs {q.shape}")


def tv_distance(p: FiniteDist, q: FiniteDist) -> float:
    """Total variation distance ``0.5 * sum |p - q|``."""
    _check_same_domain(p, q)
    return float(0.5 * np.abs(p.probs - q.probs).sum())


def marginal(joint: FiniteDist, axis: int) -> FiniteDist:
    """Marginal of ``joint`` on coordinate ``axis`` (all other axes summed out)."""
    ndim = len(joint.shape)
    if not -ndim <= axis < ndim:
        raise DistributionError(f"axis {axis} out of range for {ndim}-d domain")
    axis %= ndim
    others = tuple(a for a in range(ndim) if a != axis)
    return FiniteDist(joint.probs.sum(axis=others))


def condition(joint: FiniteDist, x: int, axis: int = 0) -> FiniteDist:
    """Distribution of the remaining coordinates given coordinate ``axis`` equals ``x``.

    Raises :class:`DistributionError` if ``x`` has zero marginal mass.
    """
    ndim = len(joint.shape)
    if ndim < 2:
        raise DistributionError("condition needs a joint over at least two coordinates")
    axis %= ndim
    if not 0 <= x < joint.shape[axis]:
        raise DistributionError(f"coordinate {x} out of range on axis {axis}")
    row = np.take(joint.probs, x, axis=axis)
    mass = row.sum()
    if mass <= 0:
        raise DistributionError(
            f"cannot condition on axis {axis} = {x}: zero marginal probability"
        )
    return FiniteDist(row / mass)


def sample(d: FiniteDist, rng: np.random.Generator, size: int | None = None):
    """Draw from ``d``. Returns an int for 1-d domains, else an index tuple.

    With ``size`` given, returns an integer array of shape ``(size,)`` for
    1-d domains or ``(size, ndim)`` otherwise.
    """
    flat = d.probs.ravel()
    cdf = np.cumsum(flat)
    cdf[-1] = 1.0
    n = 1 if size is None else size
    u = rng.random(n)
    idx = np.searchsorted(cdf, u, side="right")
    # zero-mass trailing entries are never selected: searchsorted lands on the
    # first entry whose cumulative mass exceeds u
    idx = np.minimum(idx, flat.size - 1)
    if len(d.shape) == 1:
        return int(idx[0]) if size is None else idx
    coords = np.stack(np.unravel_index(idx, d.shape), axis=-1)
    return tuple(int(c) for c in coords[0]) if size is None else coords


def behaviorize(mixed: FiniteDist) -> ProductDist:
    """Product of the per-coordinate marginals of a distribution over tuples."""
    return ProductDist([marginal(mixed, a) for a in range(len(mixed.shape))])


def enumerate_domain(shape: Sequence[int]) -> Iterator[tuple[int, ...]]:
    return itertools.product(*(range(s) for s in shape))
