"""Finite probability spaces and the function algebra on their atoms.

Every atom carries strictly positive weight, so two sets agree almost
everywhere only if they are equal; the measure algebra is then the power set
of the atoms.  Sets are represented as ``frozenset`` of atom indices and
functions as 1-d complex numpy arrays, one value per atom.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    InvalidExponent,
    NonPositiveWeight,
    WeightsDoNotSumToOne,
)

WEIGHT_TOL = 1e-12

MeasureAlgebraSet = frozenset


@dataclass(frozen=True)
class FiniteProbabilitySpace:
    weights: np.ndarray
    atom_labels: tuple = field(default=())

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("weights must be a nonempty 1-d sequence")
        if np.any(~np.isfinite(w)) or np.any(w <= 0):
            bad = int(np.flatnonzero(~(w > 0))[0])
            raise NonPositiveWeight(f"atom {bad} has weight {w[bad]!r}; weights must be > 0")
        total = math.fsum(w)
        if abs(total - 1.0) > WEIGHT_TOL:
            raise WeightsDoNotSumToOne(f"weights sum to {total!r}")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        labels = tuple(self.atom_labels) or tuple(range(w.size))
        if len(labels) != w.size:
            raise DimensionMismatch(f"{len(labels)} labels for {w.size} atoms")
        object.__setattr__(self, "atom_labels", labels)

    @property
    def n(self) -> int:
        return self.weights.size

    def measure(self, M: Iterable[int]) -> float:
        return math.fsum(self.weights[sorted(M)])

    def all_sets(self):
        """Every element of the measure algebra (all 2**n subsets)."""
        n = self.n
        for mask in range(1 << n):
            yield frozenset(i for i in range(n) if mask >> i & 1)

    def __eq__(self, other):
        if not isinstance(other, FiniteProbabilitySpace):
            return NotImplemented
        return self.atom_labels == other.atom_labels and np.array_equal(self.weights, other.weights)

    def __hash__(self):
        return hash((self.atom_labels, self.weights.tobytes()))


def new_space(weights: Sequence[float], labels: Sequence | None = None) -> FiniteProbabilitySpace:
    return FiniteProbabilitySpace(np.asarray(weights, dtype=float), tuple(labels or ()))


def uniform_space(n: int) -> FiniteProbabilitySpace:
    return new_space(np.full(n, 1.0 / n))


def as_function(space: FiniteProbabilitySpace, values) -> np.ndarray:
    f = np.asarray(values, dtype=complex)
    if f.shape != (space.n,):
        raise DimensionMismatch(f"function of shape {f.shape} on a space with {space.n} atoms")
    return f


def integral(space: FiniteProbabilitySpace, f) -> complex:
    f = as_function(space, f)
    return complex(np.dot(space.weights, f))


def lp_norm(space: FiniteProbabilitySpace, f, p: float = 2.0) -> float:
    if not (p >= 1):
        raise InvalidExponent(f"p must be >= 1 or inf, got {p!r}")
    a = np.abs(as_function(space, f))
    if math.isinf(p):
        return float(a.max())
    return float(np.dot(space.weights, a**p) ** (1.0 / p))


def pointwise_product(f, g) -> np.ndarray:
    f = np.asarray(f, dtype=complex)
    g = np.asarray(g, dtype=complex)
    if f.shape != g.shape:
        raise DimensionMismatch(f"shapes {f.shape} and {g.shape}")
    return f * g


def indicator(space: FiniteProbabilitySpace, M) -> np.ndarray:
    """Indicator of ``M``, given as atom indices or a boolean mask."""
    M = np.asarray(list(M) if not isinstance(M, np.ndarray) else M)
    out = np.zeros(space.n, dtype=complex)
    if M.dtype == bool:
        if M.shape != (space.n,):
            raise DimensionMismatch(f"mask of shape {M.shape} on {space.n} atoms")
        out[M] = 1.0
    elif M.size:
        idx = M.astype(int)
        if idx.min() < 0 or idx.max() >= space.n:
            raise DimensionMismatch(f"atom indices must lie in 0..{space.n - 1}")
        out[idx] = 1.0
    return out


def support(f, tol: float = 0.0) -> frozenset:
    return frozenset(int(i) for i in np.flatnonzero(np.abs(f) > tol))


def generated_partition(space: FiniteProbabilitySpace, fs, tol: float = 1e-9) -> list[tuple[int, ...]]:
    """Coarsest partition of the atoms on whose cells every f in ``fs`` is constant.

    Atoms x, y are merged when |f(x) - f(y)| <= tol for every f; the cells are
    the transitive closure of that relation.  Functions measurable with
    respect to the result are exactly the algebra generated by ``fs``.
    """
    n = space.n
    F = np.array([as_function(space, f) for f in fs], dtype=complex).reshape(-1, n)
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for x in range(n):
        for y in range(x + 1, n):
            if np.all(np.abs(F[:, x] - F[:, y]) <= tol):
                rx, ry = find(x), find(y)
                if rx != ry:
                    parent[max(rx, ry)] = min(rx, ry)
    cells: dict[int, list[int]] = {}
    for x in range(n):
        cells.setdefault(find(x), []).append(x)
    return sorted((tuple(c) for c in cells.values()), key=lambda c: c[0])
