"""Single operators on a finite probability space.

A matrix ``T`` acts on functions by ``(Tf)(x) = sum_y T[x, y] f(y)``.  The
classifier decides positivity, ``T1 = 1``, ``T'mu = mu``, the lattice
property ``|Tf| = T|f|`` and multiplicativity, and returns a violating
function for every flag that fails.  Homomorphism and point-map extraction
run their own checks, so their success can be compared against the
classifier rather than merely echoing it.
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import DimensionMismatch, InternalConsistencyError, NotDeterministic, NotMarkovLattice
from .measure_space import FiniteProbabilitySpace, indicator

DEFAULT_TOL = 1e-9
EXHAUSTIVE_LIMIT = 16
N_RANDOM_PROBES = 100
PROBE_SEED = 20240601


@dataclass(frozen=True)
class MarkovOperator:
    matrix: np.ndarray
    space: FiniteProbabilitySpace

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        n = self.space.n
        if m.shape != (n, n):
            raise DimensionMismatch(f"matrix of shape {m.shape} on a space with {n} atoms")
        if not np.all(np.isfinite(m)):
            raise ValueError("matrix has non-finite entries")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def __call__(self, f):
        return self.matrix @ np.asarray(f, dtype=complex)

    def power(self, k: int) -> "MarkovOperator":
        return MarkovOperator(np.linalg.matrix_power(self.matrix, k), self.space)


@dataclass(frozen=True)
class SemiflowMap:
    """A self-map of the atoms, ``atom_map[x]`` being the image of atom x."""

    atom_map: tuple

    def __post_init__(self):
        object.__setattr__(self, "atom_map", tuple(int(y) for y in self.atom_map))

    @property
    def n(self) -> int:
        return len(self.atom_map)

    def __call__(self, x: int) -> int:
        return self.atom_map[x]

    def preimage(self, M) -> frozenset:
        M = set(M)
        return frozenset(x for x, y in enumerate(self.atom_map) if y in M)

    def compose(self, other: "SemiflowMap") -> "SemiflowMap":
        """``self o other``: apply ``other`` first."""
        return SemiflowMap(tuple(self.atom_map[y] for y in other.atom_map))

    def is_measure_preserving(self, space: FiniteProbabilitySpace, tol: float = DEFAULT_TOL) -> bool:
        if self.n != space.n:
            raise DimensionMismatch(f"map on {self.n} atoms, space has {space.n}")
        pushed = np.zeros(space.n)
        np.add.at(pushed, np.asarray(self.atom_map, dtype=int), space.weights)
        return bool(np.all(np.abs(pushed - space.weights) <= tol))


@dataclass(frozen=True)
class MeasureAlgebraHomomorphism:
    """Set map determined by the images of singletons: M -> union of images of {a}, a in M."""

    space: FiniteProbabilitySpace
    singleton_images: tuple

    def __call__(self, M) -> frozenset:
        out: set[int] = set()
        for a in M:
            out |= self.singleton_images[a]
        return frozenset(out)


@dataclass
class OperatorVerdict:
    positive: bool
    row_stochastic: bool
    measure_preserving: bool
    lattice: bool
    multiplicative: bool
    witnesses: dict[str, Any] = field(default_factory=dict)

    @property
    def markov(self) -> bool:
        return self.positive and self.row_stochastic and self.measure_preserving

    @property
    def markov_lattice(self) -> bool:
        return self.markov and self.lattice

    def as_dict(self) -> dict:
        return {
            "positive": self.positive,
            "row_stochastic": self.row_stochastic,
            "measure_preserving": self.measure_preserving,
            "markov": self.markov,
            "lattice": self.lattice,
            "multiplicative": self.multiplicative,
            "witnesses": self.witnesses,
        }


def _matrix(T) -> np.ndarray:
    return T.matrix if isinstance(T, MarkovOperator) else np.asarray(T, dtype=complex)


def koopman_of_map(space: FiniteProbabilitySpace, phi: SemiflowMap) -> MarkovOperator:
    phi = phi if isinstance(phi, SemiflowMap) else SemiflowMap(phi)
    if phi.n != space.n:
        raise DimensionMismatch(f"map on {phi.n} atoms, space has {space.n}")
    m = np.zeros((space.n, space.n))
    m[np.arange(space.n), phi.atom_map] = 1.0
    return MarkovOperator(m, space)


@functools.lru_cache(maxsize=32)
def _probe_functions(n: int) -> np.ndarray:
    """Witness search order, one probe per column: atom indicators, e_a - e_b pairs, random complex f."""
    eye = np.eye(n, dtype=complex)
    cols = [eye[a] for a in range(n)]
    cols += [eye[a] - eye[b] for a, b in itertools.combinations(range(n), 2)]
    rng = np.random.default_rng(PROBE_SEED)
    cols += list(rng.standard_normal((N_RANDOM_PROBES, n)) + 1j * rng.standard_normal((N_RANDOM_PROBES, n)))
    F = np.array(cols).T
    F.setflags(write=False)
    return F


@functools.lru_cache(maxsize=32)
def _all_set_indicators(n: int) -> np.ndarray:
    """Column ``mask`` is the indicator of ``{a : bit a of mask is set}``."""
    masks = np.arange(1 << n)
    S = ((masks[None, :] >> np.arange(n)[:, None]) & 1).astype(float)
    S.setflags(write=False)
    return S


def _structural_lattice(m: np.ndarray, tol: float) -> bool:
    # finite atomic lattice homomorphisms: positive entries, at most one nonzero per row
    if np.any(np.abs(m.imag) > tol) or np.any(m.real < -tol):
        return False
    return bool(np.all((m.real > tol).sum(axis=1) <= 1))


def classify_operator(T: MarkovOperator, tol: float = DEFAULT_TOL) -> OperatorVerdict:
    if tol <= 0:
        raise ValueError("tol must be positive")
    m = _matrix(T)
    space = T.space
    n = space.n
    w: dict[str, Any] = {}

    positive = not (np.any(np.abs(m.imag) > tol) or np.any(m.real < -tol))
    if not positive:
        x, y = np.unravel_index(np.argmax(np.abs(m.imag) + np.maximum(-m.real, 0)), m.shape)
        w["positive"] = {"f": indicator(space, [y]), "entry": [int(x), int(y)]}

    row_sums = m.sum(axis=1)
    row_stochastic = bool(np.all(np.abs(row_sums - 1) <= tol))
    if not row_stochastic:
        w["row_stochastic"] = {"f": np.ones(n, dtype=complex), "Tf": row_sums}

    adj = space.weights @ m
    measure_preserving = bool(np.all(np.abs(adj - space.weights) <= tol))
    if not measure_preserving:
        w["measure_preserving"] = {"T'mu": adj, "mu": space.weights.astype(complex)}

    structural = _structural_lattice(m, tol)
    F = _probe_functions(n)
    gaps = np.abs(np.abs(m @ F) - m @ np.abs(F)).max(axis=0)
    if structural:
        worst = (gaps / np.maximum(1.0, np.abs(F).max(axis=0))).max()
        if worst > 2 * n * tol:
            raise InternalConsistencyError(f"structurally lattice but |Tf| != T|f| by {worst:.3e}")
    else:
        hits = np.flatnonzero(gaps > tol)
        if not hits.size:
            raise InternalConsistencyError("structurally non-lattice but no behavioral witness")
        f = F[:, hits[0]]
        w["lattice"] = {"f": f, "|Tf|": np.abs(m @ f), "T|f|": m @ np.abs(f)}

    # T(1_a 1_b) = T1_a * T1_b: the a = b case is m[:, a] = m[:, a]**2, a != b is 0 = m[:, a] * m[:, b]
    prod = np.einsum("xa,xb->abx", m, m)
    target = np.zeros_like(prod)
    target[np.arange(n), np.arange(n)] = m.T
    gap = np.abs(prod - target).max(axis=2)
    bad = np.argwhere(np.triu(gap > tol))
    multiplicative = not bad.size
    if not multiplicative:
        a, b = (int(i) for i in bad[0])
        w["multiplicative"] = {
            "f": indicator(space, [a]),
            "g": indicator(space, [b]),
            "T(fg)": target[a, b],
            "Tf*Tg": prod[a, b],
        }

    return OperatorVerdict(positive, row_stochastic, measure_preserving, structural, multiplicative, w)


def _witness(T, tol):
    v = classify_operator(T, tol)
    for key in ("lattice", "positive", "row_stochastic", "measure_preserving", "multiplicative"):
        if key in v.witnesses:
            return {key: v.witnesses[key]}
    return None


def extract_homomorphism(T: MarkovOperator, tol: float = DEFAULT_TOL) -> MeasureAlgebraHomomorphism:
    """Read off the set map with ``T 1_M = 1_{phi*(M)}``.

    Every ``T 1_M`` must be an indicator (checked for all M up to 16 atoms,
    on singletons and their disjointness beyond), the images must preserve
    measure and ``phi*(X) = X``.
    """
    m = _matrix(T)
    space = T.space
    n = space.n

    def fail(msg):
        raise NotMarkovLattice(msg, witness=lambda: _witness(T, tol))

    images = []
    for a in range(n):
        col = m[:, a]
        if np.abs(col.imag).max() > tol or np.any(np.minimum(np.abs(col), np.abs(col - 1)) > tol):
            fail(f"T 1_{{{a}}} is not an indicator")
        images.append(frozenset(int(x) for x in np.flatnonzero(np.abs(col - 1) <= tol)))
    hom = MeasureAlgebraHomomorphism(space, tuple(images))

    if n <= EXHAUSTIVE_LIMIT:
        S = _all_set_indicators(n)
        images_mat = np.zeros((n, n))
        for a, img in enumerate(images):
            images_mat[list(img), a] = 1.0
        expected = (images_mat @ S > 0).astype(float)
        bad = np.flatnonzero(np.abs(m @ S - expected).max(axis=0) > tol)
        if bad.size:
            M = [a for a in range(n) if bad[0] >> a & 1]
            fail(f"T 1_M is not 1_phi*(M) for M = {M}")
    else:
        for a, b in itertools.combinations(range(n), 2):
            if images[a] & images[b]:
                fail(f"images of atoms {a} and {b} overlap")
    if hom(range(n)) != frozenset(range(n)):
        fail("phi*(X) != X")
    for a in range(n):
        if abs(space.measure(images[a]) - space.weights[a]) > tol:
            fail(f"mu(phi*({{{a}}})) != mu({{{a}}})")
    return hom


def map_from_operator(T: MarkovOperator, tol: float = DEFAULT_TOL) -> SemiflowMap:
    """Point map phi with ``Tf = f o phi``; the inverse of :func:`koopman_of_map`."""
    m = _matrix(T)
    n = T.space.n
    targets = np.argmax(np.abs(m), axis=1)
    basis = np.zeros_like(m)
    basis[np.arange(n), targets] = 1.0
    bad = np.flatnonzero(np.abs(m - basis).max(axis=1) > tol)
    if bad.size:
        raise NotDeterministic(f"row {int(bad[0])} is not a standard basis vector",
                               witness=lambda: _witness(T, tol))
    phi = SemiflowMap(targets)
    if not phi.is_measure_preserving(T.space, tol):
        raise NotMarkovLattice("induced point map does not preserve the measure",
                               witness=lambda: _witness(T, tol))
    return phi
