"""Compact models of Markov lattice operators at finite scale.

The full function algebra on n atoms is C(K) for K the atom set itself, so
the Gelfand spectrum needs no construction: K is the atoms, Phi relabels
coordinates, psi is the point map of the operator and nu the transported
measure.  The model's defining properties (Phi an algebra isomorphism,
intertwining, measure transport, invariance of nu) are still checked
independently.

Only single operators and their iterates are modelled here.  A continuous
Markov lattice semigroup on a finite space is constant, so continuous-time
content lives in :mod:`koopman_lab.spectral_flow`, where K is the torus.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .checks import CheckResult
from .errors import DimensionMismatch, InternalConsistencyError, NotMarkovLattice
from .markov_operators import (
    DEFAULT_TOL,
    EXHAUSTIVE_LIMIT,
    MarkovOperator,
    SemiflowMap,
    classify_operator,
    map_from_operator,
)
from .measure_space import FiniteProbabilitySpace, as_function, generated_partition, indicator
from .semigroup_engine import DEFAULT_QUAD_STEPS, orbit_integral


@dataclass(frozen=True)
class TopologicalModel:
    K: tuple
    psi: SemiflowMap
    nu: np.ndarray
    phi: tuple  # atom x is sent to point phi[x] of K

    def __post_init__(self):
        n = len(self.K)
        if self.psi.n != n or len(self.nu) != n or len(self.phi) != n:
            raise DimensionMismatch("K, psi, nu and phi must have matching sizes")
        if sorted(self.phi) != list(range(n)):
            raise ValueError("phi must be a bijection onto K")
        nu = np.asarray(self.nu, dtype=float)
        nu.setflags(write=False)
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "phi", tuple(int(p) for p in self.phi))

    def transport(self, f) -> np.ndarray:
        """Phi: functions on atoms -> functions on K."""
        f = np.asarray(f, dtype=complex)
        g = np.empty_like(f)
        g[list(self.phi)] = f
        return g

    def pull_back(self, g) -> np.ndarray:
        """Phi^{-1}."""
        return np.asarray(g, dtype=complex)[list(self.phi)]

    def koopman(self, g) -> np.ndarray:
        """``g o psi`` on K."""
        return np.asarray(g, dtype=complex)[list(self.psi.atom_map)]

    def as_dict(self) -> dict:
        return {"K": list(self.K), "psi": list(self.psi.atom_map), "nu": self.nu, "phi": list(self.phi)}


def verify_model_isomorphism(model: TopologicalModel, T: MarkovOperator, tol: float = 0.0) -> CheckResult:
    """Residuals of the four model properties; passes iff the largest is <= tol.

    Intertwining is measured in L1 on K with the transported atom weights,
    so a wrong psi costs at least the smallest atom weight.
    """
    space = T.space
    n = space.n
    if len(model.K) != n:
        raise DimensionMismatch(f"model with {len(model.K)} points for {n} atoms")
    m = T.matrix
    eye = np.eye(n, dtype=complex)
    w_K = model.transport(space.weights).real

    mult = float(np.abs(model.transport(np.ones(n)) - 1).max())
    for a in range(n):
        for b in range(a, n):
            gap = model.transport(eye[a] * eye[b]) - model.transport(eye[a]) * model.transport(eye[b])
            mult = max(mult, float(np.abs(gap).max()))

    inter = 0.0
    for a in range(n):
        gap = model.transport(m @ eye[a]) - model.koopman(model.transport(eye[a]))
        inter = max(inter, math.fsum(w_K * np.abs(gap)))

    transport = 0.0
    for p in range(n):
        g = eye[p]
        lhs = math.fsum((space.weights * model.pull_back(g)).real)
        rhs = math.fsum((model.nu * g).real)
        transport = max(transport, abs(lhs - rhs))

    invariance = 0.0
    if n <= EXHAUSTIVE_LIMIT:
        sets = (frozenset(i for i in range(n) if mask >> i & 1) for mask in range(1 << n))
    else:
        sets = (frozenset([p]) for p in range(n))
    for M in sets:
        pre = model.psi.preimage(M)
        gap = abs(math.fsum(model.nu[sorted(pre)]) - math.fsum(model.nu[sorted(M)]))
        invariance = max(invariance, gap)

    parts = {"multiplicativity": mult, "intertwining": inter,
             "measure_transport": transport, "invariance": invariance}
    worst = max(parts.values())
    witness = None if worst <= tol else {"component": max(parts, key=parts.get), "residual": worst}
    return CheckResult(worst <= tol, witness, worst, details=parts)


def build_finite_model(space: FiniteProbabilitySpace, T: MarkovOperator, tol: float = DEFAULT_TOL) -> TopologicalModel:
    verdict = classify_operator(T, tol)
    if not verdict.markov_lattice:
        bad = next(k for k in ("lattice", "positive", "row_stochastic", "measure_preserving") if k in verdict.witnesses)
        raise NotMarkovLattice(f"operator is not Markov lattice ({bad} fails)", witness={bad: verdict.witnesses[bad]})
    psi = map_from_operator(T, tol)
    model = TopologicalModel(K=tuple(space.atom_labels), psi=psi, nu=space.weights.copy(),
                             phi=tuple(range(space.n)))
    check = verify_model_isomorphism(model, T, tol)
    if not check.passed:
        raise InternalConsistencyError(f"model fails its own invariants: {check.details}")
    return model


def _discrete_orbit_integral(T: MarkovOperator, t: float, f) -> np.ndarray:
    """``int_0^t T^{floor(s)} f ds`` for the iterated semigroup of a single operator."""
    whole = math.floor(t)
    total = np.zeros_like(f)
    g = f.copy()
    for _ in range(whole):
        total = total + g
        g = T.matrix @ g
    return total + (t - whole) * g


@dataclass
class GeneratedAlgebra:
    functions: list
    partition: list
    separating: bool

    def as_dict(self) -> dict:
        return {
            "partition": [list(c) for c in self.partition],
            "separating": self.separating,
            "metrizable": True,
            "functions": self.functions,
        }


def separable_generating_system(space: FiniteProbabilitySpace, sets: Sequence, times: Sequence[float],
                                T_of: MarkovOperator | Callable, steps: int = DEFAULT_QUAD_STEPS,
                                tol: float = 1e-9) -> GeneratedAlgebra:
    """Algebra generated by the orbit integrals ``int_0^{t_n} T(s) 1_{M_k} ds``.

    ``T_of`` is either a :class:`MarkovOperator`, read as the iterated
    discrete semigroup ``T(s) = T^{floor(s)}`` (integrated exactly), or an
    evolution callable ``(s, f) -> T(s)f`` (integrated by Simpson).  A finite
    K is always metrizable; ``separating`` records whether the generated
    algebra is already every function on the atoms.
    """
    fs = []
    for M in sets:
        f = indicator(space, M)
        for t in times:
            if t < 0:
                raise ValueError("times must be >= 0")
            if isinstance(T_of, MarkovOperator):
                fs.append(_discrete_orbit_integral(T_of, t, f))
            else:
                fs.append(as_function(space, orbit_integral(T_of, t, f, steps)))
    partition = generated_partition(space, fs, tol) if fs else [tuple(range(space.n))]
    return GeneratedAlgebra(fs, partition, len(partition) == space.n)
