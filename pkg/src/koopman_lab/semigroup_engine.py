"""Bounded generators, the semigroups they generate, and checks on both.

Generators are dense matrices (``D(A)`` is every function), or diagonal
Fourier generators from :mod:`koopman_lab.spectral_flow`.  On a finite
atomic space the Leibniz rule on indicators forces ``A = 0``: the only
derivation is zero, so every strongly continuous Markov lattice semigroup
there is trivial.  Nontrivial continuous-time flows are handled by the
spectral models.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np
from scipy.integrate import simpson

from .checks import CheckResult
from .errors import DimensionMismatch
from .measure_space import FiniteProbabilitySpace

DEFAULT_TOL = 1e-9
DEFAULT_QUAD_STEPS = 256
KATO_PATTERN_LIMIT = 10
KATO_SEED = 7

# degree-6 diagonal Pade coefficients for exp
_PADE6 = [1.0]
for _j in range(1, 7):
    _PADE6.append(_PADE6[-1] * (6 - _j + 1) / (_j * (12 - _j + 1)))


@dataclass(frozen=True)
class GeneratorMatrix:
    matrix: np.ndarray
    space: FiniteProbabilitySpace | None = None

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionMismatch(f"generator must be square, got shape {m.shape}")
        if self.space is not None and m.shape[0] != self.space.n:
            raise DimensionMismatch(f"generator of size {m.shape[0]} on {self.space.n} atoms")
        if not np.all(np.isfinite(m)):
            raise ValueError("generator has non-finite entries")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def semigroup(self) -> Callable:
        return lambda t, f: expm_evolve(self, t, f)


def _mat(A) -> np.ndarray:
    return A.matrix if isinstance(A, GeneratorMatrix) else np.asarray(A, dtype=complex)


def expm(M) -> np.ndarray:
    """Matrix exponential by scaling and squaring with the (6,6) Pade approximant."""
    M = np.asarray(M, dtype=complex)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionMismatch(f"expm needs a square matrix, got shape {M.shape}")
    n = M.shape[0]
    norm = np.abs(M).sum(axis=0).max() if n else 0.0
    s = max(0, math.ceil(math.log2(norm / 0.5))) if norm > 0.5 else 0
    X = M / (2.0**s)
    eye = np.eye(n, dtype=complex)
    P = eye * _PADE6[0]
    Q = eye * _PADE6[0]
    Xp = eye
    for j in range(1, 7):
        Xp = Xp @ X
        P = P + _PADE6[j] * Xp
        Q = Q + (-1) ** j * _PADE6[j] * Xp
    R = np.linalg.solve(Q, P)
    for _ in range(s):
        R = R @ R
    return R


def semigroup_matrix(A, t: float) -> np.ndarray:
    if t < 0:
        raise ValueError("t must be >= 0")
    return expm(t * _mat(A))


def expm_evolve(A, t: float, f) -> np.ndarray:
    f = np.asarray(f, dtype=complex)
    m = _mat(A)
    if f.shape[0] != m.shape[0]:
        raise DimensionMismatch(f"function of length {f.shape[0]} for generator of size {m.shape[0]}")
    return semigroup_matrix(m, t) @ f


def _scale(m: np.ndarray) -> float:
    return max(1.0, float(np.abs(m).max(initial=0.0)))


def derivation_check(A, tol: float = DEFAULT_TOL) -> CheckResult:
    """Checks ``A1 = 0``, reality, then the Leibniz rule on every pair of atom indicators."""
    m = _mat(A)
    n = m.shape[0]
    thr = tol * _scale(m)
    one = np.ones(n, dtype=complex)
    a1 = m @ one
    if np.abs(a1).max() > thr:
        return CheckResult(False, {"f": one, "A1": a1, "reason": "A1 != 0"}, float(np.abs(a1).max()))
    eye = np.eye(n, dtype=complex)
    for a in range(n):
        col = m @ eye[a]
        if np.abs(col.imag).max() > thr:
            return CheckResult(False, {"f": eye[a], "Af": col, "reason": "A conj(f) != conj(Af)"},
                               float(np.abs(col.imag).max()))
    worst = 0.0
    for a in range(n):
        for b in range(a, n):
            f, g = eye[a], eye[b]
            lhs = m @ (f * g)
            rhs = (m @ f) * g + f * (m @ g)
            gap = float(np.abs(lhs - rhs).max())
            if gap > thr:
                return CheckResult(False, {"f": f, "g": g, "A(fg)": lhs, "Af*g+f*Ag": rhs,
                                           "reason": "Leibniz rule fails"}, gap)
            worst = max(worst, gap)
    return CheckResult(True, None, worst)


def adjoint_measure_check(A, space: FiniteProbabilitySpace | None = None, tol: float = DEFAULT_TOL) -> CheckResult:
    """``A' mu = 0``: every column of A integrates to zero against mu."""
    if space is None:
        space = A.space
    m = _mat(A)
    if space.n != m.shape[0]:
        raise DimensionMismatch(f"generator of size {m.shape[0]} on {space.n} atoms")
    cols = space.weights @ m
    gap = float(np.abs(cols).max())
    if gap > tol * _scale(m):
        y = int(np.argmax(np.abs(cols)))
        return CheckResult(False, {"A'mu": cols, "column": y}, gap)
    return CheckResult(True, None, gap)


def kato_check(A, samples: int = 100, tol: float = DEFAULT_TOL) -> CheckResult:
    """Kato equality ``A|f| = sign(f) Af`` on real f.

    Probes every +-1 sign pattern when n <= 10, then ``samples`` random
    nowhere-zero real functions.  A non-real operator fails immediately.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    m = _mat(A)
    n = m.shape[0]
    thr = tol * _scale(m)
    if np.abs(m.imag).max(initial=0.0) > thr:
        a = int(np.argmax(np.abs(m.imag).max(axis=0)))
        return CheckResult(False, {"f": np.eye(n)[a], "reason": "A is not a real operator"},
                           float(np.abs(m.imag).max()))

    def probes():
        if n <= KATO_PATTERN_LIMIT:
            for pattern in itertools.product((1.0, -1.0), repeat=n):
                yield np.array(pattern)
        rng = np.random.default_rng(KATO_SEED)
        for _ in range(samples):
            yield rng.choice((-1.0, 1.0), size=n) * rng.uniform(0.5, 2.0, size=n)

    worst = 0.0
    for f in probes():
        lhs = m @ np.abs(f)
        rhs = np.sign(f) * (m @ f)
        gap = float(np.abs(lhs - rhs).max()) / max(1.0, float(np.abs(f).max()))
        if gap > thr:
            return CheckResult(False, {"f": f, "A|f|": lhs, "sign(f)Af": rhs}, gap)
        worst = max(worst, gap)
    return CheckResult(True, None, worst)


@dataclass
class GeneratorVerdict:
    derivation: CheckResult
    markov_derivation: CheckResult
    fixes_measure: CheckResult | None
    kato: CheckResult
    q: np.ndarray
    delta: np.ndarray
    decomposition_residual: float
    witnesses: dict[str, Any] = field(default_factory=dict)

    @property
    def lattice_generator(self) -> bool:
        return self.kato.passed

    @property
    def markov_lattice_generator(self) -> bool:
        return self.markov_derivation.passed and bool(self.fixes_measure and self.fixes_measure.passed)

    def as_dict(self) -> dict:
        return {
            "derivation": self.derivation.passed,
            "markov_derivation": self.markov_derivation.passed,
            "fixes_measure": None if self.fixes_measure is None else self.fixes_measure.passed,
            "kato": self.kato.passed,
            "q": self.q,
            "delta": self.delta,
            "decomposition_residual": self.decomposition_residual,
            "witnesses": {
                "derivation": self.derivation.witness,
                "markov_derivation": self.markov_derivation.witness,
                "fixes_measure": None if self.fixes_measure is None else self.fixes_measure.witness,
                "kato": self.kato.witness,
            },
        }


def classify_generator(A, space: FiniteProbabilitySpace | None = None, tol: float = DEFAULT_TOL,
                       kato_samples: int = 100) -> GeneratorVerdict:
    """Split ``A = delta + q`` with ``q = A1`` and check each piece."""
    if space is None and isinstance(A, GeneratorMatrix):
        space = A.space
    m = _mat(A)
    q = m @ np.ones(m.shape[0], dtype=complex)
    delta = m - np.diag(q)
    residual = float(np.abs(delta + np.diag(q) - m).max(initial=0.0))
    return GeneratorVerdict(
        derivation=derivation_check(delta, tol),
        markov_derivation=derivation_check(m, tol),
        fixes_measure=None if space is None else adjoint_measure_check(m, space, tol),
        kato=kato_check(m, kato_samples, tol),
        q=q,
        delta=delta,
        decomposition_residual=residual,
    )


@dataclass(frozen=True)
class PerturbationSpec:
    """``A = delta + q``: delta a Markov lattice generator, q a bounded multiplier.

    ``delta`` is a :class:`GeneratorMatrix` (then ``q`` is a vector over atoms)
    or a :class:`~koopman_lab.spectral_flow.DiagonalGenerator` (then ``q`` is
    a :class:`~koopman_lab.spectral_flow.FourierFunction`).
    """

    delta: Any
    q: Any

    @property
    def spectral(self) -> bool:
        from .spectral_flow import DiagonalGenerator

        return isinstance(self.delta, DiagonalGenerator)

    def generator(self):
        """The full generator ``delta + q`` in matrix form."""
        if self.spectral:
            from .spectral_flow import to_matrix

            return to_matrix(self.delta, q=self.q)
        m = _mat(self.delta)
        return GeneratorMatrix(m + np.diag(np.asarray(self.q, dtype=complex)))


def simpson_nodes(t: float, panels: int) -> np.ndarray:
    """Nodes of composite Simpson with ``panels`` panels (2*panels + 1 points)."""
    return np.linspace(0.0, t, 2 * panels + 1)


def _integrate_orbit(values: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    return simpson(values, x=nodes, axis=0)


def perturbed_evolve(spec: PerturbationSpec, t: float, f, quad_steps: int = DEFAULT_QUAD_STEPS):
    """``S(t)f = exp(int_0^t T(s)q ds) * T(t)f`` with T generated by ``spec.delta``.

    The integral uses composite Simpson with ``quad_steps`` panels.  In the
    spectral case the exponential and the product are taken pointwise on an
    oversampled torus grid and transformed back to the truncation window.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    if quad_steps < 1:
        raise ValueError("quad_steps must be >= 1")
    if t == 0:
        return f.copy()
    nodes = simpson_nodes(t, quad_steps)
    if spec.spectral:
        from .spectral_flow import evolve_spectral

        G, q = spec.delta, spec.q
        model = G.model
        orbit = q.coeffs[None] * np.exp(nodes.reshape((-1,) + (1,) * model.d) * G.eigenvalues[None])
        integral = _integrate_orbit(orbit, nodes)
        size = model.grid_size()
        factor = np.exp(model.to_grid(integral, size))
        moved = evolve_spectral(G, t, f)
        return f.with_coeffs(model.from_grid(factor * model.to_grid(moved.coeffs, size), size))
    m = _mat(spec.delta)
    q = np.asarray(spec.q, dtype=complex)
    f = np.asarray(f, dtype=complex)
    orbit = np.array([semigroup_matrix(m, s) @ q for s in nodes])
    integral = _integrate_orbit(orbit, nodes)
    return np.exp(integral) * (semigroup_matrix(m, t) @ f)


def _l1(space: FiniteProbabilitySpace | None, v: np.ndarray) -> float:
    if space is None:
        return float(np.abs(v).sum())
    return float(np.dot(space.weights, np.abs(v)))


def verify_perturbation(spec: PerturbationSpec, t_grid, f, tol: float = 1e-6,
                        quad_steps: int = DEFAULT_QUAD_STEPS, generator=None,
                        space: FiniteProbabilitySpace | None = None) -> CheckResult:
    """Compare the explicit formula with ``expm(t*(delta + q)) f``.

    ``generator`` overrides the reference generator (defaults to
    ``delta + q``).  Residuals are L1(mu) norms over atoms, or the l1 norm of
    Fourier coefficients (an upper bound for every L^p norm on the torus).
    """
    ts = [float(t) for t in t_grid]
    if any(t < 0 for t in ts):
        raise ValueError("all times must be >= 0")
    ref = _mat(generator if generator is not None else spec.generator())
    if space is None and not spec.spectral and isinstance(spec.delta, GeneratorMatrix):
        space = spec.delta.space
    per_t = {}
    for t in ts:
        s = perturbed_evolve(spec, t, f, quad_steps)
        if spec.spectral:
            e = expm_evolve(ref, t, f.coeffs.ravel()).reshape(f.coeffs.shape)
            per_t[t] = float(np.abs(s.coeffs - e).sum())
        else:
            per_t[t] = _l1(space, s - expm_evolve(ref, t, f))
    worst_t = max(per_t, key=per_t.get)
    worst = per_t[worst_t]
    witness = None if worst <= tol else {"t": worst_t, "residual": worst}
    return CheckResult(worst <= tol, witness, worst, details={"per_t": per_t})


def _orbit_integral(T_of: Callable, t: float, f, panels: int):
    from .spectral_flow import FourierFunction

    nodes = simpson_nodes(t, panels)
    vals = [T_of(s, f) for s in nodes]
    if isinstance(f, FourierFunction):
        return f.with_coeffs(_integrate_orbit(np.array([v.coeffs for v in vals]), nodes))
    return _integrate_orbit(np.array(vals, dtype=complex), nodes)


def cesaro_average(T_of: Callable, t: float, f, steps: int = DEFAULT_QUAD_STEPS):
    """``(1/t) int_0^t T(r)f dr`` by composite Simpson with ``steps`` panels."""
    if t <= 0:
        raise ValueError("t must be > 0")
    if steps < 2:
        raise ValueError("steps must be >= 2")
    return _orbit_integral(T_of, t, f, steps) * (1.0 / t)


def orbit_integral(T_of: Callable, t: float, f, steps: int = DEFAULT_QUAD_STEPS):
    """``int_0^t T(r)f dr``; zero at t = 0."""
    if t == 0:
        return f * 0
    return _orbit_integral(T_of, t, f, steps)


def sup_norm_bounds(f) -> tuple[float, float]:
    """(lower, upper) bounds on the sup norm; exact for functions on atoms."""
    from .spectral_flow import FourierFunction

    if isinstance(f, FourierFunction):
        return f.sup_norm_lower(), f.l1_coeff_norm()
    v = float(np.abs(np.asarray(f)).max())
    return v, v


def identity_semigroup(t, f):
    return f.copy() if hasattr(f, "copy") else f


def continuity_bound_check(T_of: Callable, f, t: float, s_grid, tol: float = DEFAULT_TOL,
                           steps: int = DEFAULT_QUAD_STEPS) -> CheckResult:
    """``||T(s)F_t - F_t||_inf <= 2 s ||f||_inf`` for ``F_t = int_0^t T(r)f dr``.

    Both sides are bounded conservatively: an upper bound on the left, a lower
    bound on the right.
    """
    s_grid = [float(s) for s in s_grid]
    if any(s < 0 or s > t for s in s_grid):
        raise ValueError("need 0 <= s <= t on the grid")
    F = orbit_integral(T_of, t, f, steps)
    f_sup = sup_norm_bounds(f)[0]
    worst_margin = -math.inf
    rows = []
    for s in s_grid:
        lhs = sup_norm_bounds(T_of(s, F) - F)[1]
        bound = 2 * s * f_sup
        rows.append((s, lhs, bound))
        margin = lhs - bound
        if margin > worst_margin:
            worst_margin, worst = margin, (s, lhs, bound)
    passed = worst_margin <= tol
    witness = None if passed else {"s": worst[0], "lhs": worst[1], "bound": worst[2]}
    return CheckResult(passed, witness, worst_margin, details={"rows": rows})
