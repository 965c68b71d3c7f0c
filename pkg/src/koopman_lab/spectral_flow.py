"""Fourier-truncated models of rotation flows on the torus T^d.

The rotation ``phi_t(x) = x + t*alpha (mod 1)`` has Koopman generator
diagonal in the Fourier basis, ``A e_k = 2*pi*i (k . alpha) e_k``.  A model
keeps the modes with ``|k_j| <= N_j`` and stores coefficients as a d-dim
array of shape ``(2N_1+1, ..., 2N_d+1)``, mode ``k`` living at index
``k + N``.  Products of functions are truncated convolutions: modes pushed
outside the window are dropped, and every check that relies on products
only quantifies over triples (k, l, k+l) inside the window.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
from scipy import signal

from .checks import CheckResult
from .errors import BudgetExceeded, DimensionMismatch, QSupportTooWide

MODE_BUDGET = 10**6
DEFAULT_TRUNCATION = {1: 32, 2: 8}
DEFAULT_TRUNCATION_HIGH_D = 3


def as_frequency(x):
    """Exact ``Fraction`` for ints, fractions and "p/q" strings; ``float`` otherwise."""
    if isinstance(x, bool):
        raise TypeError("frequency cannot be a bool")
    if isinstance(x, (int, np.integer, Fraction)):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x.strip())
    return float(x)


def default_truncation(d: int) -> int:
    return DEFAULT_TRUNCATION.get(d, DEFAULT_TRUNCATION_HIGH_D)


def mode_key(k) -> tuple:
    """Ordering used to pick witnesses: small |k| first, positive before negative."""
    k = tuple(int(x) for x in k)
    return (sum(x * x for x in k), tuple((abs(x), x < 0) for x in k))


@dataclass(frozen=True)
class SpectralFlowModel:
    alpha: tuple
    truncation: tuple

    def __post_init__(self):
        alpha = tuple(as_frequency(a) for a in self.alpha)
        if not alpha:
            raise ValueError("need at least one frequency")
        trunc = self.truncation
        if isinstance(trunc, (int, np.integer)):
            trunc = (int(trunc),) * len(alpha)
        trunc = tuple(int(n) for n in trunc)
        if len(trunc) != len(alpha):
            raise DimensionMismatch(f"{len(trunc)} truncations for {len(alpha)} frequencies")
        if min(trunc) < 1:
            raise ValueError("truncation N must be >= 1")
        n_modes = math.prod(2 * n + 1 for n in trunc)
        if n_modes > MODE_BUDGET:
            raise BudgetExceeded(f"{n_modes} modes exceed the budget of {MODE_BUDGET}")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "truncation", trunc)

    @property
    def d(self) -> int:
        return len(self.alpha)

    @property
    def N(self) -> int:
        return max(self.truncation)

    @property
    def shape(self) -> tuple:
        return tuple(2 * n + 1 for n in self.truncation)

    @property
    def n_modes(self) -> int:
        return math.prod(self.shape)

    @property
    def exact(self) -> bool:
        """True when every frequency is an exact rational."""
        return all(isinstance(a, Fraction) for a in self.alpha)

    def modes(self) -> np.ndarray:
        """All mode vectors, shape (n_modes, d), in C order of the coefficient array."""
        axes = [np.arange(-n, n + 1) for n in self.truncation]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.d)

    def contains(self, k) -> bool:
        return all(abs(int(x)) <= n for x, n in zip(k, self.truncation))

    def index(self, k) -> tuple:
        if len(k) != self.d:
            raise DimensionMismatch(f"mode {tuple(k)} in a {self.d}-dim model")
        return tuple(int(x) + n for x, n in zip(k, self.truncation))

    def frequencies(self) -> np.ndarray:
        return np.array([float(a) for a in self.alpha])

    def dot_alpha(self) -> np.ndarray:
        """k . alpha for every mode, as floats, in coefficient-array shape."""
        return (self.modes() @ self.frequencies()).reshape(self.shape)

    def dot_alpha_exact(self, k) -> Fraction:
        if not self.exact:
            raise ValueError("exact arithmetic needs rational frequencies")
        return sum((int(x) * a for x, a in zip(k, self.alpha)), Fraction(0))

    def eigenvalues(self) -> np.ndarray:
        """Rotation generator eigenvalues 2*pi*i (k . alpha), coefficient-array shape."""
        return 2j * np.pi * self.dot_alpha()

    def generator(self) -> "DiagonalGenerator":
        return DiagonalGenerator(self, self.eigenvalues())

    def grid_size(self, oversample: int = 4) -> tuple:
        return tuple(1 << max(3, math.ceil(math.log2(oversample * s))) for s in self.shape)

    def to_grid(self, coeffs: np.ndarray, size: tuple) -> np.ndarray:
        """Values on the uniform grid of ``size`` points per axis."""
        full = np.zeros(size, dtype=complex)
        full[self._grid_index(size)] = coeffs
        return np.fft.ifftn(full) * math.prod(size)

    def from_grid(self, values: np.ndarray, size: tuple) -> np.ndarray:
        """Fourier coefficients of grid values, cut back to the truncation window."""
        full = np.fft.fftn(values) / math.prod(size)
        return full[self._grid_index(size)]

    def _grid_index(self, size):
        return np.ix_(*[np.arange(-n, n + 1) % m for n, m in zip(self.truncation, size)])


def rotation_model(alpha: Sequence, N=None) -> SpectralFlowModel:
    alpha = tuple(alpha)
    if N is None:
        N = default_truncation(len(alpha))
    return SpectralFlowModel(alpha, N)


class FourierFunction:
    """Trigonometric polynomial on the model's truncation window."""

    __slots__ = ("model", "coeffs")

    def __init__(self, model: SpectralFlowModel, coeffs=None):
        self.model = model
        if coeffs is None:
            coeffs = np.zeros(model.shape, dtype=complex)
        coeffs = np.asarray(coeffs, dtype=complex)
        if coeffs.shape != model.shape:
            if coeffs.size == model.n_modes:
                coeffs = coeffs.reshape(model.shape)
            else:
                raise DimensionMismatch(f"coefficients of shape {coeffs.shape}, model needs {model.shape}")
        self.coeffs = coeffs

    @classmethod
    def from_modes(cls, model, modes: dict) -> "FourierFunction":
        f = cls(model)
        for k, c in modes.items():
            k = (k,) if isinstance(k, (int, np.integer)) else tuple(k)
            if not model.contains(k):
                raise QSupportTooWide(f"mode {k} outside truncation {model.truncation}")
            f.coeffs[model.index(k)] += c
        return f

    @classmethod
    def mode(cls, model, k, c: complex = 1.0) -> "FourierFunction":
        return cls.from_modes(model, {k: c})

    @classmethod
    def constant(cls, model, c: complex = 1.0) -> "FourierFunction":
        return cls.mode(model, (0,) * model.d, c)

    @classmethod
    def cosine(cls, model, k, amplitude: float = 1.0) -> "FourierFunction":
        """``amplitude * cos(2 pi k.x)``: coefficients amplitude/2 at +-k."""
        k = (k,) if isinstance(k, (int, np.integer)) else tuple(k)
        return cls.from_modes(model, {k: amplitude / 2, tuple(-x for x in k): amplitude / 2})

    def with_coeffs(self, coeffs) -> "FourierFunction":
        return FourierFunction(self.model, coeffs)

    def copy(self) -> "FourierFunction":
        return FourierFunction(self.model, self.coeffs.copy())

    def _check(self, other):
        if other.model.shape != self.model.shape:
            raise DimensionMismatch("functions live on different truncations")

    def __add__(self, other):
        if isinstance(other, FourierFunction):
            self._check(other)
            return self.with_coeffs(self.coeffs + other.coeffs)
        out = self.copy()
        out.coeffs[self.model.index((0,) * self.model.d)] += other
        return out

    __radd__ = __add__

    def __neg__(self):
        return self.with_coeffs(-self.coeffs)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, FourierFunction):
            self._check(other)
            full = signal.convolve(self.coeffs, other.coeffs, mode="full")
            crop = tuple(slice(n, n + s) for n, s in zip(self.model.truncation, self.model.shape))
            return self.with_coeffs(full[crop])
        return self.with_coeffs(self.coeffs * other)

    def __rmul__(self, other):
        return self * other

    def __truediv__(self, scalar):
        return self.with_coeffs(self.coeffs / scalar)

    def conj(self) -> "FourierFunction":
        return self.with_coeffs(np.conj(self.coeffs[(slice(None, None, -1),) * self.model.d]))

    def coefficient(self, k) -> complex:
        k = (k,) if isinstance(k, (int, np.integer)) else tuple(k)
        return complex(self.coeffs[self.model.index(k)])

    def support(self, tol: float = 0.0) -> list[tuple]:
        idx = np.argwhere(np.abs(self.coeffs) > tol)
        return [tuple(int(i) - n for i, n in zip(row, self.model.truncation)) for row in idx]

    def __call__(self, x) -> np.ndarray:
        """Evaluate at points ``x`` of shape (..., d) (or (...) when d = 1)."""
        x = np.asarray(x, dtype=float)
        if self.model.d == 1 and (x.ndim == 0 or x.shape[-1] != 1):
            x = x[..., None]
        phases = np.exp(2j * np.pi * x @ self.model.modes().T)
        return phases @ self.coeffs.ravel()

    def grid_values(self, size=None) -> np.ndarray:
        size = size or self.model.grid_size()
        return self.model.to_grid(self.coeffs, size)

    def l1_coeff_norm(self) -> float:
        """Sum of |c_k|; an upper bound for the sup norm on the torus."""
        return float(np.abs(self.coeffs).sum())

    def l2_norm(self) -> float:
        return float(np.sqrt((np.abs(self.coeffs) ** 2).sum()))

    def sup_norm_lower(self, oversample: int = 8) -> float:
        """Max modulus over a fine grid; a lower bound for the sup norm."""
        return float(np.abs(self.grid_values(self.model.grid_size(oversample))).max())

    def mean(self) -> complex:
        return self.coefficient((0,) * self.model.d)

    def __repr__(self):
        terms = ", ".join(f"{k}: {self.coefficient(k):.6g}" for k in self.support(1e-15)[:8])
        return f"FourierFunction({{{terms}}})"


@dataclass(frozen=True)
class DiagonalGenerator:
    """Generator diagonal in the Fourier basis: ``A e_k = eigenvalues[k] e_k``."""

    model: SpectralFlowModel
    eigenvalues: np.ndarray

    def __post_init__(self):
        ev = np.asarray(self.eigenvalues, dtype=complex)
        if ev.shape != self.model.shape:
            if ev.size != self.model.n_modes:
                raise DimensionMismatch(f"eigenvalues of shape {ev.shape}, model needs {self.model.shape}")
            ev = ev.reshape(self.model.shape)
        ev.setflags(write=False)
        object.__setattr__(self, "eigenvalues", ev)

    @classmethod
    def from_function(cls, model, fn: Callable) -> "DiagonalGenerator":
        """Eigenvalue ``fn(k)`` for every mode vector ``k``."""
        return cls(model, np.array([fn(tuple(int(x) for x in k)) for k in model.modes()]))

    def eigenvalue(self, k) -> complex:
        k = (k,) if isinstance(k, (int, np.integer)) else tuple(k)
        return complex(self.eigenvalues[self.model.index(k)])

    def semigroup(self) -> Callable:
        return lambda t, f: evolve_spectral(self, t, f)


def evolve_spectral(G: DiagonalGenerator, t: float, f: FourierFunction) -> FourierFunction:
    if t < 0:
        raise ValueError("t must be >= 0")
    return f.with_coeffs(f.coeffs * np.exp(t * G.eigenvalues))


def _in_window_pairs(model: SpectralFlowModel):
    """Flat indices (i, j, i+j) of mode pairs whose sum stays inside the window."""
    modes = model.modes()
    shape = np.array(model.shape)
    trunc = np.array(model.truncation)
    for i, k in enumerate(modes):
        s = k + modes
        ok = np.all(np.abs(s) <= trunc, axis=1)
        j = np.flatnonzero(ok)
        flat = np.ravel_multi_index(tuple((s[ok] + trunc).T), tuple(shape))
        yield i, j, flat


def _first_by_key(model, pairs):
    modes = model.modes()
    return min(pairs, key=lambda ij: (mode_key(modes[ij[0]])[0] + mode_key(modes[ij[1]])[0],
                                      mode_key(modes[ij[0]]), mode_key(modes[ij[1]])))


def additivity_derivation_check(G: DiagonalGenerator, model: SpectralFlowModel | None = None,
                                tol: float = 1e-9) -> CheckResult:
    """Leibniz rule in Fourier coordinates: ``mu_{k+l} = mu_k + mu_l`` and ``mu_{-k} = conj(mu_k)``."""
    model = model or G.model
    ev = G.eigenvalues.ravel()
    modes = model.modes()
    scale = max(1.0, float(np.abs(ev).max()))
    failures = []
    worst = 0.0
    for i, j, flat in _in_window_pairs(model):
        gap = np.abs(ev[i] + ev[j] - ev[flat])
        worst = max(worst, float(gap.max(initial=0.0)))
        bad = j[gap > tol * scale]
        failures.extend((i, int(b)) for b in bad)
    note = f"checked pairs with k, l, k+l inside truncation {model.truncation}"
    if failures:
        i, j = _first_by_key(model, failures)
        k, l = modes[i], modes[j]
        return CheckResult(False, {
            "k": k.tolist(), "l": l.tolist(),
            "mu_k": complex(ev[i]), "mu_l": complex(ev[j]),
            "mu_k+l": G.eigenvalue(k + l),
        }, worst, note)
    conj_gap = np.abs(ev[::-1] - np.conj(ev))
    if np.any(conj_gap > tol * scale):
        i = int(np.argmax(conj_gap))
        return CheckResult(False, {"k": modes[i].tolist(), "reason": "mu_{-k} != conj(mu_k)"},
                           float(conj_gap.max()), note)
    return CheckResult(True, None, worst, note)


def multiplicativity_residual(G: DiagonalGenerator, t: float, max_modes: int | None = None) -> tuple[float, tuple]:
    """Max of |T(t)e_k * T(t)e_l - T(t)e_{k+l}|_1 over in-window pairs, computed with function products.

    Returns ``(residual, (k, l))`` for the worst pair.
    """
    model = G.model
    modes = model.modes()
    basis = [FourierFunction.mode(model, tuple(k.tolist())) for k in modes]
    evolved = [evolve_spectral(G, t, e) for e in basis]
    worst, where = 0.0, ((0,) * model.d, (0,) * model.d)
    for i, j, flat in _in_window_pairs(model):
        if max_modes is not None and i >= max_modes:
            break
        for jj, ff in zip(j, flat):
            r = (evolved[i] * evolved[jj] - evolved[ff]).l1_coeff_norm()
            if r > worst:
                worst, where = r, (tuple(modes[i].tolist()), tuple(modes[jj].tolist()))
    return worst, where


def to_matrix(G: DiagonalGenerator, model: SpectralFlowModel | None = None,
              q: FourierFunction | None = None, basis_size: int | None = None):
    """Matrix of ``G + (multiplication by q)`` on the truncated Fourier coordinates.

    Rows and columns follow the C order of ``model.modes()``.  With
    ``basis_size`` the matrix is restricted to modes with ``|k_j| <= basis_size``.
    Products pushed outside the window are dropped.
    """
    from .semigroup_engine import GeneratorMatrix

    model = model or G.model
    modes = model.modes()
    ev = G.eigenvalues.ravel()
    if basis_size is not None:
        keep = np.all(np.abs(modes) <= basis_size, axis=1)
    else:
        keep = np.ones(len(modes), dtype=bool)
    sub = modes[keep]
    m = np.diag(ev[keep]).astype(complex)
    if q is not None:
        limit = basis_size if basis_size is not None else model.N
        qs = q.support()
        if any(max(abs(x) for x in k) > limit for k in qs) or any(not model.contains(k) for k in qs):
            raise QSupportTooWide(f"q has modes outside the truncation {limit}")
        pos = {tuple(k): r for r, k in enumerate(sub.tolist())}
        for k in qs:
            c = q.coefficient(k)
            for col, l in enumerate(sub.tolist()):
                row = pos.get(tuple(a + b for a, b in zip(k, l)))
                if row is not None:
                    m[row, col] += c
    return GeneratorMatrix(m)


def product_flow(models: Sequence[SpectralFlowModel]) -> SpectralFlowModel:
    models = list(models)
    if not models:
        raise ValueError("need at least one factor")
    alpha = tuple(itertools.chain.from_iterable(m.alpha for m in models))
    trunc = tuple(itertools.chain.from_iterable(m.truncation for m in models))
    n_modes = math.prod(2 * n + 1 for n in trunc)
    if n_modes > MODE_BUDGET:
        raise BudgetExceeded(f"product has {n_modes} modes, budget {MODE_BUDGET}")
    return SpectralFlowModel(alpha, trunc)


def torus_inner_product_matrix(model: SpectralFlowModel) -> np.ndarray:
    """Gram matrix of the truncated Fourier modes, by exact discrete quadrature on the torus."""
    size = tuple(2 * s for s in model.shape)
    n = model.n_modes
    vals = np.empty((n, math.prod(size)), dtype=complex)
    eye = np.eye(n)
    for r in range(n):
        vals[r] = model.to_grid(eye[r].reshape(model.shape), size).ravel()
    return vals.conj() @ vals.T / math.prod(size)
