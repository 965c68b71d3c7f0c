"""Ergodicity, irreducibility and the non-ergodic times of rotation flows.

For a rotation model the fixed space of ``T(t)`` is spanned by the modes
with ``t * (k . alpha)`` an integer, so non-ergodic times are the countable
set ``{m / (k . alpha)}``.  These are enumerated in closed form here, and
each one is re-checked by brute force over all modes.

With rational frequencies (and rational t) the integer test is exact.  With
float frequencies it is ``|sin(pi * t * (k . alpha))| < tol`` and the
verdict is flagged approximate.  All flow-level statements hold within the
truncation window only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components

from .checks import CheckResult
from .markov_operators import DEFAULT_TOL, MarkovOperator, SemiflowMap, koopman_of_map
from .measure_space import FiniteProbabilitySpace
from .spectral_flow import (
    DiagonalGenerator,
    SpectralFlowModel,
    _first_by_key,
    _in_window_pairs,
    mode_key,
    product_flow,
    rotation_model,
)

RATIONAL_TOL = 1e-9
MAX_DENOMINATOR = 10**6
TIME_MERGE_RTOL = 1e-12


def invariant_sets(phi: SemiflowMap) -> list[frozenset]:
    """Every M with ``phi^{-1}(M) = M``: unions of components of the functional graph."""
    n = phi.n
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for x, y in enumerate(phi.atom_map):
        rx, ry = find(x), find(y)
        if rx != ry:
            parent[max(rx, ry)] = min(rx, ry)
    comps: dict[int, list[int]] = {}
    for x in range(n):
        comps.setdefault(find(x), []).append(x)
    blocks = sorted(comps.values())
    out = []
    for mask in range(1 << len(blocks)):
        out.append(frozenset(x for i, b in enumerate(blocks) if mask >> i & 1 for x in b))
    return sorted(out, key=lambda M: (len(M), sorted(M)))


def irreducibility_check(T: MarkovOperator, tol: float = DEFAULT_TOL) -> CheckResult:
    """No nontrivial T-invariant closed ideal.

    Ideals of functions on atoms are ``I_S = {f : f = 0 off S}``; I_S is
    invariant iff no edge of the support graph enters S from outside.  That
    fails for all proper nonempty S iff the graph is strongly connected.  The
    witness is S = complement of a terminal strongly connected component.
    """
    m = np.asarray(T.matrix)
    n = m.shape[0]
    adj = (np.abs(m) > tol).astype(int)
    n_comp, labels = connected_components(adj, directed=True, connection="strong")
    if n_comp == 1:
        return CheckResult(True)
    sinks = []
    for c in range(n_comp):
        members = np.flatnonzero(labels == c)
        targets = np.flatnonzero(adj[members].any(axis=0))
        if np.all(labels[targets] == c):
            sinks.append(members)
    sink = max(sinks, key=lambda s: s.min())
    S = sorted(set(range(n)) - set(int(x) for x in sink))
    return CheckResult(False, {"ideal_support": S, "note": "functions vanishing outside ideal_support"})


def _peripheral_group_check(T: MarkovOperator, tol: float = 1e-8) -> CheckResult:
    ev = np.linalg.eigvals(np.asarray(T.matrix))
    per = ev[np.abs(np.abs(ev) - 1) <= tol]
    uniq: list[complex] = []
    for z in sorted(per, key=lambda z: (round(np.angle(z), 9), z.real)):
        if not any(abs(z - u) <= tol for u in uniq):
            uniq.append(complex(z))

    def member(z):
        return any(abs(z - u) <= tol for u in uniq)

    for a in uniq:
        if not member(1 / a):
            return CheckResult(False, {"eigenvalue": a, "reason": "inverse missing"})
        for b in uniq:
            if not member(a * b):
                return CheckResult(False, {"pair": [a, b], "reason": "product missing"})
    return CheckResult(True, details={"peripheral_point_spectrum": uniq})


@dataclass
class ErgodicityReport:
    invariant_sets_found: list
    ergodic: bool
    irreducible: bool
    fix_dimension: int
    boundary_group_ok: bool
    boundary_witness: dict | None = None
    irreducibility_witness: dict | None = None

    def as_dict(self) -> dict:
        return {
            "invariant_sets": [sorted(M) for M in self.invariant_sets_found],
            "ergodic": self.ergodic,
            "irreducible": self.irreducible,
            "fix_dimension": self.fix_dimension,
            "boundary_group_ok": self.boundary_group_ok,
            "boundary_witness": self.boundary_witness,
            "irreducibility_witness": self.irreducibility_witness,
        }


def ergodicity_report(space: FiniteProbabilitySpace, phi: SemiflowMap, tol: float = DEFAULT_TOL) -> ErgodicityReport:
    sets = invariant_sets(phi)
    T = koopman_of_map(space, phi)
    irr = irreducibility_check(T, tol)
    m = np.asarray(T.matrix) - np.eye(space.n)
    fix_dim = space.n - int(np.linalg.matrix_rank(m, tol=1e-8))
    group = _peripheral_group_check(T)
    return ErgodicityReport(
        invariant_sets_found=sets,
        ergodic=len(sets) == 2 or space.n == 1,
        irreducible=irr.passed,
        fix_dimension=fix_dim,
        boundary_group_ok=group.passed,
        boundary_witness=group.witness,
        irreducibility_witness=irr.witness,
    )


# ----- rotation flows -------------------------------------------------------


@dataclass
class FixResult:
    dimension: int
    modes: list
    approximate: bool


def _is_exact_time(t) -> bool:
    return isinstance(t, (int, Fraction)) and not isinstance(t, bool)


def _exact_dots(model: SpectralFlowModel) -> list[Fraction]:
    return [model.dot_alpha_exact(k) for k in model.modes()]


def _fixed_mask(model: SpectralFlowModel, t, tol: float = RATIONAL_TOL) -> tuple[np.ndarray, bool]:
    if model.exact and _is_exact_time(t):
        t = Fraction(t)
        return np.array([(x * t).denominator == 1 for x in _exact_dots(model)]), False
    x = model.dot_alpha().ravel() * float(t)
    return np.abs(np.sin(np.pi * x)) < tol, True


def _flow_fixed_mask(model: SpectralFlowModel, tol: float = RATIONAL_TOL) -> np.ndarray:
    if model.exact:
        return np.array([x == 0 for x in _exact_dots(model)])
    return np.abs(model.dot_alpha().ravel()) < tol


def fix_dimension(model: SpectralFlowModel, t, tol: float = RATIONAL_TOL) -> FixResult:
    """dim fix(T(t)) by brute force over the truncated modes."""
    if t < 0:
        raise ValueError("t must be >= 0")
    mask, approx = _fixed_mask(model, t, tol)
    modes = model.modes()[mask]
    ordered = sorted((tuple(int(x) for x in k) for k in modes), key=mode_key)
    return FixResult(int(mask.sum()), ordered, approx)


def boundary_group_check(G: DiagonalGenerator | SpectralFlowModel, tol: float = 1e-9) -> CheckResult:
    """Is the imaginary-axis point spectrum closed under negation and (in-window) addition?"""
    if isinstance(G, SpectralFlowModel):
        G = G.generator()
    model = G.model
    ev = G.eigenvalues.ravel()
    modes = model.modes()
    scale = max(1.0, float(np.abs(ev).max()))
    on_axis = np.abs(ev.real) <= tol * scale
    values = np.sort(ev.imag[on_axis])

    def member(y):
        i = np.searchsorted(values, y - tol * scale)
        return i < len(values) and abs(values[i] - y) <= tol * scale

    failures = []
    for i, j, _ in _in_window_pairs(model):
        if not on_axis[i]:
            continue
        for jj in j:
            if on_axis[jj] and not member(ev[i].imag + ev[jj].imag):
                failures.append((i, int(jj)))
    if failures:
        i, j = _first_by_key(model, failures)
        return CheckResult(False, {"k": modes[i].tolist(), "l": modes[j].tolist(),
                                   "sum": complex(ev[i] + ev[j]), "reason": "sum not in G"})
    for i in np.flatnonzero(on_axis):
        if not member(-ev[i].imag):
            return CheckResult(False, {"k": modes[i].tolist(), "reason": "negation not in G"})
    if not member(0.0):
        return CheckResult(False, {"reason": "0 not in G"})
    return CheckResult(True, note=f"sums checked inside truncation {model.truncation}")


def integer_relations(model: SpectralFlowModel, tol: float = RATIONAL_TOL) -> list[tuple]:
    """Nonzero modes k with ``k . alpha = 0`` inside the truncation, in witness order."""
    mask = _flow_fixed_mask(model, tol)
    zero = (0,) * model.d
    ks = [tuple(int(x) for x in k) for k in model.modes()[mask]]
    return sorted((k for k in ks if k != zero), key=mode_key)


def ratio_relation(alpha: Sequence, max_denominator: int, tol: float = RATIONAL_TOL) -> tuple | None:
    """Integer relation for two frequencies from the continued-fraction expansion of their ratio.

    Returns ``(p, -q)`` normalised with ``p*a0 - q*a1 = 0`` up to tol, using
    the best rational approximation with denominator <= max_denominator.
    """
    a0, a1 = (float(a) for a in alpha)
    if a0 == 0 or a1 == 0:
        return (1, 0) if a0 == 0 else (0, 1)
    ratio = a1 / a0
    frac = Fraction(ratio).limit_denominator(max_denominator)
    if abs(ratio - frac) > tol * max(1.0, abs(ratio)):
        return None
    # a1/a0 = p/q  =>  p*a0 - q*a1 = 0
    return (frac.numerator, -frac.denominator)


@dataclass
class SpectralReport:
    alpha: list
    truncation: list
    t_max: float
    boundary_eigenvalues: list
    flow_fix_dimension: int
    flow_ergodic: bool
    every_time_nonergodic: bool
    integer_relations: list
    times: list = field(default_factory=list)
    approximate: bool = False

    @property
    def time_values(self) -> list[float]:
        return [row["t"] for row in self.times]

    def keys(self) -> set:
        return {row["key"] for row in self.times}

    def as_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "truncation": self.truncation,
            "t_max": self.t_max,
            "note": (f"ergodic within truncation N={self.truncation}" if self.flow_ergodic
                     else f"not ergodic: fixed modes beyond k = 0 within truncation N={self.truncation}"),
            "boundary_eigenvalues": self.boundary_eigenvalues,
            "flow_fix_dimension": self.flow_fix_dimension,
            "flow_ergodic": self.flow_ergodic,
            "every_time_nonergodic": self.every_time_nonergodic,
            "integer_relations": [list(k) for k in self.integer_relations],
            "approximate": self.approximate,
            "nonergodic_times": [
                {"t": r["t"], "t_exact": r["t_exact"], "dim": r["dim"], "mode": list(r["mode"])}
                for r in self.times
            ],
        }


def _fmt_alpha(a):
    return str(a) if isinstance(a, Fraction) else a


def nonergodic_times(model: SpectralFlowModel, t_max, max_denominator: int = MAX_DENOMINATOR,
                     tol: float = RATIONAL_TOL) -> SpectralReport:
    """All t in (0, t_max] with dim fix(T(t)) >= 2, by the closed form t = m / (k . alpha).

    Exact models key each time by its value.  Float models key it by the
    rational point k/m, which identifies the time exactly whenever the
    frequencies are rationally independent; numerically coincident keys are
    merged afterwards.  Every listed time is re-checked
    by :func:`fix_dimension`.  ``max_denominator`` bounds the continued
    fraction used to cross-check two-frequency integer relations.
    """
    if t_max <= 0:
        raise ValueError("t_max must be > 0")
    exact = model.exact and _is_exact_time(t_max)
    modes = model.modes()
    flow_mask = _flow_fixed_mask(model, tol)
    relations = integer_relations(model, tol)
    if model.d == 2 and not model.exact:
        cf = ratio_relation(model.alpha, min(model.N, max_denominator), tol)
        visible = cf is not None and all(abs(x) <= n for x, n in zip(cf, model.truncation))
        if visible != bool(relations):
            from .errors import InternalConsistencyError

            raise InternalConsistencyError(f"lattice search found {relations[:1]}, continued fraction found {cf}")

    G = model.eigenvalues().ravel()
    boundary = sorted({round(float(y), 12) for y in G.imag})

    candidates: dict[tuple, object] = {}
    if exact:
        tm = Fraction(t_max)
        for k, x in zip(modes, _exact_dots(model)):
            if x <= 0:
                continue
            for m in range(1, math.floor(tm * x) + 1):
                t = m / x
                candidates.setdefault((t,), t)
    else:
        dots = model.dot_alpha().ravel()
        for k, x in zip(modes, dots):
            if x <= tol:
                continue
            for m in range(1, math.floor(float(t_max) * x * (1 + 1e-15)) + 1):
                t = m / x
                if t <= t_max * (1 + 1e-15):
                    candidates.setdefault(tuple(Fraction(int(kj), m) for kj in k), t)

    ordered = sorted(candidates.items(), key=lambda kv: float(kv[1]))
    merged: list[tuple[tuple, object]] = []
    for key, t in ordered:
        if merged and not exact and abs(float(t) - float(merged[-1][1])) <= TIME_MERGE_RTOL * max(1.0, float(t)):
            continue
        merged.append((key, t))

    rows = []
    if merged:
        if exact:
            masks = [_fixed_mask(model, t, tol)[0] for _, t in merged]
        else:
            ts = np.array([float(t) for _, t in merged])
            x = ts[:, None] * model.dot_alpha().ravel()[None, :]
            masks = np.abs(np.sin(np.pi * x)) < tol
        for (key, t), mask in zip(merged, masks):
            responsible = [tuple(int(v) for v in k) for k in modes[mask & ~flow_mask]]
            rows.append({
                "t": float(t),
                "t_exact": str(t) if exact else None,
                "key": key,
                "dim": int(np.count_nonzero(mask)),
                "mode": min(responsible, key=mode_key) if responsible else None,
            })

    flow_dim = int(flow_mask.sum())
    return SpectralReport(
        alpha=[_fmt_alpha(a) for a in model.alpha],
        truncation=list(model.truncation),
        t_max=float(t_max),
        boundary_eigenvalues=boundary,
        flow_fix_dimension=flow_dim,
        flow_ergodic=flow_dim == 1,
        every_time_nonergodic=flow_dim >= 2,
        integer_relations=relations,
        times=rows,
        approximate=not exact,
    )


def _contains_times(big: Sequence[float], small: Sequence[float], rtol: float = 1e-12) -> bool:
    big = np.sort(np.asarray(big, dtype=float))
    for t in small:
        i = np.searchsorted(big, t)
        near = [big[j] for j in (i - 1, i) if 0 <= j < len(big)]
        if not any(abs(b - t) <= rtol * max(1.0, t) for b in near):
            return False
    return True


def product_torus_demo(frequencies: Sequence, N: int | None = None, t_max: float = 3.0,
                       tol: float = RATIONAL_TOL) -> dict:
    """Finite-d stand-in for the infinite-torus example.

    The product rotation can be ergodic within the truncation (flow fix
    dimension 1) while its non-ergodic time set contains those of every
    factor, and the set keeps growing with d.  Only finitely many coordinates
    are ever modelled.
    """
    freqs = list(frequencies)
    if N is None:
        N = rotation_model(freqs).N
    factors = [rotation_model([a], N) for a in freqs]
    model = product_flow(factors)
    report = nonergodic_times(model, t_max, tol=tol)
    singles = [nonergodic_times(f, t_max, tol=tol) for f in factors]
    all_times = report.time_values
    contains = [_contains_times(all_times, s.time_values) for s in singles]
    strict = [c and len(all_times) > len(s.times) for c, s in zip(contains, singles)]
    growth = []
    for j in range(1, len(freqs) + 1):
        prefix = product_flow(factors[:j])
        growth.append({"d": j, "count": len(nonergodic_times(prefix, t_max, tol=tol).times)})
    return {
        "alpha": [_fmt_alpha(a) for a in model.alpha],
        "N": N,
        "t_max": float(t_max),
        "flow_fix_dimension": report.flow_fix_dimension,
        "flow_ergodic_within_truncation": report.flow_ergodic,
        "integer_relations": [list(k) for k in report.integer_relations],
        "nonergodic_count": len(report.times),
        "single_counts": [len(s.times) for s in singles],
        "contains_each_factor": contains,
        "strictly_contains_each_factor": strict,
        "growth_with_d": growth,
        "report": report,
    }
