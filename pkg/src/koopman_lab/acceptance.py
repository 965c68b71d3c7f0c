"""The acceptance battery behind ``koopman-lab suite``.

Each ``criterion_*`` function runs one exit criterion and returns a
:class:`CriterionResult`.  Everything random is drawn from a generator
seeded by the caller, and no timing enters the JSON payload, so identical
seeds give identical reports.
"""

from __future__ import annotations

import itertools
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .errors import NotMarkovLattice
from .ergodicity import fix_dimension, nonergodic_times, product_torus_demo
from .markov_operators import (
    MarkovOperator,
    SemiflowMap,
    classify_operator,
    extract_homomorphism,
    koopman_of_map,
    map_from_operator,
)
from .measure_space import new_space, uniform_space
from .semigroup_engine import (
    PerturbationSpec,
    continuity_bound_check,
    derivation_check,
    kato_check,
    verify_perturbation,
)
from .spectral_flow import (
    DiagonalGenerator,
    FourierFunction,
    evolve_spectral,
    multiplicativity_residual,
    rotation_model,
)
from .topological_model import build_finite_model, verify_model_isomorphism

SQRT2 = math.sqrt(2.0)

TOL_OPERATOR = 1e-9
C1_MAX_SECONDS = 10.0
C1_RANDOM_SAMPLES = 500
C2_TIMES = (0.1, 0.5, 1.0, 2.0)
C2_TOL = 1e-9
C2_MIN_VIOLATION = 0.1
C3_SAMPLES = 200
C4_TIMES = (0.25, 0.5, 1.0, 2.0)
C4_TOL = 1e-6
C4_QUAD_STEPS = 256
C4_MIN_ORDER = 3.5
C4_ORDER_STEPS = (16, 32, 64, 128, 256)
C4_FLOOR = 1e-11
C5_TOL = 1e-9
C7_T_MAX = 10.0
C7_SAMPLES = 10**4
C7_GAP = 1e-6
C7_MAX_SECONDS = 30.0
C8_N = 2
C8_T_MAX = 3.0

DEFAULT_MAX_SIZE = 6


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    partial: bool = False
    details: dict[str, Any] = field(default_factory=dict)
    seconds: float = 0.0

    def as_dict(self) -> dict:
        return {"criterion": self.number, "name": self.name, "passed": self.passed,
                "partial": self.partial, "details": self.details}

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        extra = " (partial)" if self.partial else ""
        return f"[{tag}] criterion {self.number}: {self.name}{extra}"


def _all_maps(n: int):
    for images in itertools.product(range(n), repeat=n):
        yield SemiflowMap(images)


def _random_stochastic(rng: np.random.Generator, n: int) -> tuple[np.ndarray, str]:
    kind = rng.integers(5)
    if kind == 0:
        return np.eye(n)[rng.permutation(n)], "permutation"
    if kind == 1:
        return np.eye(n)[rng.integers(n, size=n)], "deterministic"
    if kind == 2:
        return rng.dirichlet(np.ones(n), size=n), "dense"
    if kind == 3:
        eps = 10.0 ** -rng.integers(3, 8)
        return (1 - eps) * np.eye(n)[rng.permutation(n)] + eps * rng.dirichlet(np.ones(n), size=n), "near_permutation"
    # doubly stochastic mix of two permutations
    lam = rng.uniform(0.1, 0.9)
    return lam * np.eye(n)[rng.permutation(n)] + (1 - lam) * np.eye(n)[rng.permutation(n)], "doubly_stochastic"


def _operator_agreement(T: MarkovOperator) -> tuple[bool, bool, bool]:
    flag = classify_operator(T, TOL_OPERATOR).markov_lattice
    try:
        extract_homomorphism(T, TOL_OPERATOR)
        hom_ok = True
    except NotMarkovLattice:
        hom_ok = False
    try:
        map_from_operator(T, TOL_OPERATOR)
        map_ok = True
    except NotMarkovLattice:
        map_ok = False
    return flag, hom_ok, map_ok


def criterion_1(rng: np.random.Generator, max_size: int = DEFAULT_MAX_SIZE) -> CriterionResult:
    start = time.perf_counter()
    map_n = min(5, max_size)
    rand_n = min(6, max_size)
    disagreements = []
    counts = {"maps": 0, "maps_markov_lattice": 0, "random": 0, "random_markov_lattice": 0}
    for n in range(1, map_n + 1):
        space = uniform_space(n)
        for phi in _all_maps(n):
            flag, hom_ok, map_ok = _operator_agreement(koopman_of_map(space, phi))
            counts["maps"] += 1
            counts["maps_markov_lattice"] += flag
            if not (flag == hom_ok == map_ok):
                disagreements.append({"map": list(phi.atom_map), "flags": [flag, hom_ok, map_ok]})
    kinds: dict[str, int] = {}
    for _ in range(C1_RANDOM_SAMPLES):
        n = int(rng.integers(1, rand_n + 1))
        m, kind = _random_stochastic(rng, n)
        kinds[kind] = kinds.get(kind, 0) + 1
        flag, hom_ok, map_ok = _operator_agreement(MarkovOperator(m, uniform_space(n)))
        counts["random"] += 1
        counts["random_markov_lattice"] += flag
        if not (flag == hom_ok == map_ok):
            disagreements.append({"matrix": m, "kind": kind, "flags": [flag, hom_ok, map_ok]})
    seconds = time.perf_counter() - start
    passed = not disagreements and seconds < C1_MAX_SECONDS
    return CriterionResult(1, "operator-level equivalence (Markov lattice <=> homomorphism <=> point map)",
                           passed, partial=max_size < DEFAULT_MAX_SIZE,
                           details={**counts, "random_kinds": dict(sorted(kinds.items())),
                                    "disagreements": disagreements[:5],
                                    "n_disagreements": len(disagreements),
                                    "runtime_ok": seconds < C1_MAX_SECONDS},
                           seconds=seconds)


def criterion_2(rng: np.random.Generator) -> CriterionResult:
    rows = []
    ok = True
    for alpha, N in (([SQRT2], 32), ([1.0, SQRT2], 4)):
        model = rotation_model(alpha, N)
        G = model.generator()
        for t in C2_TIMES:
            mult, _ = multiplicativity_residual(G, t)
            f = FourierFunction(model, rng.standard_normal(model.shape) + 1j * rng.standard_normal(model.shape))
            Tf = evolve_spectral(G, t, f)
            iso = abs(Tf.l2_norm() - f.l2_norm()) / f.l2_norm()
            unit = float(np.abs(np.abs(np.exp(t * G.eigenvalues)) - 1).max())
            one = FourierFunction.constant(model)
            markov = (evolve_spectral(G, t, one) - one).l1_coeff_norm()
            good = bool(max(mult, iso, unit, markov) <= C2_TOL)
            ok &= good
            rows.append({"alpha": alpha, "N": N, "t": t, "multiplicativity": mult, "isometry": iso,
                         "unimodular": unit, "T1=1": markov, "ok": good})
    model = rotation_model([1], 4)
    G = DiagonalGenerator.from_function(model, lambda k: 1j * k[0] ** 2)
    e1 = FourierFunction.mode(model, 1)
    e2 = FourierFunction.mode(model, 2)
    lhs = evolve_spectral(G, 1.0, e1) * evolve_spectral(G, 1.0, e1)
    violation = (lhs - evolve_spectral(G, 1.0, e2)).l1_coeff_norm()
    predicted = float(abs(np.exp(2j) - np.exp(4j)))
    bad_ok = bool(violation >= C2_MIN_VIOLATION and abs(violation - predicted) <= C2_TOL)
    return CriterionResult(2, "generator-level equivalence on spectral models", ok and bad_ok,
                           details={"rotation": rows, "k_squared_violation": violation,
                                    "k_squared_predicted": predicted, "k_squared_ok": bad_ok})


def _random_generator(rng: np.random.Generator, n: int) -> tuple[np.ndarray, str]:
    kind = int(rng.integers(4))
    q = rng.uniform(-2, 2, size=n)
    if kind == 0:
        return np.diag(q), "diagonal"
    if kind == 1:
        P = np.eye(n)[rng.permutation(n)]
        return P @ np.diag(q) @ P.T, "permuted_diagonal"
    rates = rng.uniform(0, 2, size=(n, n)) * (rng.random((n, n)) < 0.6)
    np.fill_diagonal(rates, 0)
    L = rates - np.diag(rates.sum(axis=1))
    if kind == 2:
        return L, "diffusion"
    return L + np.diag(q), "diffusion_plus_potential"


def criterion_3(rng: np.random.Generator) -> CriterionResult:
    disagreements = []
    tally: dict[str, list[int]] = {}
    for _ in range(C3_SAMPLES):
        n = int(rng.integers(2, 7))
        A, kind = _random_generator(rng, n)
        q = A @ np.ones(n)
        kato = kato_check(A).passed
        deriv = derivation_check(A - np.diag(q)).passed
        tally.setdefault(kind, [0, 0])[0 if kato else 1] += 1
        if kato != deriv:
            disagreements.append({"kind": kind, "A": A, "kato": kato, "derivation": deriv})
    return CriterionResult(3, "Kato equality <=> derivation plus potential", not disagreements,
                           details={"samples": C3_SAMPLES,
                                    "by_kind_pass_fail": dict(sorted(tally.items())),
                                    "n_disagreements": len(disagreements),
                                    "disagreements": disagreements[:5]})


def perturbation_setup():
    model = rotation_model([SQRT2], 32)
    spec = PerturbationSpec(model.generator(), FourierFunction.cosine(model, 1))
    f = FourierFunction.constant(model) + FourierFunction.mode(model, 1)
    return spec, f


def criterion_4(rng: np.random.Generator) -> CriterionResult:
    spec, f = perturbation_setup()
    main = verify_perturbation(spec, C4_TIMES, f, tol=C4_TOL, quad_steps=C4_QUAD_STEPS)
    residuals = [verify_perturbation(spec, C4_TIMES, f, tol=C4_TOL, quad_steps=s).residual
                 for s in C4_ORDER_STEPS]
    orders = []
    for (s0, r0), (s1, r1) in itertools.pairwise(zip(C4_ORDER_STEPS, residuals)):
        if r1 <= C4_FLOOR:
            break
        orders.append(math.log(r0 / r1) / math.log(s1 / s0))
    order_ok = bool(orders) and min(orders) >= C4_MIN_ORDER
    return CriterionResult(4, "perturbation formula vs truncated matrix exponential",
                           main.passed and order_ok,
                           details={"residual": main.residual, "tol": C4_TOL,
                                    "per_t": {str(k): v for k, v in main.details["per_t"].items()},
                                    "convergence_steps": list(C4_ORDER_STEPS),
                                    "convergence_residuals": residuals, "orders": orders,
                                    "order_ok": order_ok})


def criterion_5(rng: np.random.Generator) -> CriterionResult:
    model = rotation_model([SQRT2], 32)
    G = model.generator()
    rows = []
    ok = True
    for k in (1, 5, 32):
        f = FourierFunction.mode(model, k)
        res = continuity_bound_check(G.semigroup(), f, 1.0, np.linspace(0.01, 0.5, 50), tol=C5_TOL)
        ok &= res.passed
        rows.append({"mode": k, "passed": res.passed, "worst_margin": res.residual})
    return CriterionResult(5, "Cesaro continuity bound 2s||f||_inf", ok, details={"modes": rows})


def _markov_lattice_family(max_size: int):
    """Every Markov lattice operator for a fixed set of weight vectors per n."""
    for n in range(1, max_size + 1):
        weight_sets = [np.full(n, 1.0 / n)]
        if n >= 2:
            w = np.array([1.0 if i < n // 2 else 2.0 for i in range(n)])
            weight_sets.append(w / w.sum())
        if n >= 3:
            w = np.arange(1, n + 1, dtype=float)
            weight_sets.append(w / w.sum())
        for w in weight_sets:
            space = new_space(w)
            for perm in itertools.permutations(range(n)):
                phi = SemiflowMap(perm)
                if phi.is_measure_preserving(space):
                    yield space, koopman_of_map(space, phi)


def criterion_6(rng: np.random.Generator, max_size: int = DEFAULT_MAX_SIZE) -> CriterionResult:
    cap = min(6, max_size)
    count = 0
    worst = 0.0
    failures = []
    for space, T in _markov_lattice_family(cap):
        model = build_finite_model(space, T)
        res = verify_model_isomorphism(model, T, tol=0.0)
        count += 1
        worst = max(worst, res.residual)
        if res.residual != 0.0:
            failures.append({"weights": space.weights, "psi": list(model.psi.atom_map), "residual": res.residual})
    return CriterionResult(6, "finite topological model, exact isomorphism", not failures and count > 0,
                           partial=max_size < DEFAULT_MAX_SIZE,
                           details={"operators": count, "max_residual": worst, "failures": failures[:5]})


def criterion_7(rng: np.random.Generator) -> CriterionResult:
    start = time.perf_counter()
    model = rotation_model([SQRT2], 32)
    report = nonergodic_times(model, C7_T_MAX)
    listed = np.array(report.time_values)
    brute = [fix_dimension(model, t).dimension for t in listed]
    listed_ok = all(d >= 2 for d in brute) and all(b == r["dim"] for b, r in zip(brute, report.times))

    samples = rng.uniform(0, C7_T_MAX, size=4 * C7_SAMPLES)
    samples = samples[samples > 0]
    idx = np.clip(np.searchsorted(listed, samples), 1, len(listed) - 1)
    gap = np.minimum(np.abs(samples - listed[idx - 1]), np.abs(samples - listed[idx]))
    off = samples[gap > C7_GAP][:C7_SAMPLES]
    off_dims = [fix_dimension(model, t).dimension for t in off]
    off_ok = len(off) == C7_SAMPLES and all(d == 1 for d in off_dims)

    fine = nonergodic_times(rotation_model([SQRT2], 64), C7_T_MAX)
    fine_dims = {r["key"]: r["dim"] for r in fine.times}
    refine_ok = all(r["key"] in fine_dims and fine_dims[r["key"]] >= r["dim"] for r in report.times)
    seconds = time.perf_counter() - start
    passed = listed_ok and off_ok and refine_ok and report.flow_ergodic and seconds < C7_MAX_SECONDS
    return CriterionResult(7, "non-ergodic times are countable and match brute force", passed,
                           details={"n_listed": len(report.times), "n_listed_N64": len(fine.times),
                                    "listed_all_dim_ge_2": listed_ok, "n_off_samples": int(len(off)),
                                    "off_samples_all_dim_1": off_ok, "refinement_keeps_entries": refine_ok,
                                    "flow_ergodic": report.flow_ergodic,
                                    "first_times": report.time_values[:5],
                                    "runtime_ok": seconds < C7_MAX_SECONDS},
                           seconds=seconds)


def criterion_8(rng: np.random.Generator) -> CriterionResult:
    indep = product_torus_demo([1, SQRT2], C8_N, C8_T_MAX)
    dep = product_torus_demo([1, 2], C8_N, C8_T_MAX)
    ok_indep = indep["flow_fix_dimension"] == 1 and all(indep["strictly_contains_each_factor"])
    ok_dep = [2, -1] in dep["integer_relations"] and dep["flow_fix_dimension"] >= 2
    strip = lambda d: {k: v for k, v in d.items() if k != "report"}
    return CriterionResult(8, "finite-d product torus", ok_indep and ok_dep,
                           details={"independent": strip(indep), "dependent": strip(dep)})


CRITERIA: dict[int, Callable] = {
    1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4,
    5: criterion_5, 6: criterion_6, 7: criterion_7, 8: criterion_8,
}
SIZED = {1, 6}


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("KOOPMAN_LAB_THREADS", "1")))
    except ValueError:
        return 1


def run_suite(seed: int = 42, max_size: int = DEFAULT_MAX_SIZE, only=None) -> list[CriterionResult]:
    """Run criteria 1-8; each criterion gets its own generator derived from ``seed``."""
    if max_size < 1:
        raise ValueError("max_size must be >= 1")
    numbers = sorted(only) if only else sorted(CRITERIA)
    seeds = np.random.SeedSequence(seed).spawn(max(CRITERIA))

    def run(k):
        rng = np.random.default_rng(seeds[k - 1])
        start = time.perf_counter()
        res = CRITERIA[k](rng, max_size) if k in SIZED else CRITERIA[k](rng)
        res.seconds = res.seconds or time.perf_counter() - start
        return res

    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        return list(pool.map(run, numbers))


def summary(results: list[CriterionResult], seed: int, max_size: int) -> dict:
    return {
        "seed": seed,
        "max_size": max_size,
        "partial": any(r.partial for r in results) or len(results) < len(CRITERIA),
        "all_passed": all(r.passed for r in results),
        "criteria": [r.as_dict() for r in results],
    }
