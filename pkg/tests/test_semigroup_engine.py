import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, strategies as st

from koopman_lab.errors import DimensionMismatch
from koopman_lab.markov_operators import MarkovOperator, classify_operator
from koopman_lab.measure_space import uniform_space
from koopman_lab.semigroup_engine import (
    GeneratorMatrix,
    PerturbationSpec,
    adjoint_measure_check,
    cesaro_average,
    classify_generator,
    continuity_bound_check,
    derivation_check,
    expm,
    expm_evolve,
    identity_semigroup,
    kato_check,
    orbit_integral,
    perturbed_evolve,
    semigroup_matrix,
    simpson_nodes,
    verify_perturbation,
)
from koopman_lab.spectral_flow import FourierFunction, rotation_model

DIFF = np.array([[-1.0, 1.0], [1.0, -1.0]])


def diffusion_closed_form(t):
    a, b = (1 + math.exp(-2 * t)) / 2, (1 - math.exp(-2 * t)) / 2
    return np.array([[a, b], [b, a]])


# ----- matrix exponential ----------------------------------------------------


def test_expm_examples():
    f = np.array([1.0, -2.0, 3.0])
    assert np.allclose(expm_evolve(np.zeros((3, 3)), 5.0, f), f, atol=0)
    assert np.allclose(expm_evolve(-0.7 * np.eye(3), 2.0, f), math.exp(-1.4) * f, rtol=1e-14)
    for t in (0.0, 0.3, 1.0, 4.0):
        assert np.allclose(semigroup_matrix(DIFF, t), diffusion_closed_form(t), atol=1e-14)


@pytest.mark.parametrize("scale", [1e-3, 0.5, 3.0, 40.0, 300.0])
def test_expm_matches_scipy(scale):
    rng = np.random.default_rng(int(scale * 1000))
    for n in (1, 2, 5, 12):
        M = scale * (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / math.sqrt(n)
        ref = scipy.linalg.expm(M)
        err = np.abs(expm(M) - ref).max() / max(1.0, np.abs(ref).max())
        assert err < 1e-11


def test_expm_rejects_bad_input():
    with pytest.raises(DimensionMismatch):
        expm(np.ones((2, 3)))
    with pytest.raises(DimensionMismatch):
        GeneratorMatrix(np.zeros((2, 2)), uniform_space(3))
    with pytest.raises(ValueError):
        expm_evolve(DIFF, -1.0, [1, 0])


@given(st.integers(1, 6), st.integers(0, 2**32 - 1), st.floats(0, 2), st.floats(0, 2))
def test_semigroup_law(n, seed, s, t):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    A *= 2 / max(1e-12, np.linalg.norm(A, 2))
    f = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    lhs = expm_evolve(A, s + t, f)
    rhs = expm_evolve(A, s, expm_evolve(A, t, f))
    assert np.abs(lhs - rhs).sum() <= 1e-10


# ----- derivations, Kato -----------------------------------------------------


def test_derivation_check_examples():
    assert derivation_check(np.zeros((3, 3))).passed
    res = derivation_check(np.diag([1.0, -2.0]))
    assert not res.passed and np.allclose(res.witness["A1"], [1, -2])
    res = derivation_check(DIFF)
    assert not res.passed
    w = res.witness
    assert np.allclose(w["f"], [1, 0]) and np.allclose(w["g"], [1, 0])
    assert np.allclose(w["A(fg)"], [-1, 1])
    assert np.allclose(w["Af*g+f*Ag"], [-2, 0])


def test_derivation_check_rejects_non_real():
    res = derivation_check(np.array([[-1j, 1j], [0, 0]]))
    assert not res.passed


def test_adjoint_measure_check_examples():
    u = uniform_space(2)
    assert adjoint_measure_check(np.zeros((2, 2)), u).passed
    assert adjoint_measure_check(DIFF, u).passed
    res = adjoint_measure_check(np.diag([1.0, -1.0]), u)
    assert not res.passed and np.allclose(res.witness["A'mu"], [0.5, -0.5])
    with pytest.raises(DimensionMismatch):
        adjoint_measure_check(DIFF, uniform_space(3))


def test_kato_check_examples():
    assert kato_check(np.zeros((2, 2))).passed
    assert kato_check(np.diag([0.3, -2.0, 5.0])).passed
    res = kato_check(DIFF)
    assert not res.passed
    assert np.allclose(res.witness["f"], [1, -1])
    assert np.allclose(res.witness["A|f|"], [0, 0])
    assert np.allclose(res.witness["sign(f)Af"], [-2, -2])
    assert not kato_check(np.diag([1j, 0])).passed
    with pytest.raises(ValueError):
        kato_check(DIFF, samples=0)


def test_classify_generator_examples():
    v = classify_generator(np.zeros((3, 3)))
    assert v.derivation.passed and np.allclose(v.q, 0)
    q = np.array([0.5, -1.0, 2.0])
    v = classify_generator(np.diag(q))
    assert np.allclose(v.delta, 0) and np.allclose(v.q, q)
    assert v.decomposition_residual == 0.0 and v.kato.passed and v.derivation.passed
    v = classify_generator(GeneratorMatrix(DIFF, uniform_space(2)))
    assert not v.derivation.passed and not v.kato.passed
    assert v.fixes_measure.passed
    d = v.as_dict()
    assert d["witnesses"]["derivation"] is not None and d["witnesses"]["kato"] is not None


def _random_generator(rng, n):
    kind = rng.integers(3)
    q = rng.uniform(-2, 2, size=n)
    if kind == 0:
        return np.diag(q)
    if kind == 1:
        P = np.eye(n)[rng.permutation(n)]
        return P @ np.diag(q) @ P.T
    W = rng.uniform(0, 1, size=(n, n)) * (rng.uniform(size=(n, n)) < 0.6)
    np.fill_diagonal(W, 0)
    return W - np.diag(W.sum(axis=1)) + np.diag(q)


def test_kato_iff_derivation_plus_q():
    rng = np.random.default_rng(11)
    outcomes = set()
    for _ in range(150):
        n = int(rng.integers(1, 6))
        A = _random_generator(rng, n)
        kato = kato_check(A).passed
        delta = A - np.diag(A @ np.ones(n))
        assert kato == derivation_check(delta).passed
        outcomes.add(kato)
    assert outcomes == {True, False}


def test_finite_derivations_are_zero():
    rng = np.random.default_rng(5)
    for _ in range(300):
        n = int(rng.integers(1, 6))
        A = rng.integers(-2, 3, size=(n, n)).astype(float) * (rng.uniform(size=(n, n)) < 0.3)
        A -= np.diag(A.sum(axis=1))  # force A1 = 0 so Leibniz is what decides
        if derivation_check(A).passed:
            assert np.all(A == 0)
    assert derivation_check(np.zeros((4, 4))).passed


def test_generator_vs_operator_classification():
    rng = np.random.default_rng(2)
    space_cache = {}
    for _ in range(60):
        n = int(rng.integers(1, 5))
        A = _random_generator(rng, n)
        if rng.uniform() < 0.3:
            A = np.zeros((n, n))
        space = space_cache.setdefault(n, uniform_space(n))
        v = classify_generator(GeneratorMatrix(A, space))
        verdicts = [classify_operator(MarkovOperator(semigroup_matrix(A, t), space)).markov_lattice
                    for t in (0.5, 1.0, 2.0)]
        if v.markov_derivation.passed and v.fixes_measure.passed:
            assert all(verdicts)
        else:
            assert not all(verdicts)


# ----- perturbation formula --------------------------------------------------


def test_perturbed_evolve_constant_q():
    n, c = 3, -0.4
    spec = PerturbationSpec(GeneratorMatrix(np.zeros((n, n))), np.full(n, c))
    f = np.array([1.0, 2.0, -1.0])
    for t in (0.0, 0.5, 2.0):
        assert np.allclose(perturbed_evolve(spec, t, f), math.exp(c * t) * f, rtol=1e-14)
    res = verify_perturbation(spec, [0.5, 1, 2], f)
    assert res.passed and res.residual < 1e-14


def test_perturbed_evolve_atomic_against_expm():
    # delta a permutation conjugated zero is still zero; use a nonzero q profile instead
    rng = np.random.default_rng(1)
    q = rng.uniform(-1, 1, 4)
    spec = PerturbationSpec(GeneratorMatrix(np.zeros((4, 4)), uniform_space(4)), q)
    f = rng.standard_normal(4)
    res = verify_perturbation(spec, [0.25, 1.0, 2.0], f, tol=1e-12)
    assert res.passed


def test_perturbed_evolve_t0_and_validation():
    spec = PerturbationSpec(GeneratorMatrix(np.zeros((2, 2))), np.ones(2))
    f = np.array([3.0, 4.0])
    assert np.array_equal(perturbed_evolve(spec, 0.0, f), f)
    with pytest.raises(ValueError):
        perturbed_evolve(spec, -1.0, f)
    with pytest.raises(ValueError):
        perturbed_evolve(spec, 1.0, f, quad_steps=0)


def _rotation_setup():
    model = rotation_model([math.sqrt(2)], 32)
    spec = PerturbationSpec(model.generator(), FourierFunction.cosine(model, 1))
    f = FourierFunction.constant(model) + FourierFunction.mode(model, 1)
    return model, spec, f


def test_perturbation_rotation_matches_expm():
    _, spec, f = _rotation_setup()
    res = verify_perturbation(spec, [0.25, 0.5, 1.0, 2.0], f, tol=1e-6, quad_steps=256)
    assert res.passed and res.residual <= 1e-6


def test_perturbation_detects_wrong_q():
    model, spec, f = _rotation_setup()
    wrong = PerturbationSpec(spec.delta, spec.q + FourierFunction.constant(model))
    res = verify_perturbation(wrong, [1.0], f, generator=spec.generator())
    assert not res.passed and res.residual >= 0.1


def test_quadrature_order():
    _, spec, f = _rotation_setup()
    steps = (16, 32, 64, 128)
    res = [verify_perturbation(spec, [0.25, 0.5, 1.0, 2.0], f, quad_steps=s).residual for s in steps]
    orders = [math.log(r0 / r1) / math.log(2) for r0, r1 in zip(res, res[1:])]
    assert min(orders) >= 4.0


def test_simpson_nodes():
    x = simpson_nodes(2.0, 4)
    assert len(x) == 9 and x[0] == 0 and x[-1] == 2.0


# ----- Cesaro averages and the continuity bound ------------------------------


def test_cesaro_identity():
    f = np.array([1.0, -3.0])
    for t in (0.1, 1.0, 7.0):
        assert np.allclose(cesaro_average(identity_semigroup, t, f), f, rtol=1e-14)


def test_cesaro_scalar_closed_form():
    c, t = -0.8, 1.7
    A = GeneratorMatrix(c * np.eye(2))
    f = np.array([2.0, 1.0])
    avg = cesaro_average(A.semigroup(), t, f)
    assert np.allclose(avg, (math.exp(c * t) - 1) / (c * t) * f, rtol=1e-12)


def test_cesaro_rotation_small_t_converges():
    model = rotation_model([math.sqrt(2)], 32)
    G = model.generator()
    f = FourierFunction.mode(model, 3) + FourierFunction.constant(model)
    ts = [10.0 ** -k for k in range(1, 5)]
    gaps = [(cesaro_average(G.semigroup(), t, f) - f).l1_coeff_norm() for t in ts]
    assert all(b < a for a, b in zip(gaps, gaps[1:]))
    # only the e_3 coefficient moves: (e^{i lam t} - 1) / (i lam t) - 1
    lam = 2 * math.pi * 3 * math.sqrt(2)
    for t, gap in zip(ts, gaps):
        z = 1j * lam * t
        assert gap == pytest.approx(abs((np.exp(z) - 1) / z - 1), rel=1e-8)


def test_orbit_integral_zero_time():
    f = np.array([1.0, 2.0])
    assert np.array_equal(orbit_integral(identity_semigroup, 0.0, f), [0, 0])
    with pytest.raises(ValueError):
        cesaro_average(identity_semigroup, 0.0, f)


def test_continuity_bound_identity():
    f = np.array([1.0, -2.0, 0.5])
    res = continuity_bound_check(identity_semigroup, f, 1.0, [0.0, 0.1, 0.5])
    assert res.passed
    assert all(lhs == 0 for _, lhs, _ in res.details["rows"])


def test_continuity_bound_rotation():
    model = rotation_model([math.sqrt(2)], 32)
    G = model.generator()
    for k in (1, 7):
        f = FourierFunction.mode(model, k)
        res = continuity_bound_check(G.semigroup(), f, 1.0, np.linspace(0.01, 0.5, 50))
        assert res.passed
    res = continuity_bound_check(G.semigroup(), f, 1.0, [0.0])
    assert res.details["rows"][0][1] == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ValueError):
        continuity_bound_check(G.semigroup(), f, 1.0, [2.0])
