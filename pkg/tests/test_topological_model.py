import itertools

import numpy as np
import pytest

from koopman_lab.errors import NotMarkovLattice
from koopman_lab.markov_operators import MarkovOperator, SemiflowMap, koopman_of_map
from koopman_lab.measure_space import new_space, uniform_space
from koopman_lab.semigroup_engine import identity_semigroup
from koopman_lab.topological_model import (
    TopologicalModel,
    build_finite_model,
    separable_generating_system,
    verify_model_isomorphism,
)

CYCLE = SemiflowMap([1, 2, 0])


def test_identity_model():
    space = new_space([0.5, 0.25, 0.25], ["a", "b", "c"])
    model = build_finite_model(space, MarkovOperator(np.eye(3), space))
    assert model.K == ("a", "b", "c")
    assert model.psi == SemiflowMap([0, 1, 2])
    assert np.array_equal(model.nu, space.weights)


def test_cycle_model():
    space = uniform_space(3)
    T = koopman_of_map(space, CYCLE)
    model = build_finite_model(space, T)
    assert model.psi == CYCLE
    assert np.allclose(model.nu, 1 / 3)
    res = verify_model_isomorphism(model, T)
    assert res.passed and res.residual == 0.0
    assert res.details["intertwining"] == 0.0


def test_averaging_has_no_model():
    with pytest.raises(NotMarkovLattice) as exc:
        build_finite_model(uniform_space(2), MarkovOperator([[0.5, 0.5], [0.5, 0.5]], uniform_space(2)))
    assert "lattice" in exc.value.witness


def test_wrong_nu_shows_in_transport():
    space = new_space([0.5, 0.25, 0.25])
    T = MarkovOperator(np.eye(3), space)
    model = TopologicalModel(K=(0, 1, 2), psi=SemiflowMap([0, 1, 2]), nu=np.array([0.25, 0.5, 0.25]),
                             phi=(0, 1, 2))
    res = verify_model_isomorphism(model, T)
    assert not res.passed
    assert res.details["measure_transport"] == pytest.approx(0.25)
    assert res.witness["component"] == "measure_transport"


def test_wrong_psi_shows_in_intertwining():
    space = new_space([0.5, 0.3, 0.2])
    T = MarkovOperator(np.eye(3), space)
    model = TopologicalModel(K=(0, 1, 2), psi=SemiflowMap([0, 2, 1]), nu=space.weights, phi=(0, 1, 2))
    res = verify_model_isomorphism(model, T)
    assert res.details["intertwining"] >= space.weights.min()


def test_model_validation():
    with pytest.raises(ValueError):
        TopologicalModel(K=(0, 1), psi=SemiflowMap([0, 1]), nu=[0.5, 0.5], phi=(0, 0))


def _markov_lattice_operators(max_n):
    for n in range(1, max_n + 1):
        for w in (np.full(n, 1 / n), np.arange(1, n + 1) / (n * (n + 1) / 2)):
            space = new_space(w)
            for perm in itertools.permutations(range(n)):
                phi = SemiflowMap(perm)
                if phi.is_measure_preserving(space):
                    yield space, koopman_of_map(space, phi)


def test_every_markov_lattice_operator_has_exact_model():
    count = 0
    for space, T in _markov_lattice_operators(5):
        model = build_finite_model(space, T)
        assert verify_model_isomorphism(model, T, tol=0.0).residual == 0.0
        count += 1
    assert count > 150


def test_model_functoriality():
    rng = np.random.default_rng(8)
    for n in (3, 4, 5):
        space = uniform_space(n)
        for _ in range(5):
            phi = SemiflowMap(rng.permutation(n))
            T = koopman_of_map(space, phi)
            psi = build_finite_model(space, T).psi
            composed = psi
            for k in range(1, 5):
                assert build_finite_model(space, T.power(k)).psi == composed
                composed = composed.compose(psi)


def test_separable_system_examples():
    space = uniform_space(3)
    singles = [[a] for a in range(3)]
    res = separable_generating_system(space, singles, [0.0, 1.5], identity_semigroup)
    assert res.partition == [(0,), (1,), (2,)] and res.separating
    res = separable_generating_system(space, [[0]], [1.0], identity_semigroup)
    assert res.partition == [(0,), (1, 2)] and not res.separating
    res = separable_generating_system(space, [[0]], [1.0, 2.0], koopman_of_map(space, CYCLE))
    assert res.separating
    assert res.as_dict()["metrizable"]
    with pytest.raises(ValueError):
        separable_generating_system(space, [[0]], [-1.0], identity_semigroup)
