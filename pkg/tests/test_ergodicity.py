import itertools
import math
from fractions import Fraction

import numpy as np
import pytest

from koopman_lab.ergodicity import (
    boundary_group_check,
    ergodicity_report,
    fix_dimension,
    integer_relations,
    invariant_sets,
    irreducibility_check,
    nonergodic_times,
    product_torus_demo,
    ratio_relation,
)
from koopman_lab.markov_operators import MarkovOperator, SemiflowMap, koopman_of_map
from koopman_lab.measure_space import uniform_space
from koopman_lab.spectral_flow import DiagonalGenerator, rotation_model

SQRT2 = math.sqrt(2)


def test_invariant_sets_examples():
    assert invariant_sets(SemiflowMap([1, 2, 0])) == [frozenset(), frozenset({0, 1, 2})]
    assert len(invariant_sets(SemiflowMap([0, 1]))) == 4
    sets = invariant_sets(SemiflowMap([1, 0, 2]))
    assert sets == [frozenset(), frozenset({2}), frozenset({0, 1}), frozenset({0, 1, 2})]
    # a transient atom feeding a cycle belongs to the cycle's invariant set
    assert invariant_sets(SemiflowMap([0, 0])) == [frozenset(), frozenset({0, 1})]


def test_irreducibility_examples():
    u3 = uniform_space(3)
    assert irreducibility_check(koopman_of_map(u3, SemiflowMap([1, 2, 0]))).passed
    res = irreducibility_check(MarkovOperator(np.eye(2), uniform_space(2)))
    assert not res.passed and res.witness["ideal_support"] == [0]
    blocks = koopman_of_map(uniform_space(4), SemiflowMap([1, 0, 3, 2]))
    res = irreducibility_check(blocks)
    assert not res.passed
    S = res.witness["ideal_support"]
    # the ideal of functions vanishing off S is invariant: T maps it into itself
    f = np.zeros(4)
    f[S] = 1.0
    Tf = (blocks.matrix @ f).real
    assert np.all(Tf[~np.isin(np.arange(4), S)] == 0)


def test_ergodicity_report_fields():
    r = ergodicity_report(uniform_space(3), SemiflowMap([1, 2, 0]))
    assert r.ergodic and r.irreducible and r.fix_dimension == 1 and r.boundary_group_ok
    r = ergodicity_report(uniform_space(4), SemiflowMap([1, 0, 3, 2]))
    assert not r.ergodic and not r.irreducible and r.fix_dimension == 2


def test_ergodic_iff_irreducible_exhaustive():
    for n in range(1, 6):
        space = uniform_space(n)
        for perm in itertools.permutations(range(n)):
            phi = SemiflowMap(perm)
            T = koopman_of_map(space, phi)
            ergodic = len(invariant_sets(phi)) == 2 or n == 1
            assert ergodic == irreducibility_check(T).passed


def test_fix_dimension_examples():
    m = rotation_model([SQRT2], 32)
    assert fix_dimension(m, 0.0).dimension == m.n_modes
    assert fix_dimension(rotation_model([1], 2), 1).dimension == 5
    res = fix_dimension(m, 1.0)
    assert res.dimension == 1 and res.modes == [(0,)] and res.approximate
    assert not fix_dimension(rotation_model([1], 2), Fraction(1, 2)).approximate
    with pytest.raises(ValueError):
        fix_dimension(m, -1)


def test_boundary_group_examples():
    assert boundary_group_check(rotation_model([SQRT2], 8)).passed
    m = rotation_model([1], 4)
    res = boundary_group_check(DiagonalGenerator.from_function(m, lambda k: 1j * k[0] ** 2))
    assert not res.passed and res.witness["k"] == [1] and res.witness["l"] == [1]
    assert boundary_group_check(DiagonalGenerator(m, np.zeros(m.shape))).passed


def test_nonergodic_times_sqrt2():
    m = rotation_model([SQRT2], 4)
    r = nonergodic_times(m, 3)
    ts = r.time_values
    assert ts == sorted(ts) and all(0 < t <= 3 for t in ts)
    target = 1 / (4 * SQRT2)
    assert any(abs(t - target) < 1e-15 for t in ts)
    # closed form: every m / (k sqrt 2) up to 3
    expected = sorted({round(j / (k * SQRT2), 12) for k in range(1, 5) for j in range(1, int(3 * k * SQRT2) + 1)})
    assert [round(t, 12) for t in ts] == expected
    assert all(fix_dimension(m, t).dimension >= 2 for t in ts)
    assert r.flow_ergodic and r.flow_fix_dimension == 1 and r.approximate
    assert "ergodic within truncation" in r.as_dict()["note"]


def test_nonergodic_times_zero_frequency():
    r = nonergodic_times(rotation_model([0], 3), 2)
    assert r.every_time_nonergodic and not r.flow_ergodic
    assert r.flow_fix_dimension == 7


def test_nonergodic_times_rational_exact():
    r = nonergodic_times(rotation_model([1], 2), 2)
    assert [row["t_exact"] for row in r.times] == ["1/2", "1", "3/2", "2"]
    assert [row["dim"] for row in r.times] == [3, 5, 3, 5]
    assert not r.approximate


def test_exact_and_float_paths_agree():
    exact = nonergodic_times(rotation_model(["1/3"], 6), 4)
    approx = nonergodic_times(rotation_model([1 / 3], 6), 4)
    assert np.allclose(exact.time_values, approx.time_values, rtol=1e-12)
    assert [r["dim"] for r in exact.times] == [r["dim"] for r in approx.times]


def test_refinement_never_loses_entries():
    for alpha in ([SQRT2], [1, SQRT2]):
        d = len(alpha)
        coarse = nonergodic_times(rotation_model(alpha, 4 if d == 1 else 2), 3)
        fine = nonergodic_times(rotation_model(alpha, 8 if d == 1 else 4), 3)
        dims = {r["key"]: r["dim"] for r in fine.times}
        for r in coarse.times:
            assert r["key"] in dims and dims[r["key"]] >= r["dim"]


def test_relations_and_continued_fraction():
    assert ratio_relation([1, SQRT2], 32) is None
    assert ratio_relation([1, 2.0], 100) == (2, -1)
    assert integer_relations(rotation_model([1, 2], 2))[0] == (2, -1)
    assert integer_relations(rotation_model([1, SQRT2], 4)) == []


def test_product_torus_demo():
    indep = product_torus_demo([1, SQRT2], 2, 3.0)
    assert indep["flow_fix_dimension"] == 1
    assert all(indep["strictly_contains_each_factor"])
    counts = [g["count"] for g in indep["growth_with_d"]]
    assert counts == sorted(counts) and counts[-1] > counts[0]
    dep = product_torus_demo([1, 2], 2, 3.0)
    assert [2, -1] in dep["integer_relations"] and dep["flow_fix_dimension"] >= 2
    single = product_torus_demo([SQRT2], 4, 3.0)
    assert single["report"].time_values == nonergodic_times(rotation_model([SQRT2], 4), 3.0).time_values


def test_nonergodic_times_validation():
    with pytest.raises(ValueError):
        nonergodic_times(rotation_model([1], 2), 0)
