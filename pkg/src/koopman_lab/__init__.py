"""Executable checks for Koopman and Markov lattice semigroups on finite and torus models."""

from .errors import (
    BudgetExceeded,
    DimensionMismatch,
    InternalConsistencyError,
    InvalidExponent,
    KoopmanLabError,
    NonPositiveWeight,
    NotDeterministic,
    NotMarkovLattice,
    QSupportTooWide,
    WeightsDoNotSumToOne,
)
from .measure_space import FiniteProbabilitySpace, new_space, uniform_space
from .markov_operators import (
    MarkovOperator,
    SemiflowMap,
    classify_operator,
    extract_homomorphism,
    koopman_of_map,
    map_from_operator,
)
from .semigroup_engine import (
    GeneratorMatrix,
    PerturbationSpec,
    classify_generator,
    derivation_check,
    expm,
    kato_check,
    perturbed_evolve,
    verify_perturbation,
)
from .spectral_flow import DiagonalGenerator, FourierFunction, SpectralFlowModel, rotation_model
from .topological_model import TopologicalModel, build_finite_model, verify_model_isomorphism
from .ergodicity import ergodicity_report, fix_dimension, nonergodic_times

__version__ = "0.1.0"
