"""Replica predictions for linear models with Markov or hidden-Markov priors."""

from .laws import ConditionalInputLaw, GaussianAtom, PointMass
from .markov_core import (
    EffectiveStates,
    HiddenMarkovPrior,
    IrreducibilityError,
    MarkovPrior,
    ProbabilityVector,
    TransitionMatrix,
    ValidationError,
    binary_markov_kernel,
    is_irreducible,
    joint_chain,
    sparse_hmm_prior,
    stationary_distribution,
)
from .single_symbol import (
    QuadratureError,
    ScalarChannel,
    conditional_mse,
    conditional_var,
    cross_entropy,
    mean_square_posterior_mean,
    output_density,
    posterior_mean,
)
from .solver import (
    MatchedModelRequired,
    ModelSpec,
    ReplicaSolution,
    SolverError,
    fixed_point_residual,
    free_energy,
    free_energy_term,
    gauss_markov_eta,
    gauss_markov_free_energy,
    mutual_information,
    replica_mmse,
    solve_fixed_point,
)

__all__ = [
    "ConditionalInputLaw",
    "GaussianAtom",
    "PointMass",
    "EffectiveStates",
    "HiddenMarkovPrior",
    "IrreducibilityError",
    "MarkovPrior",
    "ProbabilityVector",
    "TransitionMatrix",
    "ValidationError",
    "binary_markov_kernel",
    "is_irreducible",
    "joint_chain",
    "sparse_hmm_prior",
    "stationary_distribution",
    "QuadratureError",
    "ScalarChannel",
    "conditional_mse",
    "conditional_var",
    "cross_entropy",
    "mean_square_posterior_mean",
    "output_density",
    "posterior_mean",
    "MatchedModelRequired",
    "ModelSpec",
    "ReplicaSolution",
    "SolverError",
    "fixed_point_residual",
    "free_energy",
    "free_energy_term",
    "gauss_markov_eta",
    "gauss_markov_free_energy",
    "mutual_information",
    "replica_mmse",
    "solve_fixed_point",
]

__version__ = "0.1.0"
