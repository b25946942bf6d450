"""Optimization-based MCMC for PDE-constrained Bayesian inverse problems.

The sampler draws proposals by solving randomly perturbed regularized
least-squares problems (randomize-then-optimize) and corrects them with an
independence Metropolis-Hastings step.  A small fully-connected network,
trained on solver snapshots placed by a local Gaussian design, can replace
the forward model in the online phase.
"""

from .config import ConfigError, RunConfig, load_config, parse_config
from .design import (
    LocalGaussian,
    build_training_set,
    covariance_identity_check,
    linearize,
    sample_local,
    sample_prior,
)
from .diagnostics import ErrorReport, EssReport, error_metrics, ess, ess_report, field_summaries
from .fem import (
    BoundaryConditions,
    Mesh,
    ObservationOperator,
    PermeabilityField,
    assemble_and_solve,
    benchmark_source,
    observe,
)
from .fields import KlBasis, KlModes, RbfWeights, kl_decompose, kl_field, rbf_field
from .forward_model import (
    ForwardProblem,
    forward,
    forward_with_jacobian,
    jacobian,
    jacobian_dot,
    solve_pressure,
)
from .leastsq import NlsResult, NlsSpec, solve_nls
from .mlp import (
    Adam,
    MlpArchitecture,
    MlpSurrogate,
    TrainingSet,
    TrainOptions,
    load_surrogate,
    save_surrogate,
    swish,
    train,
)
from .rto import (
    ChainResult,
    FullspaceRto,
    ProposalRecord,
    RtoSubspace,
    SolverOptions,
    build_fullspace,
    build_subspace,
    find_reference,
    generate_proposals,
    mh_correct,
    propose,
    propose_fullspace,
    run_chain,
    subspace_logabsdet,
    weight_log,
    weight_log_fullspace,
)
from .whitening import (
    FemMisfit,
    LinearMisfit,
    MisfitEvaluator,
    SurrogateMisfit,
    WhitenedProblem,
)

__version__ = "0.1.0"
