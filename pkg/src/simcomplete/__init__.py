"""Similarity-matrix completion via low-rank PSD factorization.

The package estimates a ground-truth cosine-similarity matrix from an
inaccurate one computed under missing data. Solvers descend on a factor
V with estimate V V^T, which is positive semidefinite with rank at most
the factor width by construction; variants trade the low-rank regularizer
against spectral-thresholding and unconstrained two-factor baselines.
"""

from .errors import (
    AllMissingRow,
    DegenerateBaseline,
    DimensionMismatch,
    Diverged,
    EmptyFeature,
    InvalidBound,
    InvalidK,
    InvalidRank,
    InvalidRho,
    NonConvergence,
    ParseError,
    RaggedRows,
)
from .linalg import (
    EigenDecomposition,
    effective_rank,
    factor_from_psd,
    frobenius_norm,
    gram_effective_rank,
    nuclear_norm,
    psd_project,
    soft_threshold_eigenvalues,
    sym_eigendecompose,
    symmetrize,
)
from .metrics import MetricReport, ndcg_at_topk, rank_report, recall_at_topk, rmse
from .simdata import (
    DEFAULT_EPSILON,
    MaskSpec,
    MaskedDataset,
    cosine_similarity,
    generate_mask,
    generate_synthetic,
    initial_similarity,
    masked_cosine,
    true_similarity,
)
from .solvers import (
    ConvergenceTrace,
    FactorizedSolution,
    MatrixSolution,
    SolveOutcome,
    SolverConfig,
    SolverKind,
    factor_objective,
    grad_mc_fon,
    grad_smc_f,
    grad_smc_nr,
    grad_smcnmf,
    grad_smcnn,
    impute_with_search_means,
    init_factor,
    mean_impute_similarity,
    solve,
    solve_factorized,
    solve_mc_fon,
    solve_mc_on,
    solve_smc_gd,
    solve_with_theorem_stepsize,
    stepsize_from_theorem,
    two_factor_objective,
)

__version__ = "0.1.0"
