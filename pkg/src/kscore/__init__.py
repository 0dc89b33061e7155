"""Kernel scores, entropies, and dispersion decompositions for generated samples.

Three layers share one numeric path:

* estimators over finite samples (entropy, score, MMD^2, two-stage
  variance / covariance / correlation, and the score decomposition),
* exact oracles over finite discrete distributions, for validating the
  estimators against closed-form values,
* a Monte-Carlo harness with counter-based per-replication streams.
"""

from .errors import (
    AsymmetricInputError,
    ClusterCountMismatchError,
    DegenerateDenominatorError,
    DegenerateInputWarning,
    DegenerateMarginalError,
    DegenerateVarianceError,
    DimensionMismatchError,
    EmptyGroupError,
    EstimateWarning,
    KindMismatchError,
    KscoreError,
    MixedKindsError,
    NonFiniteError,
    ProductTooLargeError,
    SchemaError,
    ShapeMismatchError,
    SingleClassError,
    TooFewClustersError,
    TooFewInnerSamplesError,
    TooFewSamplesError,
)
from .kernels import (
    KERNEL_KINDS,
    KERNEL_PARAMS,
    TOKENS,
    VECTOR,
    GramMatrix,
    KernelSpec,
    check_psd,
    eval_cs_kernel,
    eval_kernel,
    gram,
    pairwise_matrix,
    point_kind,
    points_kind,
    resolve_gamma,
    resolve_scale,
    stack_vectors,
)
from .estimators import (
    CorrelationResult,
    DecompositionReport,
    PairedSampleBlock,
    SampleBlock,
    decompose,
    distributional_correlation,
    distributional_covariance,
    distributional_variance,
    ensemble_gain,
    ensemble_variance_general,
    ensemble_variance_split,
    kernel_entropy,
    kernel_score,
    mmd2,
)
from .exact import (
    DiscreteDistribution,
    DiscreteMixture,
    JointDiscreteMixture,
    bilinear,
    correlation_exact,
    covariance_exact,
    decompose_exact,
    ensemble_average_mixture,
    expected_score_exact,
    kernel_entropy_exact,
    kernel_score_exact,
    pearson_reduction_check,
    variance_exact,
)
from .simulate import (
    GridCell,
    SimulationConfig,
    SimulationResult,
    SlopeFit,
    recommend_sizes,
    replication_rng,
    resolve_threads,
    sample_paired_two_stage,
    sample_two_stage,
)
from .simulate import run as run_simulation
from .evaluate import (
    EvalRecord,
    auroc,
    binarize_loss,
    lcs_length,
    lexical_similarity,
    pearson,
    rouge_l,
)
from .ingest import (
    IngestRecord,
    generation_points,
    group_records,
    load_mixture,
    load_records,
    paired_sample_block,
    sample_block,
    target_points,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # errors
    "KscoreError",
    "KindMismatchError",
    "MixedKindsError",
    "DimensionMismatchError",
    "NonFiniteError",
    "TooFewSamplesError",
    "TooFewClustersError",
    "TooFewInnerSamplesError",
    "ClusterCountMismatchError",
    "DegenerateDenominatorError",
    "DegenerateMarginalError",
    "DegenerateVarianceError",
    "SingleClassError",
    "ShapeMismatchError",
    "AsymmetricInputError",
    "ProductTooLargeError",
    "EmptyGroupError",
    "SchemaError",
    "EstimateWarning",
    "DegenerateInputWarning",
    # kernels
    "KERNEL_KINDS",
    "KERNEL_PARAMS",
    "VECTOR",
    "TOKENS",
    "KernelSpec",
    "GramMatrix",
    "eval_kernel",
    "eval_cs_kernel",
    "pairwise_matrix",
    "gram",
    "check_psd",
    "stack_vectors",
    "point_kind",
    "points_kind",
    "resolve_gamma",
    "resolve_scale",
    # estimators
    "SampleBlock",
    "PairedSampleBlock",
    "CorrelationResult",
    "DecompositionReport",
    "kernel_entropy",
    "kernel_score",
    "mmd2",
    "distributional_variance",
    "distributional_covariance",
    "distributional_correlation",
    "decompose",
    "ensemble_variance_split",
    "ensemble_gain",
    "ensemble_variance_general",
    # exact oracles
    "DiscreteDistribution",
    "DiscreteMixture",
    "JointDiscreteMixture",
    "bilinear",
    "kernel_entropy_exact",
    "kernel_score_exact",
    "expected_score_exact",
    "variance_exact",
    "covariance_exact",
    "correlation_exact",
    "decompose_exact",
    "ensemble_average_mixture",
    "pearson_reduction_check",
    # simulation
    "SimulationConfig",
    "SimulationResult",
    "GridCell",
    "SlopeFit",
    "run_simulation",
    "sample_two_stage",
    "sample_paired_two_stage",
    "replication_rng",
    "recommend_sizes",
    "resolve_threads",
    # evaluation
    "EvalRecord",
    "lcs_length",
    "rouge_l",
    "binarize_loss",
    "lexical_similarity",
    "auroc",
    "pearson",
    # ingestion
    "IngestRecord",
    "load_records",
    "group_records",
    "load_mixture",
    "sample_block",
    "paired_sample_block",
    "generation_points",
    "target_points",
]
