"""Substitute adjustment for finite mixture models.

Recover a discrete latent class from high-dimensional covariates by a
whitened third-moment tensor decomposition, then estimate per-coordinate
adjusted regression targets against the recovered class, with runtime-checkable
finite-sample error bounds and a reproducible simulation harness.
"""

from .adjust import (
    BoundReport,
    EstimateResult,
    group_means,
    oracle_beta,
    projection_diff_norm,
    rho,
    substitute_beta,
    theorem1_bound,
)
from .baselines import RidgeFit, augmented_ridge, ridge
from .config import ExperimentConfig, RunManifest, TOOL_VERSION
from .diagnostics import (
    KakutaniReport,
    MislabelBounds,
    RelativeErrorReport,
    SeparationReport,
    bhattacharyya_gaussian,
    kakutani_curves_to_csv,
    kakutani_partial_sums,
    mislabel_bounds,
    relative_errors,
    report_to_json,
    separation,
)
from .estimators import LatentClassRecovery, SubstituteAdjustedRegression
from .model import (
    LabeledDataset,
    MixtureSpec,
    OutcomeSpec,
    model_from_json,
    model_to_json,
    population_beta,
    population_beta_heterogeneous,
    validate_spec,
)
from .recover import (
    Assignment,
    align_labels,
    assign_substitutes,
    class_counts_alpha,
    mislabel_rate,
    relabel,
)
from .simulate import (
    SimSeed,
    draw_mixture_spec,
    draw_outcome_spec,
    simulate_covariates,
    simulate_outcomes,
)
from .spectral import (
    ComponentEstimate,
    PopulationMoments,
    SpectralOptions,
    WhitenedTensor,
    WhiteningMap,
    complete_diagonal,
    compute_whitening,
    estimate_means,
    offdiag_second_moment,
    recover_components,
    tensor_power_decompose,
    whitened_third_moment,
)

__version__ = TOOL_VERSION

__all__ = [name for name in dir() if not name.startswith("_")]
