"""Robust mean estimation for incomplete data with adversarial outliers.

The package estimates the common mean of high-dimensional examples when most
coordinates of every example are missing and a small fraction of the
examples has been arbitrarily corrupted.  The estimator initializes with the
coordinate-wise median, fills missing entries once with pre-determined
values, and alternates guess-adjusted completion with a spectral
complete-data filter until a certified error radius stops contracting.
"""

from .completion import CompletedMatrix, FillSpec, GVector, fill, g_norm
from .dataset import (
    CompletenessReport,
    IncompleteMatrix,
    PresenceIndex,
    build_presence_index,
    gamma_completeness,
    load_matrix,
    store_matrix,
)
from .errors import (
    ConfigError,
    EigensolverError,
    FormatError,
    MissingValueError,
    NotGammaCompleteError,
    RimmError,
)
from .estimator import (
    ClassParams,
    DistClass,
    EstimatorConfig,
    HashingConfig,
    IterationTrace,
    coordinate_median,
    estimate_mean,
    hash_combine,
    hash_preprocess,
    rho_update,
    stacking_transform,
)
from .generation import (
    AdversaryStrategy,
    DistributionSpec,
    GroundTruth,
    PresencePlan,
    corrupt_and_conceal,
    generate,
)
from .robust_core import (
    FilterState,
    GoodnessReport,
    RobustMeanParams,
    WeightVector,
    goodness_beta,
    goodness_probe,
    naive_prune,
    outlier_scores,
    pair_weights,
    robust_mean_complete,
)

__version__ = "0.1.0"

__all__ = [
    "IncompleteMatrix",
    "PresenceIndex",
    "CompletenessReport",
    "build_presence_index",
    "gamma_completeness",
    "load_matrix",
    "store_matrix",
    "FillSpec",
    "CompletedMatrix",
    "GVector",
    "fill",
    "g_norm",
    "DistributionSpec",
    "PresencePlan",
    "AdversaryStrategy",
    "GroundTruth",
    "generate",
    "corrupt_and_conceal",
    "WeightVector",
    "FilterState",
    "RobustMeanParams",
    "naive_prune",
    "outlier_scores",
    "robust_mean_complete",
    "pair_weights",
    "goodness_probe",
    "GoodnessReport",
    "goodness_beta",
    "DistClass",
    "HashingConfig",
    "EstimatorConfig",
    "ClassParams",
    "IterationTrace",
    "coordinate_median",
    "rho_update",
    "estimate_mean",
    "hash_combine",
    "hash_preprocess",
    "stacking_transform",
    "RimmError",
    "FormatError",
    "MissingValueError",
    "NotGammaCompleteError",
    "ConfigError",
    "EigensolverError",
]
