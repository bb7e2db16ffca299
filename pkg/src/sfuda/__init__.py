"""Source-free domain adaptation toolkit for precomputed feature vectors.

Fit probes on a labeled source domain, adapt them to an unlabeled
target (prototype alignment on the sphere, pseudo-label adapter
training, or normalization-statistics swapping), and analyze batches of
outcomes with the failure-rate and regression machinery.
"""
from .core import (
    AllCentroidsStale,
    DimMismatch,
    EmptyClass,
    EmptyInput,
    LabelOutOfRange,
    LabeledDomain,
    LinearClassifier,
    NonFiniteValue,
    Prototypes,
    SfudaError,
    ShapeMismatch,
    TooFewSamples,
    UNLABELED,
    UnlabeledSample,
    ZeroRow,
    ZeroVector,
    check_soft_predictions,
    l2_normalize_rows,
    validate_domain,
)
from .io import (
    ExperimentSpec,
    parse_manifest,
    read_csv,
    read_features,
    read_sfdk,
    write_manifest,
    write_sfdk,
)
from .probing import (
    FitConfig,
    class_prototypes,
    cosine_dissim,
    cp_accuracy,
    cp_classify,
    fit_multinomial,
    lp_accuracy,
    predict_labels,
    predict_proba,
)
from .align import (
    KMeansConfig,
    ScaResult,
    init_from_hard_preds,
    init_from_mr_weights,
    init_from_soft_preds,
    init_from_source_labels,
    sca,
    sca_init,
    spherical_kmeans,
)
from .shot import (
    FeatureAdapter,
    FeatureStats,
    ShotConfig,
    ShotLiteResult,
    adapter_objective,
    estimate_stats,
    im_loss,
    shot_lite_adapt,
    shot_pseudo_labels,
    standardize,
)
from .stats import (
    BackboneRecord,
    RegressionFit,
    adjusted_r2,
    coef_pvalues,
    fit_interaction,
    fit_linear,
    mean_std,
    prune_insignificant,
    regularized_incomplete_beta,
    student_t_pvalue,
)
from .harness import (
    ExperimentOutcome,
    ShiftSpec,
    adapt_predictions,
    conditional_degradation,
    failure_rate,
    gen_domain_pair,
    group_summary,
    run_pair,
)

__version__ = "0.1.0"
