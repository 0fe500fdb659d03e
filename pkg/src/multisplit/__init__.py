"""Split and multi-split conformal prediction with Markov-bound vote aggregation."""

from .aggregate import (
    FittedMultiSplit,
    MultiSplitConfig,
    SplitComputationError,
    aggregate_intervals,
    check_lambda_condition,
    fit_multi_split,
    markov_bound,
    multi_split_predict,
    multi_split_set,
    per_split_level,
)
from .bench import (
    CoverageEstimate,
    ExperimentConfig,
    LinearGaussianDGP,
    MethodSpec,
    RepRecord,
    SummaryRow,
    load_crime_dataset,
    resolve_method,
    ridge_penalty_for,
    run_experiment,
    simulate_coverage,
    summarize,
    write_records_csv,
    write_summary_csv,
    write_summary_json,
)
from .conformal import (
    ConformalQuantile,
    conformal_quantile,
    invert_score_threshold,
    quantile_index,
    split_conformal_set,
)
from .core import (
    Dataset,
    Interval,
    MultiSplitError,
    NumericalError,
    PredictionSet,
    SplitPlan,
    ValidationError,
    load_dataset,
    make_split_plans,
    prediction_set_from_json,
    prediction_set_to_json,
    set_membership,
)
from .crossconf import (
    FoldPlan,
    cross_conformal_set,
    jackknife_plus_batch,
    jackknife_plus_interval,
    loo_conformal_batch,
    loo_conformal_set,
    make_folds,
)
from .learners import (
    KnnQuantileModel,
    RidgeModel,
    fit_ridge,
    largest_singular_value,
    predict_point,
    predict_quantile,
)
from .scores import (
    ABSOLUTE_RESIDUAL,
    CQR,
    FittedScore,
    ScoreSpec,
    calibration_scores,
    fit_score,
    score_one,
)

__version__ = "0.1.0"
