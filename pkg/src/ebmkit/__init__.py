"""ebmkit: interpretable risk modeling with explainable boosting machines.

Additive models of boosted shallow trees (with automatically detected
pairwise interaction terms), a logistic-regression baseline, a
hospital-stratified evaluation harness, deterministic reporting artifacts,
and a ground-truth synthetic cohort generator for end-to-end verification.
"""

from .baseline import LogisticBaseline, LrModel, fit_lr, lr_gradient, predict_lr
from .binning import (BinDefinition, BinnedMatrix, QuantileBinner, bin_column,
                      bin_index, bin_matrix, fit_bins, fit_categorical_bins,
                      fit_feature_bins)
from .boosting import (BoostState, EarlyStopTracker, TrainConfig, boost_epoch,
                       center_shapes, fit_ebm, fit_ebm_arrays, fit_leaf_update,
                       fit_pair_shapes, outer_bag_aggregate)
from .errors import (ConfigError, DataError, EbmKitError, MetricError,
                     ModelFormatError, SchemaError)
from .estimator import EbmClassifier, ensure_binary_target, ensure_feature_frame, infer_feature_kinds
from .interactions import PairCandidate, coarse_axis, detect_interactions
from .metrics import (CalibrationPoint, EbmTrainer, EvalReport,
                      ExternalScoreTrainer, LrTrainer, align_external_scores,
                      auroc, auroc_bruteforce, calibration_curve, cv_evaluate,
                      external_validate, ingest_external_scores, log_loss)
from .model import (EbmModel, LocalExplanation, PairShape, ShapeFunction,
                    feature_importance, load_model, local_explanation,
                    model_from_bytes, model_to_bytes, predict_logit,
                    predict_proba, save_model)
from .preprocess import (DesignMatrix, DummyEncoder, ExclusionReport,
                         ExclusionRule, ExclusionRuleSet, ImputationStats,
                         MeanImputer, apply_exclusions, dummy_encode,
                         hospital_split, impute_mean, kfold)
from .reporting import (AurocTable, ImportanceTable, LinearScale, ShapeExport,
                        SvgOptions, auroc_table, calibration_svg, export_shape,
                        importance_table, render_shape_svg)
from .schema import (Cohort, ColumnSpec, FeatureSchema, MISSING_TOKEN,
                     cohort_from_frame, load_csv, save_csv)
from .synth import (CohortSpec, PRESETS, generate_synthetic, preset,
                    solve_intercept_for_prevalence)
from .truth import (CategoryEffects, CompositeShape, PiecewiseLinear,
                    QuadrantInteraction, StepFunction, TruthModel, sigmoid,
                    solve_intercept)

__version__ = "0.1.0"
