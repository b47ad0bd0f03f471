"""Counterfactual explanations and audits for black-box classifiers.

The library answers "what is the smallest change to this input that
flips the model's decision?" with a constrained genetic search, then
builds model-level audits (robustness scores, per-group burden, an
individual fairness probe, feature importance) out of the same engine.
Any classifier works: built-in models, plain Python callables, or
external processes speaking a small JSON protocol.
"""

from .audit import (
    BurdenReport,
    FairnessProbe,
    FairnessReport,
    ImportanceReport,
    RobustnessReport,
    audit_fairness,
    audit_robustness,
    burden,
    cerscore,
    feature_importance,
    individual_fairness,
    ncerscore,
    render_report,
)
from .dataset import Dataset, DatasetStats, compute_stats, dataset_from_rows, load_csv
from .distance import (
    Image,
    fitness,
    load_pgm,
    mixed_distance,
    norm_scale,
    save_pgm,
    ssim,
    ssim_distance,
)
from .engine import (
    Constraints,
    Counterfactual,
    CounterfactualResult,
    GAConfig,
    ImageMetric,
    Population,
    SearchProblem,
    constraints_from_dict,
    constraints_to_dict,
    derive_seed,
    evolve,
    fitness_of,
    generate_counterfactuals,
    initialize_population,
    pixel_schema,
    result_to_dict,
)
from .errors import (
    AuditError,
    CfauditError,
    ConstraintError,
    DataError,
    DistanceError,
    InfeasibleSpaceError,
    InstanceValidationError,
    PredictorProtocolError,
    SchemaError,
    TimeBudgetError,
    TrainingError,
)
from .external import ExternalPredictor, connect_external
from .predictors import (
    CallablePredictor,
    ModelConfig,
    Predictor,
    load_model,
    save_model,
    train,
)
from .schema import (
    CATEGORICAL,
    CONTINUOUS,
    FeatureSchema,
    FeatureSpec,
    load_schema,
    save_schema,
    schema_from_dict,
    schema_to_dict,
)

__version__ = "0.1.0"

__all__ = [
    "AuditError",
    "BurdenReport",
    "CATEGORICAL",
    "CONTINUOUS",
    "CallablePredictor",
    "CfauditError",
    "ConstraintError",
    "Constraints",
    "Counterfactual",
    "CounterfactualResult",
    "DataError",
    "Dataset",
    "DatasetStats",
    "DistanceError",
    "ExternalPredictor",
    "FairnessProbe",
    "FairnessReport",
    "FeatureSchema",
    "FeatureSpec",
    "GAConfig",
    "Image",
    "ImageMetric",
    "ImportanceReport",
    "InfeasibleSpaceError",
    "InstanceValidationError",
    "ModelConfig",
    "Population",
    "Predictor",
    "PredictorProtocolError",
    "RobustnessReport",
    "SchemaError",
    "SearchProblem",
    "TimeBudgetError",
    "TrainingError",
    "audit_fairness",
    "audit_robustness",
    "burden",
    "cerscore",
    "compute_stats",
    "connect_external",
    "constraints_from_dict",
    "constraints_to_dict",
    "dataset_from_rows",
    "derive_seed",
    "evolve",
    "feature_importance",
    "fitness",
    "fitness_of",
    "generate_counterfactuals",
    "individual_fairness",
    "initialize_population",
    "load_csv",
    "load_model",
    "load_pgm",
    "load_schema",
    "mixed_distance",
    "ncerscore",
    "norm_scale",
    "pixel_schema",
    "render_report",
    "result_to_dict",
    "save_model",
    "save_pgm",
    "save_schema",
    "schema_from_dict",
    "schema_to_dict",
    "ssim",
    "ssim_distance",
    "train",
]
