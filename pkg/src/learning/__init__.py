from src.learning.bundle import (
    EnsemblePrediction,
    ModelBundle,
    ModelKind,
    bundle_predict,
    describe_bundle,
    ensemble_predict,
    load_model,
    new_bundle,
    save_model,
)
from src.learning.forest import ForestParams, RandomForestModel, RegressionTree, rf_feature_importance, rf_fit, rf_predict
from src.learning.online_model import OnlineLinearModel, TrainingExample, rls_init, rls_predict, rls_update

__all__ = [
    "EnsemblePrediction",
    "ForestParams",
    "ModelBundle",
    "ModelKind",
    "OnlineLinearModel",
    "RandomForestModel",
    "RegressionTree",
    "TrainingExample",
    "bundle_predict",
    "describe_bundle",
    "ensemble_predict",
    "load_model",
    "new_bundle",
    "rf_feature_importance",
    "rf_fit",
    "rf_predict",
    "rls_init",
    "rls_predict",
    "rls_update",
    "save_model",
]
