"""
Model bundles: the learned state of an ML scheduling policy, its ensemble
prediction and its on-disk format.

A model file holds three lines: a JSON header, a JSON payload and a
`sha256:<hex>` checksum over the first two lines.
"""
import json
import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, NamedTuple, Optional, Union

import numpy as np
from pydantic import BaseModel, ValidationError, model_validator

from src.features import FEATURE_NAMES, FeatureVector, transform_for_linear
from src.learning.forest import ForestParams, RandomForestModel, RegressionTree, rf_feature_importance, rf_predict
from src.learning.online_model import OnlineLinearModel, rls_init, rls_predict
from src.scheduling_interface import ModelChecksumError, ModelError, ModelFileError, ModelVersionError
from src.utils import sha256_hex

logger = logging.getLogger(__name__)

MODEL_FORMAT = "seed-scheduler-model"
MODEL_FILE_VERSION = 1
CHECKSUM_PREFIX = "sha256:"


class ModelKind(str, Enum):
    OL = "OL"
    RF = "RF"
    EN = "EN"


@dataclass
class ModelBundle:
    """
    Learned state of one ML policy. EN carries both sub-models; the forest may
    still be unfitted (no trees) until the first refit.
    """

    kind: ModelKind
    ol: Optional[OnlineLinearModel] = None
    rf: Optional[RandomForestModel] = None
    rng_seed: int = 0
    training_log_ref: Optional[str] = None

    def __post_init__(self):
        if self.kind in (ModelKind.OL, ModelKind.EN) and self.ol is None:
            raise ModelError(f"{self.kind.value} bundle requires an online linear model.")
        if self.kind in (ModelKind.RF, ModelKind.EN) and self.rf is None:
            raise ModelError(f"{self.kind.value} bundle requires a random forest model.")

    @property
    def dimension(self) -> int:
        return self.ol.dimension if self.ol is not None else self.rf.dimension


def new_bundle(kind: ModelKind, lam: float, forest_params: ForestParams, rng_seed: int,
               dimension: int = len(FEATURE_NAMES)) -> ModelBundle:
    """Creates a freshly initialized bundle: random RLS weights and an unfitted forest."""
    ol = rls_init(dimension, lam, rng_seed) if kind in (ModelKind.OL, ModelKind.EN) else None
    rf = None
    if kind in (ModelKind.RF, ModelKind.EN):
        rf = RandomForestModel(trees=[], params=forest_params, rng_seed=rng_seed, dimension=dimension)
    return ModelBundle(kind=kind, ol=ol, rf=rf, rng_seed=rng_seed)


class EnsemblePrediction(NamedTuple):
    value: Union[float, np.ndarray]
    rf_used: bool


def _raw(x_raw) -> np.ndarray:
    if isinstance(x_raw, FeatureVector):
        return x_raw.as_array()
    return np.asarray(x_raw, dtype=np.float64)


def ensemble_predict(ol: OnlineLinearModel, rf: Optional[RandomForestModel], x_raw) -> EnsemblePrediction:
    """
    Arithmetic mean of the online prediction (on log-scaled features) and the
    forest prediction (on raw features). An unfitted forest falls back to the
    online prediction alone, with rf_used=False.
    """
    raw = _raw(x_raw)
    online = rls_predict(ol, transform_for_linear(raw))
    if rf is None or not rf.fitted:
        return EnsemblePrediction(online, False)
    return EnsemblePrediction((online + rf_predict(rf, raw)) / 2.0, True)


def bundle_predict(bundle: ModelBundle, x_raw) -> Union[float, np.ndarray]:
    """
    Utility prediction of a bundle on raw features (a vector or a matrix of rows).
    An RF bundle whose forest is still unfitted predicts 0.
    """
    raw = _raw(x_raw)
    if bundle.kind is ModelKind.OL:
        return rls_predict(bundle.ol, transform_for_linear(raw))
    if bundle.kind is ModelKind.RF:
        if not bundle.rf.fitted:
            return 0.0 if raw.ndim == 1 else np.zeros(raw.shape[0])
        return rf_predict(bundle.rf, raw)
    return ensemble_predict(bundle.ol, bundle.rf, raw).value


def describe_bundle(bundle: ModelBundle) -> Dict[str, Any]:
    """Summary of a bundle: kind, dimension, lambda, update count, forest size and importance."""
    info: Dict[str, Any] = {
        "kind": bundle.kind.value,
        "dimension": bundle.dimension,
        "rng_seed": bundle.rng_seed,
        "training_log": bundle.training_log_ref,
    }
    if bundle.ol is not None:
        info["lambda"] = bundle.ol.lam
        info["online_updates"] = bundle.ol.t
        info["weights"] = dict(zip(FEATURE_NAMES, bundle.ol.w.tolist()))
    if bundle.rf is not None:
        info["forest_trees"] = len(bundle.rf.trees)
        info["forest_fitted"] = bundle.rf.fitted
        info["forest_training_examples"] = bundle.rf.n_train
        if bundle.rf.fitted:
            importance = rf_feature_importance(bundle.rf)
            info["importance"] = dict(zip(FEATURE_NAMES, importance.tolist()))
    return info


# --- File format ---

class ModelFileHeader(BaseModel):
    format: str
    version: int
    kind: ModelKind
    d: int
    lam: Optional[float] = None
    rf_params: Optional[ForestParams] = None
    rng_seeds: Dict[str, int]

    @model_validator(mode="after")
    def _check_lambda(self) -> "ModelFileHeader":
        if self.kind in (ModelKind.OL, ModelKind.EN) and self.lam is None:
            raise ValueError(f"{self.kind.value} model header requires lam.")
        if self.lam is not None and not self.lam > 0:
            raise ValueError(f"lam must be > 0, got {self.lam}.")
        return self


class _OnlinePayload(BaseModel):
    w: List[float]
    C_inv: List[List[float]]
    t: int


class _TreePayload(BaseModel):
    feature: List[int]
    threshold: List[float]
    left: List[int]
    right: List[int]
    value: List[float]
    n_samples: List[int]
    importance: List[float]


class _ForestPayload(BaseModel):
    n_train: int
    trees: List[_TreePayload]


class _BundlePayload(BaseModel):
    ol: Optional[_OnlinePayload] = None
    rf: Optional[_ForestPayload] = None
    training_log_ref: Optional[str] = None


def _header_for(bundle: ModelBundle) -> ModelFileHeader:
    seeds = {"bundle": bundle.rng_seed}
    if bundle.rf is not None:
        seeds["forest"] = bundle.rf.rng_seed
    return ModelFileHeader(
        format=MODEL_FORMAT,
        version=MODEL_FILE_VERSION,
        kind=bundle.kind,
        d=bundle.dimension,
        lam=bundle.ol.lam if bundle.ol is not None else None,
        rf_params=bundle.rf.params if bundle.rf is not None else None,
        rng_seeds=seeds,
    )


def _payload_for(bundle: ModelBundle) -> _BundlePayload:
    ol = None
    if bundle.ol is not None:
        ol = _OnlinePayload(w=bundle.ol.w.tolist(), C_inv=bundle.ol.C_inv.tolist(), t=bundle.ol.t)
    rf = None
    if bundle.rf is not None:
        rf = _ForestPayload(
            n_train=bundle.rf.n_train,
            trees=[_TreePayload(
                feature=tree.feature.tolist(), threshold=tree.threshold.tolist(),
                left=tree.left.tolist(), right=tree.right.tolist(), value=tree.value.tolist(),
                n_samples=tree.n_samples.tolist(), importance=tree.importance.tolist(),
            ) for tree in bundle.rf.trees],
        )
    return _BundlePayload(ol=ol, rf=rf, training_log_ref=bundle.training_log_ref)


def _dumps(model: BaseModel) -> str:
    # The stdlib encoder writes shortest round-trip float reprs
    return json.dumps(model.model_dump(mode="json"), separators=(",", ":"), sort_keys=True)


def model_to_text(bundle: ModelBundle) -> str:
    header = _dumps(_header_for(bundle))
    payload = _dumps(_payload_for(bundle))
    body = f"{header}\n{payload}"
    return f"{body}\n{CHECKSUM_PREFIX}{sha256_hex(body.encode('utf-8'))}\n"


def save_model(bundle: ModelBundle, path: Union[str, Path]) -> Path:
    """Writes a bundle to `path`, creating parent directories."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(model_to_text(bundle), encoding="utf-8")
    except OSError as e:
        raise ModelFileError(f"Cannot write model file {path}: {e}") from e
    logger.info(f"Saved {bundle.kind.value} model to {path}")
    return path


def _parse_header(line: str) -> ModelFileHeader:
    try:
        raw = json.loads(line)
    except json.JSONDecodeError as e:
        raise ModelChecksumError(f"Model file header is corrupt: {e}") from e
    if not isinstance(raw, dict):
        raise ModelChecksumError("Model file header is corrupt.")
    if raw.get("format") != MODEL_FORMAT:
        raise ModelFileError(f"Not a model file (format={raw.get('format')!r}).")
    if raw.get("version") != MODEL_FILE_VERSION:
        raise ModelVersionError(
            f"Unsupported model file version {raw.get('version')!r}, expected {MODEL_FILE_VERSION}.")
    try:
        return ModelFileHeader.model_validate(raw)
    except ValidationError as e:
        raise ModelFileError(f"Invalid model file header: {e}") from e


def read_model_text(text: str) -> ModelBundle:
    """
    Parses the contents of a model file.

    Raises:
        ModelVersionError: If the header carries another format version.
        ModelChecksumError: If the file is truncated or its checksum does not match.
        ModelFileError: If the file is not a model file or its structure is invalid.
    """
    lines = text.split("\n")
    header = _parse_header(lines[0])
    if len(lines) < 3 or not lines[2].startswith(CHECKSUM_PREFIX):
        raise ModelChecksumError("Model file is truncated (checksum line missing).")
    body = f"{lines[0]}\n{lines[1]}"
    expected = lines[2][len(CHECKSUM_PREFIX):].strip()
    if sha256_hex(body.encode("utf-8")) != expected:
        raise ModelChecksumError("Model file checksum mismatch.")
    try:
        payload = _BundlePayload.model_validate(json.loads(lines[1]))
    except (json.JSONDecodeError, ValidationError) as e:
        raise ModelFileError(f"Invalid model payload: {e}") from e

    ol = None
    if payload.ol is not None:
        if header.lam is None:
            raise ModelFileError("Model file carries an online model but no lam in its header.")
        try:
            C_inv = np.array(payload.ol.C_inv, dtype=np.float64)
        except ValueError as e:
            raise ModelFileError(f"Invalid online model covariance: {e}") from e
        w = np.array(payload.ol.w, dtype=np.float64)
        if C_inv.shape != (w.size, w.size):
            raise ModelFileError(f"Online model covariance has shape {C_inv.shape}, expected {(w.size, w.size)}.")
        ol = OnlineLinearModel(w=w, C_inv=C_inv, lam=header.lam, t=payload.ol.t)
    rf = None
    if payload.rf is not None:
        trees = [RegressionTree(
            feature=np.array(t.feature, dtype=np.int64), threshold=np.array(t.threshold, dtype=np.float64),
            left=np.array(t.left, dtype=np.int64), right=np.array(t.right, dtype=np.int64),
            value=np.array(t.value, dtype=np.float64), n_samples=np.array(t.n_samples, dtype=np.int64),
            importance=np.array(t.importance, dtype=np.float64),
        ) for t in payload.rf.trees]
        rf = RandomForestModel(
            trees=trees,
            params=header.rf_params or ForestParams(),
            rng_seed=header.rng_seeds.get("forest", 0),
            dimension=header.d,
            n_train=payload.rf.n_train,
        )
    try:
        return ModelBundle(kind=header.kind, ol=ol, rf=rf, rng_seed=header.rng_seeds.get("bundle", 0),
                           training_log_ref=payload.training_log_ref)
    except ModelError as e:
        raise ModelFileError(f"Inconsistent model file: {e}") from e


def load_model(path: Union[str, Path]) -> ModelBundle:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ModelFileError(f"Cannot read model file {path}: {e}") from e
    except UnicodeDecodeError as e:
        raise ModelFileError(f"Model file {path} is not UTF-8 text: {e}") from e
    bundle = read_model_text(text)
    logger.debug(f"Loaded {bundle.kind.value} model from {path}")
    return bundle
