"""
Recursive least squares regression.
The inverse covariance C_inv is maintained through the Woodbury identity so each
update costs O(d^2); after any update sequence the weights equal the ridge
solution (sum x x^T + lambda I)^-1 (sum x y + lambda w_0).
"""
import logging
from dataclasses import dataclass
from typing import NamedTuple, Sequence, Union

import numpy as np

from src.scheduling_interface import ModelError

logger = logging.getLogger(__name__)

WEIGHT_INIT_RANGE = 0.5


class TrainingExample(NamedTuple):
    """One (x, y) regression pair; x already in the feature space of the model it trains."""

    x: np.ndarray
    y: float


@dataclass
class OnlineLinearModel:
    w: np.ndarray
    C_inv: np.ndarray
    lam: float
    t: int = 0

    @property
    def dimension(self) -> int:
        return int(self.w.shape[0])

    def copy(self) -> "OnlineLinearModel":
        return OnlineLinearModel(self.w.copy(), self.C_inv.copy(), self.lam, self.t)


def rls_init(d: int, lam: float, rng_seed: int, random_weights: bool = True) -> OnlineLinearModel:
    """
    Creates a fresh model with C_inv = (1/lam) I.

    Args:
        d: Feature dimension.
        lam: Ridge regularizer, must be positive.
        rng_seed: Seed for the uniform [-0.5, 0.5] weight draw.
        random_weights: When False the weights start at zero.

    Raises:
        ModelError: If lam <= 0 (or is not finite) or d < 1.
    """
    if not np.isfinite(lam) or lam <= 0:
        raise ModelError(f"RLS lambda must be a positive finite number, got {lam}")
    if d < 1:
        raise ModelError(f"RLS dimension must be at least 1, got {d}")
    if random_weights:
        rng = np.random.default_rng(rng_seed)
        w = rng.uniform(-WEIGHT_INIT_RANGE, WEIGHT_INIT_RANGE, size=d)
    else:
        w = np.zeros(d)
    return OnlineLinearModel(w=w, C_inv=np.eye(d) / lam, lam=float(lam), t=0)


def _checked_vector(m: OnlineLinearModel, x: Sequence[float]) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.shape[0] != m.dimension:
        raise ModelError(f"Expected a {m.dimension}-dimensional input, got {x.shape[0]}")
    return x


def rls_update(m: OnlineLinearModel, x: Sequence[float], y: float) -> None:
    """
    Applies one training example in place.

    Raises:
        ModelError: On a dimension mismatch or non-finite input.
    """
    x = _checked_vector(m, x)
    if not (np.all(np.isfinite(x)) and np.isfinite(y)):
        raise ModelError(f"RLS update received non-finite input: x={x}, y={y}")

    Cx = m.C_inv @ x
    denom = 1.0 + x @ Cx
    m.C_inv = m.C_inv - np.outer(Cx, Cx) / denom
    m.C_inv = 0.5 * (m.C_inv + m.C_inv.T)

    # Post-update C_inv, pre-update w
    residual = y - x @ m.w
    m.w = m.w + (m.C_inv @ x) * residual
    m.t += 1


def rls_predict(m: OnlineLinearModel, x) -> Union[float, np.ndarray]:
    """
    Returns x^T w for a vector, or one prediction per row for a matrix.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != m.dimension:
        raise ModelError(f"Expected {m.dimension} features, got {x.shape[-1]}")
    result = x @ m.w
    return float(result) if result.ndim == 0 else result
