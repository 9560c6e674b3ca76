"""L2-regularized logistic regression fitted by full-batch gradient descent."""

from __future__ import annotations

import logging
import warnings

import numpy as np

from ..dataset import ColumnarDataset
from ..errors import NonConvergenceWarning
from .base import DesignEncoder, FeatureSpace, TrainConfig, binary_target, sigmoid

logger = logging.getLogger(__name__)


def loss_and_grad(w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray, l2: float):
    """Mean negative log-likelihood plus ``l2/2 * |w|^2`` (intercept unpenalized)."""
    z = X @ w + b
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * l2 * (w @ w))
    r = (sigmoid(z) - y) / len(y)
    return loss, X.T @ r + l2 * w, float(r.sum())


class LogisticModel:
    def __init__(self, encoder: DesignEncoder, weights, intercept: float, target: str, info: dict | None = None):
        self.encoder = encoder
        self.weights = np.asarray(weights, dtype=float)
        self.intercept = float(intercept)
        self.target = target
        self.info = info or {}
        if len(self.weights) != encoder.width:
            raise ValueError(f"{len(self.weights)} weights for {encoder.width} encoded features")

    @property
    def space(self) -> FeatureSpace:
        return self.encoder.space

    def decision_function(self, ds: ColumnarDataset) -> np.ndarray:
        X, _ = self.encoder.transform(ds)
        return X @ self.weights + self.intercept

    def predict_proba(self, ds: ColumnarDataset) -> np.ndarray:
        return sigmoid(self.decision_function(ds))

    def to_dict(self) -> dict:
        return {
            "target": self.target,
            "encoder": self.encoder.to_dict(),
            "columns": self.encoder.column_names,
            "weights": self.weights.tolist(),
            "intercept": self.intercept,
            "info": self.info,
        }

    @classmethod
    def from_dict(cls, space: FeatureSpace, d) -> "LogisticModel":
        return cls(DesignEncoder.from_dict(space, d["encoder"]), d["weights"], d["intercept"], d["target"], d["info"])


def fit_logistic(X: np.ndarray, y: np.ndarray, l2: float, max_iter: int, tol: float):
    """Gradient descent from zero weights with step ``1 / L``.

    ``L`` bounds the gradient's Lipschitz constant:
    ``0.25 * lambda_max(A^T A / n) + l2`` with ``A = [X, 1]``.
    Returns ``(w, b, iterations, converged, grad_norm)``.
    """
    n, d = X.shape
    A = np.hstack([X, np.ones((n, 1))])
    lip = 0.25 * float(np.linalg.eigvalsh(A.T @ A / n)[-1]) + l2
    step = 1.0 / lip
    w = np.zeros(d)
    b = 0.0
    gnorm = np.inf
    for it in range(1, max_iter + 1):
        _, gw, gb = loss_and_grad(w, b, X, y, l2)
        gnorm = max(float(np.max(np.abs(gw))) if d else 0.0, abs(gb))
        if gnorm < tol:
            return w, b, it - 1, True, gnorm
        w -= step * gw
        b -= step * gb
    return w, b, max_iter, False, gnorm


def train_logistic(ds: ColumnarDataset, target: str, cfg: TrainConfig | None = None, features=None) -> LogisticModel:
    cfg = cfg or TrainConfig()
    y = binary_target(ds, target).astype(float)
    space = FeatureSpace.from_dataset(ds, features)
    encoder = DesignEncoder.fit(space, ds)
    X, _ = encoder.transform(ds)
    w, b, iters, converged, gnorm = fit_logistic(X, y, cfg.l2, cfg.lr_max_iter, cfg.lr_tol)
    if not converged:
        warnings.warn(
            f"logistic regression stopped at {iters} iterations with gradient max-norm {gnorm:.3g}",
            NonConvergenceWarning,
            stacklevel=2,
        )
    info = {
        "iterations": iters,
        "converged": converged,
        "grad_max_norm": gnorm,
        "loss": loss_and_grad(w, b, X, y, cfg.l2)[0],
        "config": cfg.to_dict(),
    }
    return LogisticModel(encoder, w, b, target, info)
