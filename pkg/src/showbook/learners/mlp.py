"""One-hidden-layer sigmoid network trained with momentum SGD and early stopping."""

from __future__ import annotations

import numpy as np

from ..dataset import ColumnarDataset
from .base import DesignEncoder, FeatureSpace, TrainConfig, binary_target, sigmoid


def forward(params: dict, X: np.ndarray):
    hidden = sigmoid(X @ params["W1"].T + params["b1"])
    z = hidden @ params["w2"] + params["b2"]
    return hidden, z


def loss_and_grad(params: dict, X: np.ndarray, y: np.ndarray, l2: float):
    """Mean cross-entropy plus ``l2/2`` times the squared weights (biases unpenalized)."""
    W1, w2 = params["W1"], params["w2"]
    hidden, z = forward(params, X)
    n = len(y)
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * l2 * (np.sum(W1 * W1) + w2 @ w2))
    dz = (sigmoid(z) - y) / n
    dh = np.outer(dz, w2) * hidden * (1.0 - hidden)
    grads = {
        "W1": dh.T @ X + l2 * W1,
        "b1": dh.sum(axis=0),
        "w2": hidden.T @ dz + l2 * w2,
        "b2": np.asarray(dz.sum()),
    }
    return loss, grads


def init_params(n_in: int, n_hidden: int, rng: np.random.Generator) -> dict:
    a1 = 1.0 / np.sqrt(max(n_in, 1))
    a2 = 1.0 / np.sqrt(n_hidden)
    return {
        "W1": rng.uniform(-a1, a1, size=(n_hidden, n_in)),
        "b1": rng.uniform(-a1, a1, size=n_hidden),
        "w2": rng.uniform(-a2, a2, size=n_hidden),
        "b2": np.asarray(rng.uniform(-a2, a2)),
    }


def zero_params(n_in: int, n_hidden: int) -> dict:
    return {"W1": np.zeros((n_hidden, n_in)), "b1": np.zeros(n_hidden), "w2": np.zeros(n_hidden), "b2": np.asarray(0.0)}


class NeuralNet:
    def __init__(self, encoder: DesignEncoder, params: dict, target: str, info: dict | None = None):
        self.encoder = encoder
        self.params = {k: np.asarray(v, dtype=float) for k, v in params.items()}
        self.target = target
        self.info = info or {}
        h, d = self.params["W1"].shape
        if d != encoder.width or self.params["b1"].shape != (h,) or self.params["w2"].shape != (h,):
            raise ValueError("network parameter shapes are inconsistent with the encoder")

    @property
    def space(self) -> FeatureSpace:
        return self.encoder.space

    @property
    def hidden_units(self) -> int:
        return self.params["W1"].shape[0]

    def decision_function(self, ds: ColumnarDataset) -> np.ndarray:
        X, _ = self.encoder.transform(ds)
        return forward(self.params, X)[1]

    def predict_proba(self, ds: ColumnarDataset) -> np.ndarray:
        return sigmoid(self.decision_function(ds))

    def to_dict(self) -> dict:
        return {
            "target": self.target,
            "encoder": self.encoder.to_dict(),
            "columns": self.encoder.column_names,
            "params": {k: v.tolist() for k, v in self.params.items()},
            "info": self.info,
        }

    @classmethod
    def from_dict(cls, space: FeatureSpace, d) -> "NeuralNet":
        return cls(DesignEncoder.from_dict(space, d["encoder"]), d["params"], d["target"], d["info"])


def fit_mlp(X: np.ndarray, y: np.ndarray, cfg: TrainConfig) -> tuple[dict, dict]:
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    n = len(y)
    n_val = int(round(cfg.validation_fraction * n))
    perm = rng.permutation(n)
    val, tr = perm[:n_val], perm[n_val:]
    if n_val == 0:
        val = tr
    Xt, yt, Xv, yv = X[tr], y[tr], X[val], y[val]
    params = init_params(X.shape[1], cfg.hidden_units, rng)
    velocity = {k: np.zeros_like(v) for k, v in params.items()}
    best = {k: v.copy() for k, v in params.items()}
    best_loss = loss_and_grad(params, Xv, yv, 0.0)[0]
    best_epoch, stale, epoch = 0, 0, 0
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(yt))
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            _, grads = loss_and_grad(params, Xt[batch], yt[batch], cfg.l2)
            for k in params:
                velocity[k] = cfg.momentum * velocity[k] - cfg.learning_rate * grads[k]
                params[k] = params[k] + velocity[k]
        val_loss = loss_and_grad(params, Xv, yv, 0.0)[0]
        if val_loss < best_loss - 1e-7:
            best_loss, best_epoch, stale = val_loss, epoch, 0
            best = {k: v.copy() for k, v in params.items()}
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    info = {"epochs_run": epoch, "best_epoch": best_epoch, "validation_loss": best_loss, "config": cfg.to_dict()}
    return best, info


def train_mlp(ds: ColumnarDataset, target: str, cfg: TrainConfig | None = None, features=None) -> NeuralNet:
    """Numeric inputs are standardized with training statistics kept in the model."""
    cfg = cfg or TrainConfig()
    y = binary_target(ds, target).astype(float)
    space = FeatureSpace.from_dataset(ds, features)
    encoder = DesignEncoder.fit(space, ds)
    X, _ = encoder.transform(ds)
    params, info = fit_mlp(X, y, cfg)
    return NeuralNet(encoder, params, target, info)
