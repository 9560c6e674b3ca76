"""From-scratch binary classifiers: CART, CHAID, logistic regression, MLP.

Every learner has the signature ``train_x(ds, target, cfg, features=None)``
and returns a model with ``predict_proba(ds)``.  Models are saved as JSON
documents tagged with a format id, the learner kind and a fingerprint of
the predictor columns they expect.
"""

from __future__ import annotations

import warnings
from typing import Callable, Mapping, Union

import numpy as np

from .._io import atomic_write, dumps, read_json
from ..dataset import Column, ColumnarDataset, Kind, Role, Schema, build_dataset
from ..errors import ModelFormatError, SchemaMismatch, UnseenCategoryWarning
from .base import DesignEncoder, Feature, FeatureSpace, TrainConfig, sigmoid
from .cart import gini_impurity, train_cart
from .chaid import merge_categories, train_chaid
from .logistic import LogisticModel, train_logistic
from .mlp import NeuralNet, train_mlp
from .tree import Rule, Tree, extract_rules, predict_with_rules

TrainedModel = Union[Tree, LogisticModel, NeuralNet]

LEARNERS: dict[str, Callable[..., TrainedModel]] = {
    "cart": train_cart,
    "chaid": train_chaid,
    "lr": train_logistic,
    "mlp": train_mlp,
}
LEARNER_NAMES = {"cart": "C&RT", "chaid": "CHAID", "lr": "LR", "mlp": "NEURAL NETWORK"}
TREE_KINDS = ("cart", "chaid")

MODEL_FORMAT = "showbook-model"
MODEL_FORMAT_VERSION = 1


def train(kind: str, ds: ColumnarDataset, target: str, cfg: TrainConfig | None = None, features=None) -> TrainedModel:
    try:
        fn = LEARNERS[kind]
    except KeyError:
        raise ValueError(f"unknown learner {kind!r}; choose from {sorted(LEARNERS)}") from None
    return fn(ds, target, cfg, features=features)


def model_kind(model: TrainedModel) -> str:
    if isinstance(model, Tree):
        return model.kind
    if isinstance(model, LogisticModel):
        return "lr"
    if isinstance(model, NeuralNet):
        return "mlp"
    raise TypeError(f"not a trained model: {type(model).__name__}")


def predict_proba(model: TrainedModel, ds: ColumnarDataset, return_unseen: bool = False):
    """Event probability per row.

    Category labels absent at training time are routed to the majority
    child by trees and mapped to the reference level by LR/MLP; either way
    the row is flagged and one :class:`UnseenCategoryWarning` summarises
    the count.
    """
    _, unseen = model.space.align(ds)
    p = np.clip(model.predict_proba(ds), 0.0, 1.0)
    n_unseen = int(unseen.sum())
    if n_unseen:
        warnings.warn(f"{n_unseen} row(s) carry categories unseen in training", UnseenCategoryWarning, stacklevel=2)
    return (p, unseen) if return_unseen else p


def decision_scores(model: TrainedModel, ds: ColumnarDataset) -> np.ndarray:
    """Log-odds of the event; trees give the logit of their leaf frequency."""
    if isinstance(model, Tree):
        p = model.predict_proba(ds)
        with np.errstate(divide="ignore"):
            return np.log(p) - np.log1p(-p)
    return model.decision_function(ds)


def rows_to_dataset(space: FeatureSpace, rows: list[Mapping[str, object]]) -> ColumnarDataset:
    """Unlabeled dataset from dict rows keyed by predictor name."""
    cols = [Column(f.name, f.kind, Role.PREDICTOR) for f in space]
    status = Column("__status__", Kind.CATEGORICAL, Role.STATUS)
    schema = Schema(tuple(cols) + (status,))
    header = list(space.names)
    table = []
    for row in rows:
        missing = [n for n in header if n not in row]
        if missing:
            raise SchemaMismatch(f"row lacks column(s) {', '.join(missing)}", missing=missing)
        table.append(["" if row[n] is None else str(row[n]) for n in header])
    return build_dataset(schema, header, table, labeled=False)


def predict_row(model: TrainedModel, row: Mapping[str, object]) -> float:
    return float(predict_proba(model, rows_to_dataset(model.space, [row]))[0])


def model_to_dict(model: TrainedModel) -> dict:
    return {
        "format": MODEL_FORMAT,
        "format_version": MODEL_FORMAT_VERSION,
        "kind": model_kind(model),
        "schema_fingerprint": model.space.fingerprint(),
        "features": model.space.to_list(),
        "model": model.to_dict(),
    }


def model_from_dict(doc: dict) -> TrainedModel:
    if doc.get("format") != MODEL_FORMAT:
        raise ModelFormatError(f"not a {MODEL_FORMAT} document")
    if doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model format version {doc.get('format_version')!r}")
    space = FeatureSpace.from_list(doc["features"])
    if space.fingerprint() != doc["schema_fingerprint"]:
        raise ModelFormatError("schema fingerprint does not match the feature list")
    kind = doc["kind"]
    body = doc["model"]
    if kind in TREE_KINDS:
        return Tree.from_dict(kind, space, body)
    if kind == "lr":
        return LogisticModel.from_dict(space, body)
    if kind == "mlp":
        return NeuralNet.from_dict(space, body)
    raise ModelFormatError(f"unknown learner kind {kind!r}")


def save_model(model: TrainedModel, path) -> None:
    atomic_write(path, dumps(model_to_dict(model)))


def load_model(path) -> TrainedModel:
    try:
        return model_from_dict(read_json(path))
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"{path}: malformed model file ({exc})") from None


__all__ = [
    "DesignEncoder",
    "Feature",
    "FeatureSpace",
    "LEARNERS",
    "LEARNER_NAMES",
    "LogisticModel",
    "NeuralNet",
    "Rule",
    "TrainConfig",
    "TrainedModel",
    "Tree",
    "decision_scores",
    "extract_rules",
    "gini_impurity",
    "load_model",
    "merge_categories",
    "model_from_dict",
    "model_kind",
    "model_to_dict",
    "predict_proba",
    "predict_row",
    "predict_with_rules",
    "save_model",
    "sigmoid",
    "train",
    "train_cart",
    "train_chaid",
    "train_logistic",
    "train_mlp",
]
