"""Shared learner plumbing: hyperparameters, feature alignment, encoding."""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, fields

import numpy as np

from ..dataset import CategoricalColumn, ColumnarDataset, Kind, NumericColumn
from ..errors import DegenerateTarget, MissingValues, SchemaMismatch

MISSING = -1
UNSEEN = -2


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=float)))


@dataclass(frozen=True)
class TrainConfig:
    max_depth: int = 6
    min_leaf: int = 50
    alpha_split: float = 0.05
    alpha_merge: float = 0.05
    chaid_bins: int = 10
    learning_rate: float = 0.05
    momentum: float = 0.9
    epochs: int = 200
    batch_size: int = 256
    hidden_units: int = 16
    l2: float = 1e-4
    patience: int = 10
    validation_fraction: float = 0.1
    lr_max_iter: int = 5000
    lr_tol: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "seed":
                if v < 0:
                    raise ValueError("seed must be non-negative")
            elif f.name == "l2":
                if v < 0:
                    raise ValueError("l2 must be non-negative")
            elif f.name in ("momentum", "validation_fraction"):
                if not 0 <= v < 1:
                    raise ValueError(f"{f.name} must be in [0, 1)")
            elif v <= 0:
                raise ValueError(f"{f.name} must be positive, got {v}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d) -> "TrainConfig":
        return cls(**d)


@dataclass(frozen=True)
class Feature:
    name: str
    kind: Kind
    levels: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        d = {"name": self.name, "kind": self.kind.value}
        if self.kind is Kind.CATEGORICAL:
            d["levels"] = list(self.levels)
        return d

    @classmethod
    def from_dict(cls, d) -> "Feature":
        return cls(d["name"], Kind(d["kind"]), tuple(d.get("levels", ())))


class FeatureSpace:
    """Predictor columns a model was trained on, with their training levels.

    ``align`` maps any dataset with the same predictor names onto the
    training coding: categorical columns become level indices (``-1`` for
    blank, ``-2`` for a label never seen in training), numeric columns stay
    floats with NaN for blank.
    """

    def __init__(self, features):
        self.features = tuple(features)

    def __iter__(self):
        return iter(self.features)

    def __len__(self):
        return len(self.features)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.features)

    @classmethod
    def from_dataset(cls, ds: ColumnarDataset, names=None) -> "FeatureSpace":
        cols = ds.schema.predictors if names is None else [ds.schema.column(n) for n in names]
        feats = []
        for col in cols:
            data = ds.columns[col.name]
            if isinstance(data, CategoricalColumn):
                present = np.unique(data.codes[data.codes >= 0])
                feats.append(Feature(col.name, Kind.CATEGORICAL, tuple(data.levels[i] for i in present)))
            else:
                feats.append(Feature(col.name, Kind.NUMERIC))
        return cls(feats)

    def fingerprint(self) -> str:
        canon = "\n".join(f"{f.name}:{f.kind.value}" for f in self.features)
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]

    def align(self, ds: ColumnarDataset) -> tuple[dict[str, np.ndarray], np.ndarray]:
        """Columns in training coding, plus a per-row unseen-category mask."""
        out = {}
        unseen = np.zeros(ds.n_rows, dtype=bool)
        for f in self.features:
            data = ds.columns.get(f.name)
            if data is None:
                raise SchemaMismatch(f"column {f.name!r} required by the model is missing", missing=[f.name])
            if f.kind is Kind.NUMERIC:
                if not isinstance(data, NumericColumn):
                    raise SchemaMismatch(f"column {f.name!r} must be numeric")
                out[f.name] = np.asarray(data.values, dtype=float)
            else:
                if not isinstance(data, CategoricalColumn):
                    raise SchemaMismatch(f"column {f.name!r} must be categorical")
                index = {label: i for i, label in enumerate(f.levels)}
                lut = np.array([index.get(label, UNSEEN) for label in data.levels] + [MISSING], dtype=np.int64)
                # code -1 (blank) indexes the trailing MISSING entry
                codes = lut[data.codes]
                unseen |= codes == UNSEEN
                out[f.name] = codes
        return out, unseen

    def to_list(self) -> list[dict]:
        return [f.to_dict() for f in self.features]

    @classmethod
    def from_list(cls, items) -> "FeatureSpace":
        return cls(Feature.from_dict(d) for d in items)


class DesignEncoder:
    """One-hot (reference level dropped) plus standardized numeric columns."""

    def __init__(self, space: FeatureSpace, means: dict[str, float], scales: dict[str, float]):
        self.space = space
        self.means = dict(means)
        self.scales = dict(scales)

    @property
    def column_names(self) -> list[str]:
        names = []
        for f in self.space:
            if f.kind is Kind.NUMERIC:
                names.append(f.name)
            else:
                names.extend(f"{f.name}={lvl}" for lvl in f.levels[1:])
        return names

    @property
    def width(self) -> int:
        return len(self.column_names)

    @classmethod
    def fit(cls, space: FeatureSpace, ds: ColumnarDataset) -> "DesignEncoder":
        cols, _ = space.align(ds)
        means, scales = {}, {}
        for f in space:
            if f.kind is Kind.NUMERIC:
                x = cols[f.name]
                if np.isnan(x).any():
                    raise MissingValues(f"column {f.name!r} has missing values; impute first")
                means[f.name] = float(np.mean(x))
                sd = float(np.std(x))
                scales[f.name] = sd if sd > 0 else 1.0
        return cls(space, means, scales)

    def transform(self, ds: ColumnarDataset) -> tuple[np.ndarray, np.ndarray]:
        """Design matrix and unseen-category row mask.

        Unseen labels encode as the reference level (all zeros).
        """
        cols, unseen = self.space.align(ds)
        blocks = []
        for f in self.space:
            x = cols[f.name]
            if f.kind is Kind.NUMERIC:
                if np.isnan(x).any():
                    raise MissingValues(f"column {f.name!r} has missing values; impute first")
                blocks.append(((x - self.means[f.name]) / self.scales[f.name])[:, None])
            else:
                if np.any(x == MISSING):
                    raise MissingValues(f"column {f.name!r} has missing values; impute first")
                onehot = x[:, None] == np.arange(1, len(f.levels))[None, :]
                blocks.append(onehot.astype(float))
        X = np.hstack(blocks) if blocks else np.zeros((ds.n_rows, 0))
        return X, unseen

    def to_dict(self) -> dict:
        return {"means": self.means, "scales": self.scales}

    @classmethod
    def from_dict(cls, space: FeatureSpace, d) -> "DesignEncoder":
        return cls(space, d["means"], d["scales"])


def binary_target(ds: ColumnarDataset, target: str) -> np.ndarray:
    y = np.asarray(ds.target(target), dtype=np.int64)
    if y.size == 0 or y.min() == y.max():
        raise DegenerateTarget(f"target {target!r} has a single class; nothing to learn")
    return y
