"""Train/test partitioning and class rebalancing."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataset import ColumnarDataset
from .errors import EmptyClass, SingleClass, TooFewRows

PRESET_TRAIN_FRACTIONS = (0.5, 0.7, 0.8, 0.9)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class PartitionSpec:
    train_fraction: float = 0.8
    seed: int = 0
    stratify_on: str | None = None  # "show", "booked" or None

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise ValueError(f"train_fraction must be in (0, 1), got {self.train_fraction}")

    def to_dict(self) -> dict:
        return {"train_fraction": self.train_fraction, "seed": self.seed, "stratify_on": self.stratify_on}


@dataclass(frozen=True)
class BalanceSpec:
    mode: str = "upsample-minority"  # or "downsample-majority"
    target_ratio: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("upsample-minority", "downsample-majority"):
            raise ValueError(f"unknown balance mode {self.mode!r}")
        if not 0 < self.target_ratio < 1:
            raise ValueError("target_ratio must be in (0, 1)")

    def to_dict(self) -> dict:
        return {"mode": self.mode, "target_ratio": self.target_ratio, "seed": self.seed}


def partition_indices(n: int, labels: np.ndarray | None, spec: PartitionSpec) -> tuple[np.ndarray, np.ndarray]:
    """Sorted train and test positions.

    The train size is ``round(train_fraction * n)``.  Under stratification
    each class gets ``floor(frac * n_c)`` train rows and the remaining
    slots go to the classes with the largest fractional parts, so every
    class is within one row of its exact share.
    """
    if n < 2:
        raise TooFewRows(f"need at least 2 rows to partition, got {n}")
    n_train = _round_half_up(spec.train_fraction * n)
    n_train = min(max(n_train, 1), n - 1)
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    if labels is None:
        perm = rng.permutation(n)
        train = np.sort(perm[:n_train])
    else:
        classes = (0, 1)
        members = [np.flatnonzero(labels == c) for c in classes]
        for c, m in zip(classes, members):
            if len(m) == 0:
                raise EmptyClass(f"class {c} is absent; cannot stratify")
        exact = [spec.train_fraction * len(m) for m in members]
        quota = [int(math.floor(e)) for e in exact]
        spare = n_train - sum(quota)
        # largest fractional part first; ties to the smaller class label
        for k in sorted(range(len(classes)), key=lambda k: (-(exact[k] - quota[k]), k))[:spare]:
            quota[k] += 1
        picks = [rng.permutation(m)[:q] for m, q in zip(members, quota)]
        train = np.sort(np.concatenate(picks))
    mask = np.zeros(n, dtype=bool)
    mask[train] = True
    return train, np.flatnonzero(~mask)


def partition(ds: ColumnarDataset, spec: PartitionSpec) -> tuple[ColumnarDataset, ColumnarDataset]:
    labels = ds.target(spec.stratify_on) if spec.stratify_on else None
    train, test = partition_indices(ds.n_rows, labels, spec)
    split = spec.to_dict()
    return ds.take(train, partition={**split, "part": "train"}), ds.take(test, partition={**split, "part": "test"})


def balanced_counts(n_neg: int, n_pos: int, spec: BalanceSpec) -> tuple[int, int]:
    """Class sizes after balancing; the minority ends at ``target_ratio``."""
    minority_is_pos = n_pos <= n_neg
    m, big = (n_pos, n_neg) if minority_is_pos else (n_neg, n_pos)
    r = spec.target_ratio
    if spec.mode == "upsample-minority":
        if m / (m + big) < r:
            new_m, new_big = max(m, _round_half_up(r * big / (1 - r))), big
        else:
            new_m, new_big = m, max(big, _round_half_up(m * (1 - r) / r))
    else:
        if m / (m + big) < r:
            new_m, new_big = m, min(big, _round_half_up(m * (1 - r) / r))
        else:
            new_m, new_big = min(m, _round_half_up(r * big / (1 - r))), big
    return (new_big, new_m) if minority_is_pos else (new_m, new_big)


def balance_indices(labels: np.ndarray, spec: BalanceSpec) -> np.ndarray:
    """Row positions of the balanced set: kept originals (in order), then extras."""
    labels = np.asarray(labels)
    neg = np.flatnonzero(labels == 0)
    pos = np.flatnonzero(labels == 1)
    if len(neg) == 0 or len(pos) == 0:
        raise SingleClass("balancing needs both classes present")
    want_neg, want_pos = balanced_counts(len(neg), len(pos), spec)
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    keep = []
    extra = []
    for members, want in ((neg, want_neg), (pos, want_pos)):
        if want >= len(members):
            keep.append(members)
            if want > len(members):
                extra.append(members[rng.integers(0, len(members), size=want - len(members))])
        else:
            keep.append(np.sort(rng.choice(members, size=want, replace=False)))
    kept = np.sort(np.concatenate(keep))
    return np.concatenate([kept] + extra) if extra else kept


def balance(ds: ColumnarDataset, target: str, spec: BalanceSpec) -> ColumnarDataset:
    """Resample so the minority class makes up ``target_ratio`` of the rows.

    Upsampling keeps every row and adds minority duplicates drawn with
    replacement; downsampling drops majority rows without replacement.
    """
    idx = balance_indices(ds.target(target), spec)
    return ds.take(idx, balanced={"target": target, **spec.to_dict()})


def minority_fraction(labels: np.ndarray) -> float:
    labels = np.asarray(labels)
    pos = int(labels.sum())
    return min(pos, len(labels) - pos) / len(labels)
