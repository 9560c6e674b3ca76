"""Typed columnar customer table: schema, CSV ingestion, flags, imputation.

A schema file uses the grammar from :mod:`showbook.kvconfig`, one column per
line::

    column_name = kind, role[, tag]

``kind`` is ``categorical`` or ``numeric``.  ``role`` is one of
``predictor``, ``raw-booking-status``, ``identifier`` or ``ignored``.  The
optional ``tag`` marks a column for :func:`summarize`: ``period`` or
``age-group``.  Exactly one column carries the raw booking status; its
tokens must be one of the :class:`RawBookingStatus` member names.
"""

from __future__ import annotations

import csv
import hashlib
import logging
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    AllMissingColumn,
    ConfigError,
    DataTypeError,
    EmptyFile,
    InvalidStatus,
    MissingGroupColumn,
    SchemaMismatch,
)
from .kvconfig import parse_kv, read_kv

logger = logging.getLogger(__name__)

MISSING = -1  # categorical code for a blank field


class Kind(str, Enum):
    CATEGORICAL = "categorical"
    NUMERIC = "numeric"


class Role(str, Enum):
    PREDICTOR = "predictor"
    STATUS = "raw-booking-status"
    IDENTIFIER = "identifier"
    IGNORED = "ignored"


TAGS = ("period", "age-group")


class RawBookingStatus(Enum):
    BookedCompleted = "BookedCompleted"
    ShowedNoBook = "ShowedNoBook"
    NoShow = "NoShow"
    BookedCanceled = "BookedCanceled"


def derive_flags(status: RawBookingStatus) -> tuple[int, int] | None:
    """Map a raw status to ``(show_flag, booked_flag)``.

    Canceled bookings return ``None``: those rows are discarded.
    """
    if status is RawBookingStatus.BookedCompleted:
        return 1, 1
    if status is RawBookingStatus.ShowedNoBook:
        return 1, 0
    if status is RawBookingStatus.NoShow:
        return 0, 0
    if status is RawBookingStatus.BookedCanceled:
        return None
    raise TypeError(f"not a RawBookingStatus: {status!r}")


@dataclass(frozen=True)
class Column:
    name: str
    kind: Kind
    role: Role
    tag: str | None = None


@dataclass(frozen=True)
class Schema:
    columns: tuple[Column, ...]

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))
        names = [c.name for c in self.columns]
        dupes = sorted(n for n, k in Counter(names).items() if k > 1)
        if dupes:
            raise ConfigError(f"duplicate column names: {', '.join(dupes)}")
        n_status = sum(c.role is Role.STATUS for c in self.columns)
        if n_status != 1:
            raise ConfigError(f"schema needs exactly one raw-booking-status column, found {n_status}")
        if not any(c.role is Role.PREDICTOR for c in self.columns):
            raise ConfigError("schema has no predictor columns")
        if sum(c.role is Role.IDENTIFIER for c in self.columns) > 1:
            raise ConfigError("schema has more than one identifier column")
        for tag in TAGS:
            if sum(c.tag == tag for c in self.columns) > 1:
                raise ConfigError(f"more than one column tagged {tag!r}")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.columns)

    @property
    def predictors(self) -> tuple[Column, ...]:
        return tuple(c for c in self.columns if c.role is Role.PREDICTOR)

    @property
    def status_column(self) -> Column:
        return next(c for c in self.columns if c.role is Role.STATUS)

    @property
    def identifier(self) -> Column | None:
        return next((c for c in self.columns if c.role is Role.IDENTIFIER), None)

    def tagged(self, tag: str) -> Column | None:
        return next((c for c in self.columns if c.tag == tag), None)

    def column(self, name: str) -> Column:
        for c in self.columns:
            if c.name == name:
                return c
        raise KeyError(name)

    @property
    def data_columns(self) -> tuple[Column, ...]:
        """Every column except the raw status, in schema order."""
        return tuple(c for c in self.columns if c.role is not Role.STATUS)

    def to_text(self) -> str:
        lines = []
        for c in self.columns:
            fields = [c.kind.value, c.role.value] + ([c.tag] if c.tag else [])
            lines.append(f"{c.name} = {', '.join(fields)}")
        return "\n".join(lines) + "\n"

    def fingerprint(self) -> str:
        """Hash of the predictor names and kinds, in order."""
        canon = "\n".join(f"{c.name}:{c.kind.value}" for c in self.predictors)
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]

    @classmethod
    def from_text(cls, text: str, path=None) -> "Schema":
        return cls._from_entries(parse_kv(text, path), path)

    @classmethod
    def from_file(cls, path) -> "Schema":
        return cls._from_entries(read_kv(path), path)

    @classmethod
    def _from_entries(cls, entries, path) -> "Schema":
        cols = []
        for name, fields, lineno in entries:
            if len(fields) not in (2, 3):
                raise ConfigError(f"{name!r}: expected 'kind, role[, tag]'", path, lineno)
            try:
                kind = Kind(fields[0])
                role = Role(fields[1])
            except ValueError as exc:
                raise ConfigError(str(exc), path, lineno) from None
            tag = fields[2] if len(fields) == 3 else None
            if tag is not None and tag not in TAGS:
                raise ConfigError(f"unknown tag {tag!r}; expected one of {TAGS}", path, lineno)
            if role is Role.STATUS and kind is not Kind.CATEGORICAL:
                raise ConfigError("the raw-booking-status column must be categorical", path, lineno)
            cols.append(Column(name, kind, role, tag))
        return cls(tuple(cols))


@dataclass(frozen=True, eq=False)
class CategoricalColumn:
    """Dictionary-encoded strings; ``levels`` is in first-seen order."""

    levels: tuple[str, ...]
    codes: np.ndarray

    def labels(self) -> list[str]:
        return ["" if c == MISSING else self.levels[c] for c in self.codes]

    def missing(self) -> np.ndarray:
        return self.codes == MISSING

    def take(self, idx) -> "CategoricalColumn":
        return CategoricalColumn(self.levels, _frozen(self.codes[idx]))


@dataclass(frozen=True, eq=False)
class NumericColumn:
    values: np.ndarray

    def missing(self) -> np.ndarray:
        return np.isnan(self.values)

    def take(self, idx) -> "NumericColumn":
        return NumericColumn(_frozen(self.values[idx]))


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


class ColumnarDataset:
    """Immutable table of customer records.

    ``source_index`` holds each row's position in the table it was loaded
    as; it survives partitioning and resampling and is how row identity is
    tracked.  Flags are ``None`` for unlabeled (scoring) data.
    """

    def __init__(
        self,
        schema: Schema,
        columns: Mapping[str, CategoricalColumn | NumericColumn],
        row_ids: np.ndarray,
        show_flag: np.ndarray | None = None,
        booked_flag: np.ndarray | None = None,
        source_index: np.ndarray | None = None,
        provenance: Mapping | None = None,
    ):
        n = len(row_ids)
        self.schema = schema
        self.columns = MappingProxyType(dict(columns))
        self.row_ids = _frozen(np.asarray(row_ids))
        self.source_index = _frozen(
            np.arange(n, dtype=np.int64) if source_index is None else np.asarray(source_index, dtype=np.int64)
        )
        self.show_flag = None if show_flag is None else _frozen(np.asarray(show_flag, dtype=np.int8))
        self.booked_flag = None if booked_flag is None else _frozen(np.asarray(booked_flag, dtype=np.int8))
        self.provenance = MappingProxyType(dict(provenance or {}))
        for name, col in self.columns.items():
            length = len(col.codes) if isinstance(col, CategoricalColumn) else len(col.values)
            if length != n:
                raise ValueError(f"column {name!r} has {length} rows, expected {n}")
        for flag in (self.show_flag, self.booked_flag, self.source_index):
            if flag is not None and len(flag) != n:
                raise ValueError("flag vector length differs from row count")
        if (self.show_flag is None) != (self.booked_flag is None):
            raise ValueError("show_flag and booked_flag must both be present or both absent")
        if self.show_flag is not None and np.any(self.booked_flag > self.show_flag):
            raise ValueError("booked_flag=1 with show_flag=0 is impossible")

    @property
    def n_rows(self) -> int:
        return len(self.row_ids)

    def __len__(self) -> int:
        return self.n_rows

    def __repr__(self) -> str:
        return f"<ColumnarDataset rows={self.n_rows} columns={len(self.columns)} labeled={self.is_labeled}>"

    @property
    def is_labeled(self) -> bool:
        return self.show_flag is not None

    def target(self, name: str) -> np.ndarray:
        if not self.is_labeled:
            raise ValueError("dataset has no target flags")
        if name == "show":
            return self.show_flag
        if name == "booked":
            return self.booked_flag
        raise ValueError(f"unknown target {name!r}; expected 'show' or 'booked'")

    def replace(self, **changes) -> "ColumnarDataset":
        kw = dict(
            schema=self.schema,
            columns=self.columns,
            row_ids=self.row_ids,
            show_flag=self.show_flag,
            booked_flag=self.booked_flag,
            source_index=self.source_index,
            provenance=self.provenance,
        )
        kw.update(changes)
        return ColumnarDataset(**kw)

    def take(self, idx, **provenance) -> "ColumnarDataset":
        """Rows at positions ``idx`` (repeats allowed), as a new dataset."""
        idx = np.asarray(idx, dtype=np.int64)
        prov = dict(self.provenance)
        prov.update(provenance)
        return ColumnarDataset(
            schema=self.schema,
            columns={k: c.take(idx) for k, c in self.columns.items()},
            row_ids=self.row_ids[idx],
            show_flag=None if self.show_flag is None else self.show_flag[idx],
            booked_flag=None if self.booked_flag is None else self.booked_flag[idx],
            source_index=self.source_index[idx],
            provenance=prov,
        )

    def without_flags(self) -> "ColumnarDataset":
        return self.replace(show_flag=None, booked_flag=None)

    def equals(self, other: "ColumnarDataset") -> bool:
        """Data equality; provenance is ignored."""
        if self.schema != other.schema or self.n_rows != other.n_rows:
            return False
        if not np.array_equal(self.row_ids, other.row_ids):
            return False
        for a, b in ((self.show_flag, other.show_flag), (self.booked_flag, other.booked_flag)):
            if (a is None) != (b is None) or (a is not None and not np.array_equal(a, b)):
                return False
        if self.columns.keys() != other.columns.keys():
            return False
        for name, col in self.columns.items():
            o = other.columns[name]
            if isinstance(col, CategoricalColumn):
                if col.labels() != o.labels():
                    return False
            elif not np.array_equal(col.values, o.values, equal_nan=True):
                return False
        return True


def build_dataset(
    schema: Schema,
    header: Sequence[str],
    rows: Iterable[Sequence[str]],
    labeled: bool = True,
    source: str | None = None,
) -> ColumnarDataset:
    """Type the raw string cells of a table and derive its flags.

    ``rows`` excludes the header.  When ``labeled`` is false the header must
    omit the raw status column and no flags are produced.
    """
    expected = schema.names if labeled else tuple(c.name for c in schema.data_columns)
    _check_header(header, expected)
    pos = {name: i for i, name in enumerate(header)}
    status_name = schema.status_column.name
    width = len(header)

    raw = [list() for _ in header]
    raw_rows = 0
    for row in rows:
        raw_rows += 1
        if len(row) != width:
            raise SchemaMismatch(f"row {raw_rows}: expected {width} fields, found {len(row)}")
        for j, cell in enumerate(row):
            raw[j].append(cell)
    if raw_rows == 0:
        raise EmptyFile(f"{source or 'input'}: no data rows")

    keep = np.ones(raw_rows, dtype=bool)
    show = booked = None
    if labeled:
        show = np.zeros(raw_rows, dtype=np.int8)
        booked = np.zeros(raw_rows, dtype=np.int8)
        for i, token in enumerate(raw[pos[status_name]]):
            try:
                status = RawBookingStatus[token.strip()]
            except KeyError:
                raise InvalidStatus(status_name, i + 1, token) from None
            flags = derive_flags(status)
            if flags is None:
                keep[i] = False
            else:
                show[i], booked[i] = flags
    n_discarded = int(raw_rows - keep.sum())
    kept = np.flatnonzero(keep)

    columns: dict[str, CategoricalColumn | NumericColumn] = {}
    for col in schema.data_columns:
        cells = raw[pos[col.name]]
        if col.kind is Kind.NUMERIC:
            values = np.empty(raw_rows, dtype=np.float64)
            for i, token in enumerate(cells):
                token = token.strip()
                if token == "":
                    values[i] = np.nan
                    continue
                try:
                    v = float(token)
                except ValueError:
                    raise DataTypeError(col.name, i + 1, token) from None
                if not np.isfinite(v):
                    raise DataTypeError(col.name, i + 1, token)
                values[i] = v
            columns[col.name] = NumericColumn(_frozen(values[kept]))
        else:
            columns[col.name] = _encode([cells[i] for i in kept])

    ident = schema.identifier
    if ident is not None:
        row_ids = np.array(raw[pos[ident.name]], dtype=str)[kept]
    else:
        row_ids = np.array([str(i + 1) for i in kept], dtype=str)
    if n_discarded:
        logger.info("discarded %d canceled rows of %d", n_discarded, raw_rows)
    return ColumnarDataset(
        schema=schema,
        columns=columns,
        row_ids=row_ids,
        show_flag=None if show is None else show[kept],
        booked_flag=None if booked is None else booked[kept],
        provenance={
            "source": source,
            "raw_rows": raw_rows,
            "discarded_canceled": n_discarded,
            "imputation": None,
            "balanced": False,
        },
    )


def _encode(cells: Sequence[str]) -> CategoricalColumn:
    levels: dict[str, int] = {}
    codes = np.empty(len(cells), dtype=np.int32)
    for i, token in enumerate(cells):
        if token == "":
            codes[i] = MISSING
            continue
        code = levels.get(token)
        if code is None:
            code = levels[token] = len(levels)
        codes[i] = code
    return CategoricalColumn(tuple(levels), _frozen(codes))


def _check_header(header: Sequence[str], expected: Sequence[str]) -> None:
    dupes = sorted(n for n, k in Counter(header).items() if k > 1)
    missing = [n for n in expected if n not in header]
    unexpected = [n for n in header if n not in expected]
    if dupes or missing or unexpected:
        parts = []
        if missing:
            parts.append("missing column(s) " + ", ".join(repr(n) for n in missing))
        if unexpected:
            parts.append("unexpected column(s) " + ", ".join(repr(n) for n in unexpected))
        if dupes:
            parts.append("duplicate column(s) " + ", ".join(repr(n) for n in dupes))
        raise SchemaMismatch("header does not match schema: " + "; ".join(parts), missing, unexpected)


def load_csv(path, schema: Schema, labeled: bool = True) -> ColumnarDataset:
    """Read a UTF-8 CSV with a header row into a typed dataset.

    Canceled bookings are dropped here.  With ``labeled=False`` the file
    must not contain the raw status column (a shortlist to be scored).
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise EmptyFile(f"{path}: file is empty") from None
        return build_dataset(schema, header, reader, labeled=labeled, source=str(path))


@dataclass(frozen=True)
class ImputationPolicy:
    categorical: str = "mode"
    numeric: str = "median"

    def __post_init__(self):
        if self.categorical not in ("mode", "leave-missing"):
            raise ValueError(f"categorical policy must be mode or leave-missing, not {self.categorical!r}")
        if self.numeric not in ("mean", "median", "leave-missing"):
            raise ValueError(f"numeric policy must be mean, median or leave-missing, not {self.numeric!r}")

    def to_dict(self) -> dict:
        return {"categorical": self.categorical, "numeric": self.numeric}


def compute_fills(ds: ColumnarDataset, policy: ImputationPolicy) -> dict[str, str | float]:
    """Fill value per predictor column that has missing entries."""
    fills: dict[str, str | float] = {}
    for col in ds.schema.predictors:
        data = ds.columns[col.name]
        miss = data.missing()
        if not miss.any():
            continue
        if miss.all():
            raise AllMissingColumn(f"column {col.name!r} has no values to impute from")
        if isinstance(data, CategoricalColumn):
            if policy.categorical == "leave-missing":
                continue
            counts = np.bincount(data.codes[~miss], minlength=len(data.levels))
            # argmax returns the first maximum: ties go to the first-seen level
            fills[col.name] = data.levels[int(np.argmax(counts))]
        else:
            if policy.numeric == "leave-missing":
                continue
            present = data.values[~miss]
            fills[col.name] = float(np.mean(present) if policy.numeric == "mean" else np.median(present))
    return fills


def apply_fills(ds: ColumnarDataset, fills: Mapping[str, str | float]) -> ColumnarDataset:
    columns = dict(ds.columns)
    for name, value in fills.items():
        if name not in columns:
            raise SchemaMismatch(f"column {name!r} is missing", missing=[name])
        data = columns[name]
        miss = data.missing()
        if not miss.any():
            continue
        if isinstance(data, CategoricalColumn):
            levels = data.levels
            if value not in levels:
                levels = levels + (value,)
            codes = data.codes.copy()
            codes[miss] = levels.index(value)
            columns[name] = CategoricalColumn(levels, _frozen(codes))
        else:
            values = data.values.copy()
            values[miss] = value
            columns[name] = NumericColumn(_frozen(values))
    prov = dict(ds.provenance)
    prov["imputation"] = {"fills": dict(fills)}
    return ds.replace(columns=columns, provenance=prov)


def impute(ds: ColumnarDataset, policy: ImputationPolicy | None = None) -> ColumnarDataset:
    """Fill blanks in predictor columns; identifiers and ignored columns are untouched."""
    policy = policy or ImputationPolicy()
    fills = compute_fills(ds, policy)
    out = apply_fills(ds, fills)
    prov = dict(out.provenance)
    prov["imputation"] = {"policy": policy.to_dict(), "fills": fills}
    return out.replace(provenance=prov)


def has_missing(ds: ColumnarDataset, names: Iterable[str] | None = None) -> list[str]:
    names = [c.name for c in ds.schema.predictors] if names is None else list(names)
    return [n for n in names if ds.columns[n].missing().any()]


def pct(num: int, den: int) -> Fraction:
    return Fraction(100 * num, den) if den else Fraction(0)


@dataclass
class GroupRow:
    label: str
    n: int
    shows: int
    booked: int

    @property
    def show_pct(self) -> Fraction:
        return pct(self.shows, self.n)

    @property
    def booked_pct(self) -> Fraction:
        return pct(self.booked, self.n)

    @property
    def booked_given_show_pct(self) -> Fraction:
        return pct(self.booked, self.shows)


@dataclass
class Summary:
    """Counts and exact percentages; rounding happens only in :meth:`to_text`."""

    total: GroupRow
    periods: list[GroupRow] = field(default_factory=list)
    age_groups: list[tuple[str, int]] = field(default_factory=list)

    def age_pct(self) -> list[tuple[str, Fraction]]:
        return [(label, pct(n, self.total.n)) for label, n in self.age_groups]

    def to_dict(self) -> dict:
        def row(r: GroupRow) -> dict:
            return {
                "label": r.label,
                "customers": r.n,
                "shows": r.shows,
                "booked": r.booked,
                "show_pct": float(r.show_pct),
                "booked_pct": float(r.booked_pct),
                "booked_given_show_pct": float(r.booked_given_show_pct),
            }

        return {
            "periods": [row(r) for r in self.periods],
            "total": row(self.total),
            "age_groups": [
                {"label": label, "customers": n, "pct": float(p)}
                for (label, n), (_, p) in zip(self.age_groups, self.age_pct())
            ],
        }

    def to_text(self) -> str:
        lines = [f"{'Period':<16}{'Customers':>12}{'Show %':>10}{'Booked %':>10}"]
        for r in self.periods + [self.total]:
            lines.append(f"{r.label:<16}{r.n:>12,}{float(r.show_pct):>9.1f}%{float(r.booked_pct):>9.1f}%")
        if self.age_groups:
            lines.append("")
            lines.append(f"{'Age group':<16}{'Customers':>12}{'Share':>10}")
            for (label, n), (_, p) in zip(self.age_groups, self.age_pct()):
                lines.append(f"{label:<16}{n:>12,}{float(p):>9.1f}%")
        return "\n".join(lines) + "\n"


def _group_counts(ds: ColumnarDataset, name: str) -> list[tuple[str, np.ndarray]]:
    col = ds.columns[name]
    if not isinstance(col, CategoricalColumn):
        raise MissingGroupColumn(f"grouping column {name!r} must be categorical")
    groups = [(label, col.codes == i) for i, label in enumerate(col.levels)]
    groups = [(label, m) for label, m in groups if m.any()]
    miss = col.missing()
    if miss.any():
        groups.append(("(missing)", miss))
    return groups


def summarize(ds: ColumnarDataset, groups: Sequence[str] | None = None) -> Summary:
    """Per-period show/booked percentages and the age-group distribution.

    ``groups`` names the tags to report (``"period"``, ``"age-group"``);
    by default every tag declared in the schema is used.  Booked
    percentages are over all customers in the group.
    """
    if not ds.is_labeled:
        raise ValueError("summarize needs a labeled dataset")
    if groups is None:
        groups = [t for t in TAGS if ds.schema.tagged(t) is not None]
    for tag in groups:
        if tag not in TAGS:
            raise ValueError(f"unknown group tag {tag!r}")
        if ds.schema.tagged(tag) is None:
            raise MissingGroupColumn(f"no column tagged {tag!r} in schema")

    def row(label: str, mask) -> GroupRow:
        return GroupRow(
            label,
            int(np.count_nonzero(mask)),
            int(ds.show_flag[mask].sum()),
            int(ds.booked_flag[mask].sum()),
        )

    summary = Summary(total=row("Total", np.ones(ds.n_rows, dtype=bool)))
    if "period" in groups:
        summary.periods = [row(label, m) for label, m in _group_counts(ds, ds.schema.tagged("period").name)]
    if "age-group" in groups:
        summary.age_groups = [
            (label, int(m.sum())) for label, m in _group_counts(ds, ds.schema.tagged("age-group").name)
        ]
    return summary
