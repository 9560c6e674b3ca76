"""Synthetic customer corpora with calibrated marginals and planted signal.

Each row draws an age group, buyer type and income band independently from
their mixes; the (age, buyer, income) cell fixes the probability of showing
up and of booking once shown.  Before sampling, one additive logit shift per
outcome is solved for so that the expected show rate and booked rate of the
whole corpus hit their targets.  Noise columns are drawn independently of
everything else.

Random numbers come from numpy's PCG64 bit generator seeded with
``GeneratorConfig.seed``.  Categorical draws use inverse-CDF lookup on
``Generator.random`` output so the byte stream depends only on PCG64 and
the documented draw order:  per period, ``cancel``, ``age``, ``buyer``,
``income``, ``show``, ``book`` uniforms, then each noise column's values
and its missing-mask uniforms.  Changing that order changes every corpus.
"""

from __future__ import annotations

import csv
import io
import itertools
import logging
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from ._io import atomic_write
from .dataset import ColumnarDataset, RawBookingStatus, Schema, build_dataset
from .errors import CalibrationFailure, ConfigError
from .kvconfig import parse_kv, read_kv

logger = logging.getLogger(__name__)

# Shortlisted customers per half-year with observed show and booked rates.
REFERENCE_PERIODS = (
    ("1st half 2015", 18011, 0.847, 0.272),
    ("2nd half 2015", 19716, 0.878, 0.210),
    ("1st half 2016", 20280, 0.875, 0.205),
    ("2nd half 2016", 17565, 0.872, 0.236),
    ("1st half 2017", 18861, 0.861, 0.204),
    ("2nd half 2017", 17141, 0.879, 0.186),
    ("1st half 2018", 19059, 0.887, 0.145),
    ("2nd half 2018", 15113, 0.866, 0.199),
    ("1st half 2019", 16964, 0.886, 0.168),
)
REFERENCE_TOTAL = (162710, 0.872, 0.202)
AGE_MIX = (0.50, 0.34, 0.16)

NOISE_LEVELS = ("a", "b", "c", "d", "e")
MAX_ITER = 100
TOL = 1e-10


def _logit(p):
    with np.errstate(divide="ignore"):
        return np.log(p) - np.log1p(-p)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=float)))


@dataclass(frozen=True)
class BehaviorProfile:
    """Per-cell probabilities indexed ``[age, buyer, income]``."""

    age_groups: tuple[str, ...]
    buyer_types: tuple[str, ...]
    income_bands: tuple[str, ...]
    p_show: np.ndarray
    p_book_given_show: np.ndarray
    show_shift: float = 0.0
    book_shift: float = 0.0

    def __post_init__(self):
        shape = (len(self.age_groups), len(self.buyer_types), len(self.income_bands))
        for name in ("p_show", "p_book_given_show"):
            arr = np.array(getattr(self, name), dtype=float)
            if arr.shape != shape:
                raise ConfigError(f"{name} has shape {arr.shape}, expected {shape}")
            if np.any((arr < 0) | (arr > 1)) or np.any(np.isnan(arr)):
                raise ConfigError(f"{name} has values outside [0, 1]")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.p_show.shape

    def cells(self):
        for a, b, i in itertools.product(*(range(n) for n in self.shape)):
            yield (self.age_groups[a], self.buyer_types[b], self.income_bands[i]), (a, b, i)

    def cell(self, age: str, buyer: str, income: str) -> tuple[float, float]:
        idx = (self.age_groups.index(age), self.buyer_types.index(buyer), self.income_bands.index(income))
        return float(self.p_show[idx]), float(self.p_book_given_show[idx])

    @classmethod
    def uniform(cls, p_show: float, p_book: float, levels=None) -> "BehaviorProfile":
        ref = levels or reference_profile()
        shape = ref.shape
        return cls(ref.age_groups, ref.buyer_types, ref.income_bands, np.full(shape, p_show), np.full(shape, p_book))

    @classmethod
    def from_text(cls, text: str, path=None) -> "BehaviorProfile":
        return cls._from_entries(parse_kv(text, path), path)

    @classmethod
    def from_file(cls, path) -> "BehaviorProfile":
        return cls._from_entries(read_kv(path), path)

    @classmethod
    def _from_entries(cls, entries, path) -> "BehaviorProfile":
        table = {key: (fields, lineno) for key, fields, lineno in entries}
        try:
            ages = tuple(table.pop("age_groups")[0])
            buyers = tuple(table.pop("buyer_types")[0])
            incomes = tuple(table.pop("income_bands")[0])
        except KeyError as exc:
            raise ConfigError(f"profile is missing {exc.args[0]!r}", path) from None
        shape = (len(ages), len(buyers), len(incomes))
        p_show = np.full(shape, np.nan)
        p_book = np.full(shape, np.nan)
        for key, (fields, lineno) in table.items():
            parts = key.split(".")
            if len(parts) != 4 or parts[0] != "cell":
                raise ConfigError(f"unknown key {key!r}", path, lineno)
            try:
                idx = (ages.index(parts[1]), buyers.index(parts[2]), incomes.index(parts[3]))
            except ValueError:
                raise ConfigError(f"cell {key!r} names an undeclared level", path, lineno) from None
            if len(fields) != 2:
                raise ConfigError(f"{key!r}: expected 'p_show, p_book_given_show'", path, lineno)
            try:
                p_show[idx], p_book[idx] = float(fields[0]), float(fields[1])
            except ValueError:
                raise ConfigError(f"{key!r}: probabilities must be numbers", path, lineno) from None
        if np.isnan(p_show).any():
            missing = [".".join(c) for c, idx in _cells(ages, buyers, incomes) if np.isnan(p_show[idx])]
            raise ConfigError("profile does not cover cells: " + ", ".join(missing), path)
        return cls(ages, buyers, incomes, p_show, p_book)

    def to_text(self) -> str:
        lines = [
            "age_groups = " + ", ".join(self.age_groups),
            "buyer_types = " + ", ".join(self.buyer_types),
            "income_bands = " + ", ".join(self.income_bands),
        ]
        for names, idx in self.cells():
            lines.append(f"cell.{'.'.join(names)} = {float(self.p_show[idx])!r}, {float(self.p_book_given_show[idx])!r}")
        return "\n".join(lines) + "\n"


def _cells(ages, buyers, incomes):
    for a, b, i in itertools.product(range(len(ages)), range(len(buyers)), range(len(incomes))):
        yield (ages[a], buyers[b], incomes[i]), (a, b, i)


def reference_profile() -> BehaviorProfile:
    text = resources.files("showbook.data").joinpath("reference_profile.cfg").read_text(encoding="utf-8")
    return BehaviorProfile.from_text(text, "reference_profile.cfg")


def reference_schema() -> Schema:
    text = resources.files("showbook.data").joinpath("reference_schema.cfg").read_text(encoding="utf-8")
    return Schema.from_text(text, "reference_schema.cfg")


@dataclass(frozen=True)
class GeneratorConfig:
    seed: int = 1
    n_per_period: tuple[tuple[str, int], ...] = tuple((p, n) for p, n, _, _ in REFERENCE_PERIODS)
    target_show_rate: float | None = REFERENCE_TOTAL[1]
    target_book_rate: float | None = REFERENCE_TOTAL[2]
    age_mix: tuple[float, ...] = AGE_MIX
    buyer_mix: tuple[float, ...] = (0.45, 0.55)
    income_mix: tuple[float, ...] = (0.35, 0.35, 0.30)
    noise_feature_count: int = 2
    noise_missing_rate: float = 0.01
    cancel_rate: float = 0.005
    # per-period (show, book) targets; used only when period_drift is on
    period_targets: tuple[tuple[float, float], ...] | None = None
    period_drift: bool = False

    def __post_init__(self):
        object.__setattr__(self, "n_per_period", tuple((str(p), int(n)) for p, n in self.n_per_period))
        if not self.n_per_period:
            raise ConfigError("no periods to generate")
        if any(n <= 0 for _, n in self.n_per_period):
            raise ConfigError("period counts must be positive")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must fit in an unsigned 64-bit integer")
        for name in ("target_show_rate", "target_book_rate"):
            v = getattr(self, name)
            if v is not None and not 0 <= v <= 1:
                raise ConfigError(f"{name} must be in [0, 1]")
        for name in ("noise_missing_rate", "cancel_rate"):
            if not 0 <= getattr(self, name) <= 1:
                raise ConfigError(f"{name} must be in [0, 1]")
        for name in ("age_mix", "buyer_mix", "income_mix"):
            mix = tuple(float(x) for x in getattr(self, name))
            object.__setattr__(self, name, mix)
            if any(x < 0 or x > 1 for x in mix) or abs(sum(mix) - 1.0) > 1e-12:
                raise ConfigError(f"{name} must be fractions summing to 1")
        if self.noise_feature_count < 0:
            raise ConfigError("noise_feature_count must be >= 0")
        if self.period_drift:
            targets = self.period_targets
            if targets is None:
                table = {p: (s, b) for p, _, s, b in REFERENCE_PERIODS}
                if not all(p in table for p, _ in self.n_per_period):
                    raise ConfigError("period_drift needs period_targets for periods outside the default table")
                targets = tuple(table[p] for p, _ in self.n_per_period)
                object.__setattr__(self, "period_targets", targets)
            if len(targets) != len(self.n_per_period):
                raise ConfigError("period_targets must match n_per_period")

    @property
    def n_total(self) -> int:
        return sum(n for _, n in self.n_per_period)

    def with_total(self, total: int) -> "GeneratorConfig":
        """Rescale the period counts to ``total`` rows, keeping proportions."""
        return replace(self, n_per_period=tuple(zip((p for p, _ in self.n_per_period),
                                                    split_counts(total, [n for _, n in self.n_per_period]))))

    def weights(self, shape) -> np.ndarray:
        w = np.einsum("a,b,c->abc", self.age_mix, self.buyer_mix, self.income_mix)
        if w.shape != tuple(shape):
            raise ConfigError(f"mixes give cell grid {w.shape}, profile has {tuple(shape)}")
        return w


def split_counts(total: int, proportions) -> list[int]:
    """Largest-remainder apportionment of ``total`` over ``proportions``."""
    if total <= 0:
        raise ConfigError("total rows must be positive")
    props = np.asarray(proportions, dtype=float)
    exact = total * props / props.sum()
    counts = np.floor(exact).astype(int)
    short = total - counts.sum()
    order = np.argsort(-(exact - counts), kind="stable")
    counts[order[:short]] += 1
    if np.any(counts <= 0):
        raise ConfigError(f"total {total} is too small to give every period a row")
    return counts.tolist()


def expected_rates(profile: BehaviorProfile, weights: np.ndarray) -> tuple[float, float]:
    """Exact expected (show rate, booked rate) over the cell grid."""
    w = weights / weights.sum()
    show = float(np.sum(w * profile.p_show))
    booked = float(np.sum(w * profile.p_show * profile.p_book_given_show))
    return show, booked


def find_shift(weights: np.ndarray, base_logits: np.ndarray, target: float, what: str = "rate") -> float:
    """Solve ``sum(w * sigmoid(base + s)) == target`` for the scalar ``s``.

    ``weights`` need not be normalised; infinite logits (probability 0 or 1)
    stay put.  Safeguarded Newton on a shrinking bracket.
    """
    w = weights / weights.sum()
    fixed_one = np.isposinf(base_logits)
    movable = np.isfinite(base_logits)
    lo_limit = float(w[fixed_one].sum())
    hi_limit = lo_limit + float(w[movable].sum())
    if not 0 < target < 1 or not lo_limit < target < hi_limit:
        raise CalibrationFailure(
            f"{what} target {target} unreachable: achievable range is ({lo_limit:.6g}, {hi_limit:.6g})"
        )

    def f(s):
        p = _sigmoid(base_logits[movable] + s)
        return lo_limit + float(np.sum(w[movable] * p)) - target, float(np.sum(w[movable] * p * (1 - p)))

    lo, hi = -64.0, 64.0
    s = 0.0
    for _ in range(MAX_ITER):
        val, slope = f(s)
        if abs(val) < TOL:
            return s
        if val > 0:
            hi = s
        else:
            lo = s
        step = s - val / slope if slope > 0 else None
        s = step if step is not None and lo < step < hi else 0.5 * (lo + hi)
    raise CalibrationFailure(f"{what} calibration did not converge in {MAX_ITER} iterations")


def calibrate_intercepts(
    profile: BehaviorProfile, weights: np.ndarray, target_show: float | None, target_book: float | None
) -> BehaviorProfile:
    """Shift show and book logits so expected marginals hit the targets.

    ``target_book`` is the booked rate over all customers.  A ``None``
    target leaves that outcome unshifted.
    """
    p_show = profile.p_show
    s_shift = 0.0
    if target_show is not None:
        s_shift = find_shift(weights, _logit(p_show), target_show, "show")
        p_show = _shifted(p_show, s_shift)
    p_book = profile.p_book_given_show
    b_shift = 0.0
    if target_book is not None:
        b_shift = find_shift(weights * p_show, _logit(p_book), target_book / _weighted_mean(weights, p_show), "book")
        p_book = _shifted(p_book, b_shift)
    return replace(profile, p_show=p_show, p_book_given_show=p_book,
                   show_shift=profile.show_shift + s_shift, book_shift=profile.book_shift + b_shift)


def _weighted_mean(w, p) -> float:
    return float(np.sum(w * p) / np.sum(w))


def _shifted(p: np.ndarray, s: float) -> np.ndarray:
    out = np.array(p, dtype=float)
    inner = (p > 0) & (p < 1)
    out[inner] = _sigmoid(_logit(p[inner]) + s)
    return out


def _draw(rng: np.random.Generator, mix, n: int) -> np.ndarray:
    cdf = np.cumsum(mix)
    cdf[-1] = 1.0
    return np.searchsorted(cdf, rng.random(n), side="right")


def corpus_schema(noise_feature_count: int) -> Schema:
    lines = [
        "customer_id = categorical, identifier",
        "period = categorical, ignored, period",
        "age_group = categorical, predictor, age-group",
        "buyer_type = categorical, predictor",
        "income_band = categorical, predictor",
    ]
    for k in range(noise_feature_count):
        kind = "numeric" if k % 2 == 0 else "categorical"
        lines.append(f"noise_{k + 1} = {kind}, predictor")
    lines.append("status = categorical, raw-booking-status")
    return Schema.from_text("\n".join(lines))


@dataclass
class GeneratedCorpus:
    dataset: ColumnarDataset
    csv_text: str
    schema: Schema
    profile: BehaviorProfile
    period_profiles: list[BehaviorProfile] = field(default_factory=list)


def generate(cfg: GeneratorConfig, profile: BehaviorProfile | None = None, path=None) -> GeneratedCorpus:
    """Draw a corpus; also write it as CSV when ``path`` is given."""
    profile = profile or reference_profile()
    weights = cfg.weights(profile.shape)
    if cfg.period_drift:
        period_profiles = [calibrate_intercepts(profile, weights, s, b) for s, b in cfg.period_targets]
        calibrated = calibrate_intercepts(profile, weights, cfg.target_show_rate, cfg.target_book_rate)
    else:
        calibrated = calibrate_intercepts(profile, weights, cfg.target_show_rate, cfg.target_book_rate)
        period_profiles = [calibrated] * len(cfg.n_per_period)
    logger.info("calibrated shifts: show %+.6f, book %+.6f", calibrated.show_shift, calibrated.book_shift)

    schema = corpus_schema(cfg.noise_feature_count)
    header = list(schema.names)
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    statuses = np.array([s.value for s in RawBookingStatus])
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(header)
    rows: list[list[str]] = []
    row_no = 0
    for (period, n), prof in zip(cfg.n_per_period, period_profiles):
        cancel = rng.random(n) < cfg.cancel_rate
        age = _draw(rng, cfg.age_mix, n)
        buyer = _draw(rng, cfg.buyer_mix, n)
        income = _draw(rng, cfg.income_mix, n)
        show = rng.random(n) < prof.p_show[age, buyer, income]
        book = (rng.random(n) < prof.p_book_given_show[age, buyer, income]) & show
        # index into RawBookingStatus order: BookedCompleted, ShowedNoBook, NoShow, BookedCanceled
        status = np.where(cancel, 3, np.where(book, 0, np.where(show, 1, 2)))
        noise_cols = []
        for k in range(cfg.noise_feature_count):
            if k % 2 == 0:
                vals = np.char.mod("%.4f", rng.standard_normal(n))
            else:
                vals = np.array(NOISE_LEVELS)[_draw(rng, [1 / len(NOISE_LEVELS)] * len(NOISE_LEVELS), n)]
            vals = vals.astype(object)
            vals[rng.random(n) < cfg.noise_missing_rate] = ""
            noise_cols.append(vals)
        for j in range(n):
            row_no += 1
            row = [
                f"C{row_no:07d}",
                period,
                profile.age_groups[age[j]],
                profile.buyer_types[buyer[j]],
                profile.income_bands[income[j]],
            ]
            row.extend(col[j] for col in noise_cols)
            row.append(statuses[status[j]])
            rows.append(row)
    writer.writerows(rows)
    text = out.getvalue()
    if path is not None:
        atomic_write(Path(path), text)
    ds = build_dataset(schema, header, rows, source=None if path is None else str(path))
    return GeneratedCorpus(ds, text, schema, calibrated, period_profiles)
