"""Two-stage show -> book pipeline with an automatic candidate leaderboard.

Stage one predicts ``show`` on every customer.  Stage two predicts
``booked`` and is trained only on customers who showed up.  For each stage
every candidate learner is trained on a rebalanced training partition and
scored on the untouched test partition; the leaderboard is ordered by test
AUC, then accuracy, then candidate id.

Candidates see 50:50 training data, so their raw outputs overstate the
minority class.  Each result records ``prior_shift``, the log-odds gap
between the natural and the rebalanced training event rates; scoring adds
it to the model's log-odds so that ``p_show`` and ``p_book`` are on the
population scale.  Leaderboard metrics use the raw scores.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from ._io import atomic_write, dumps, read_json
from .dataset import ColumnarDataset, ImputationPolicy, Schema, apply_fills, compute_fills
from .errors import (
    CorruptBundle,
    EmptyShownSubset,
    LengthMismatch,
    ShowbookError,
    SingleClass,
    UnseenCategoryWarning,
)
from .evaluate import EvaluationReport, comparison_table, evaluate
from .learners import (
    LEARNER_NAMES,
    TREE_KINDS,
    TrainConfig,
    TrainedModel,
    decision_scores,
    load_model,
    model_kind,
    model_to_dict,
    train,
)
from .learners.base import sigmoid
from .prep import BalanceSpec, PartitionSpec, balance, partition

logger = logging.getLogger(__name__)

SHOW_CANDIDATES = ("mlp", "cart", "chaid")
BOOKED_CANDIDATES = ("mlp", "chaid", "lr")
ALL_CANDIDATES = ("mlp", "cart", "chaid", "lr")
TARGET_TITLES = {"show": "SHOW FLAG", "booked": "BOOKED FLAG"}

# Small per-learner grids, used only when CascadeConfig.grid is set.
GRIDS = {
    "cart": ({"max_depth": 4}, {"max_depth": 6}, {"max_depth": 8}),
    "chaid": ({"alpha_split": 0.01}, {"alpha_split": 0.05}),
    "lr": ({"l2": 1e-4}, {"l2": 1e-2}),
    "mlp": ({"hidden_units": 8}, {"hidden_units": 16}, {"hidden_units": 32}),
}


def _logit(p: float) -> float:
    return math.log(p) - math.log1p(-p)


@dataclass(frozen=True)
class Candidate:
    learner: str
    overrides: tuple[tuple[str, object], ...] = ()

    @property
    def id(self) -> str:
        if not self.overrides:
            return self.learner
        return f"{self.learner}[{','.join(f'{k}={v}' for k, v in self.overrides)}]"

    def config(self, base: TrainConfig) -> TrainConfig:
        return replace(base, **dict(self.overrides))


def expand_candidates(learners, grid: bool = False) -> list[Candidate]:
    out = []
    for name in learners:
        if name not in LEARNER_NAMES:
            raise ValueError(f"unknown learner {name!r}; choose from {sorted(LEARNER_NAMES)}")
        if grid:
            out.extend(Candidate(name, tuple(sorted(g.items()))) for g in GRIDS[name])
        else:
            out.append(Candidate(name))
    return out


@dataclass
class CandidateResult:
    candidate: Candidate
    config: TrainConfig
    report: EvaluationReport | None = None
    model: TrainedModel | None = None
    error: str | None = None
    prior_shift: float = 0.0
    n_train: int = 0
    n_train_natural: int = 0
    n_test: int = 0

    @property
    def id(self) -> str:
        return self.candidate.id

    @property
    def learner(self) -> str:
        return self.candidate.learner

    @property
    def ok(self) -> bool:
        return self.report is not None

    def sort_key(self):
        if not self.ok:
            return (1, 0.0, 0.0, self.id)
        return (0, -self.report.auc, -self.report.accuracy, self.id)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "learner": self.learner,
            "display_name": LEARNER_NAMES[self.learner],
            "config": self.config.to_dict(),
            "report": None if self.report is None else self.report.to_dict(),
            "error": self.error,
            "prior_shift": self.prior_shift,
            "n_train": self.n_train,
            "n_train_natural": self.n_train_natural,
            "n_test": self.n_test,
        }


@dataclass
class Leaderboard:
    target: str
    results: list[CandidateResult]
    partition: PartitionSpec
    balance: BalanceSpec | None
    features: tuple[str, ...]
    n_rows: int
    threshold: float = 0.5

    @property
    def ranked(self) -> list[CandidateResult]:
        return [r for r in self.results if r.ok]

    @property
    def top(self) -> CandidateResult:
        if not self.ranked:
            raise ShowbookError(
                f"every candidate failed for target {self.target!r}: "
                + "; ".join(f"{r.id}: {r.error}" for r in self.results)
            )
        return self.ranked[0]

    def to_dict(self) -> dict:
        return {
            "target": self.target,
            "partition": self.partition.to_dict(),
            "balance": None if self.balance is None else self.balance.to_dict(),
            "features": list(self.features),
            "n_rows": self.n_rows,
            "threshold": self.threshold,
            "results": [r.to_dict() for r in self.results],
        }

    def to_text(self) -> str:
        return leaderboard_table(self.to_dict())


def leaderboard_table(doc: dict) -> str:
    title = f"Table of Comparison for Generated Models for '{TARGET_TITLES.get(doc['target'], doc['target'])}'"
    cols = []
    for r in doc["results"]:
        name = LEARNER_NAMES[r["learner"]] if r["id"] == r["learner"] else r["id"]
        cols.append((name, r["report"], r["error"]))
    return comparison_table(title, cols)


def _train_one(cand: Candidate, base_cfg: TrainConfig, train_ds, test_ds, target, features, natural_rate, threshold):
    cfg = cand.config(base_cfg)
    res = CandidateResult(cand, cfg, n_test=test_ds.n_rows)
    res.n_train = train_ds.n_rows
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            model = train(cand.learner, train_ds, target, cfg, features=features)
            scores = model.predict_proba(test_ds)
        res.model = model
        res.report = evaluate(scores, test_ds.target(target), threshold)
        balanced_rate = float(np.mean(train_ds.target(target)))
        res.prior_shift = _logit(natural_rate) - _logit(balanced_rate)
    except (ShowbookError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        res.error = f"{type(exc).__name__}: {exc}"
        res.model = None
        res.report = None
        logger.warning("candidate %s failed: %s", cand.id, res.error)
    return res


def auto_classify(
    ds: ColumnarDataset,
    target: str,
    candidates,
    part: PartitionSpec,
    bal: BalanceSpec | None = BalanceSpec(),
    cfg: TrainConfig | None = None,
    features=None,
    threshold: float = 0.5,
    n_jobs: int = 1,
) -> Leaderboard:
    """Train every candidate on one shared split and rank them on the test part.

    A failing candidate is kept in the leaderboard with its error text and
    sorts after every successful one.
    """
    cfg = cfg or TrainConfig()
    cands = [c if isinstance(c, Candidate) else Candidate(c) for c in candidates]
    if len(cands) < 2:
        raise ValueError("auto_classify needs at least two candidates")
    features = tuple(features or (c.name for c in ds.schema.predictors))
    train_ds, test_ds = partition(ds, part)
    natural_rate = float(np.mean(train_ds.target(target)))
    if bal is not None:
        train_ds = balance(train_ds, target, bal)
    # leakage guard: the test part is scored at its natural class ratio
    assert not test_ds.provenance.get("balanced"), "test partition must never be rebalanced"
    assert not set(test_ds.source_index) & set(train_ds.source_index), "train/test overlap"

    args = (cfg, train_ds, test_ds, target, features, natural_rate, threshold)
    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(lambda c: _train_one(c, *args), cands))
    else:
        results = [_train_one(c, *args) for c in cands]
    natural_n = int(ds.n_rows - test_ds.n_rows)
    for r in results:
        r.n_train_natural = natural_n
    results.sort(key=CandidateResult.sort_key)
    return Leaderboard(target, results, part, bal, features, ds.n_rows, threshold)


@dataclass(frozen=True)
class CascadeConfig:
    seed: int = 1
    show_candidates: tuple[str, ...] = SHOW_CANDIDATES
    booked_candidates: tuple[str, ...] = BOOKED_CANDIDATES
    show_train_fraction: float = 0.8
    booked_train_fraction: float = 0.5
    balance_mode: str | None = "upsample-minority"
    balance_ratio: float = 0.5
    stratify: bool = True
    imputation: ImputationPolicy = ImputationPolicy()
    train: TrainConfig = TrainConfig()
    grid: bool = False
    prefer_interpretable: bool = False
    interpretable_margin: float = 0.02
    threshold: float = 0.5
    n_jobs: int = 1

    def seeds(self) -> dict[str, int]:
        """Independent sub-seeds for each random step, all derived from ``seed``."""
        names = ("show_partition", "show_balance", "booked_partition", "booked_balance", "learners")
        state = np.random.SeedSequence(self.seed).generate_state(len(names))
        return dict(zip(names, (int(s) for s in state)))

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "show_candidates": list(self.show_candidates),
            "booked_candidates": list(self.booked_candidates),
            "show_train_fraction": self.show_train_fraction,
            "booked_train_fraction": self.booked_train_fraction,
            "balance_mode": self.balance_mode,
            "balance_ratio": self.balance_ratio,
            "stratify": self.stratify,
            "imputation": self.imputation.to_dict(),
            "train": self.train.to_dict(),
            "grid": self.grid,
            "prefer_interpretable": self.prefer_interpretable,
            "interpretable_margin": self.interpretable_margin,
            "threshold": self.threshold,
            "n_jobs": self.n_jobs,
        }

    @classmethod
    def from_dict(cls, d) -> "CascadeConfig":
        d = dict(d)
        d["show_candidates"] = tuple(d["show_candidates"])
        d["booked_candidates"] = tuple(d["booked_candidates"])
        d["imputation"] = ImputationPolicy(**d["imputation"])
        d["train"] = TrainConfig.from_dict(d["train"])
        return cls(**d)

    def stage(self, target: str) -> tuple[PartitionSpec, BalanceSpec | None]:
        s = self.seeds()
        frac = self.show_train_fraction if target == "show" else self.booked_train_fraction
        part = PartitionSpec(frac, s[f"{target}_partition"], target if self.stratify else None)
        bal = None
        if self.balance_mode is not None:
            bal = BalanceSpec(self.balance_mode, self.balance_ratio, s[f"{target}_balance"])
        return part, bal


def pick_champion(board: Leaderboard, prefer_interpretable: bool = False, margin: float = 0.02) -> CandidateResult:
    """Best AUC; optionally the best tree within ``margin`` of it."""
    top = board.top
    if prefer_interpretable:
        for r in board.ranked:
            if r.learner in TREE_KINDS and r.report.auc >= top.report.auc - margin:
                return r
    return top


def stage_features(schema: Schema) -> tuple[str, ...]:
    """Predictor columns for either stage; target flags can never be among them."""
    names = tuple(c.name for c in schema.predictors)
    forbidden = {schema.status_column.name, "show_flag", "booked_flag", "SHOW FLAG", "BOOKED FLAG"}
    leaked = forbidden.intersection(names)
    if leaked:
        raise ShowbookError(f"target columns may not be used as predictors: {sorted(leaked)}")
    return names


@dataclass
class CascadeModel:
    show: CandidateResult
    booked: CandidateResult
    show_board: Leaderboard
    booked_board: Leaderboard
    config: CascadeConfig
    fills: dict
    schema: Schema
    summary: dict = field(default_factory=dict)

    @property
    def show_model(self) -> TrainedModel:
        return self.show.model

    @property
    def booked_model(self) -> TrainedModel:
        return self.booked.model

    def save(self, directory) -> Path:
        return save_bundle(self, directory)


def train_cascade(ds: ColumnarDataset, cfg: CascadeConfig | None = None) -> CascadeModel:
    cfg = cfg or CascadeConfig()
    if not ds.is_labeled:
        raise ShowbookError("training data must carry the raw booking status")
    features = stage_features(ds.schema)
    shown_idx = np.flatnonzero(ds.show_flag == 1)
    if shown_idx.size == 0:
        raise EmptyShownSubset("no customer showed up; the booking stage has nothing to learn from")
    if shown_idx.size == ds.n_rows:
        raise SingleClass("every customer showed up; the show stage has nothing to separate")
    fills = compute_fills(ds, cfg.imputation)
    ds = apply_fills(ds, fills)
    seeds = cfg.seeds()
    tcfg = replace(cfg.train, seed=seeds["learners"])

    show_part, show_bal = cfg.stage("show")
    show_board = auto_classify(
        ds, "show", expand_candidates(cfg.show_candidates, cfg.grid), show_part, show_bal, tcfg,
        features=features, threshold=cfg.threshold, n_jobs=cfg.n_jobs,
    )

    shown = ds.take(shown_idx)
    # leakage guard: stage two only ever sees customers who showed up
    assert np.all(shown.show_flag == 1)
    if len(np.unique(shown.booked_flag)) < 2:
        raise SingleClass("the shown subset needs both booked and not-booked customers")
    booked_part, booked_bal = cfg.stage("booked")
    booked_board = auto_classify(
        shown, "booked", expand_candidates(cfg.booked_candidates, cfg.grid), booked_part, booked_bal, tcfg,
        features=features, threshold=cfg.threshold, n_jobs=cfg.n_jobs,
    )
    show = pick_champion(show_board, cfg.prefer_interpretable, cfg.interpretable_margin)
    booked = pick_champion(booked_board, cfg.prefer_interpretable, cfg.interpretable_margin)
    summary = {
        "rows": ds.n_rows,
        "shown_rows": shown.n_rows,
        "show_rate": float(np.mean(ds.show_flag)),
        "booked_rate": float(np.mean(ds.booked_flag)),
    }
    return CascadeModel(show, booked, show_board, booked_board, cfg, fills, ds.schema, summary)


@dataclass(frozen=True)
class ScoredCustomer:
    row_id: str
    p_show: float
    p_book_given_show: float
    p_book: float
    pred_show: bool
    pred_book: bool
    unseen: bool = False


def _calibrated(result: CandidateResult, ds: ColumnarDataset) -> np.ndarray:
    with np.errstate(over="ignore"):
        return sigmoid(decision_scores(result.model, ds) + result.prior_shift)


def build_shortlist(row_ids, p_show, p_book_given_show, threshold: float = 0.5, unseen=None) -> list[ScoredCustomer]:
    """Combine the two stage probabilities and sort by ``p_book`` (descending, stable).

    ``pred_show`` is ``p_show >= threshold``; ``pred_book`` requires both
    ``pred_show`` and ``p_book_given_show >= threshold``.
    """
    if not 0 <= threshold <= 1:
        raise ValueError("threshold must be in [0, 1]")
    p_show = np.asarray(p_show, dtype=float)
    p_bgs = np.asarray(p_book_given_show, dtype=float)
    if p_show.shape != p_bgs.shape or len(row_ids) != len(p_show):
        raise LengthMismatch("row ids and probability vectors differ in length")
    if unseen is None:
        unseen = np.zeros(len(p_show), dtype=bool)
    p_book = p_show * p_bgs
    out = []
    for i in np.argsort(-p_book, kind="stable"):
        ps, pb = float(p_show[i]), float(p_bgs[i])
        pred_show = ps >= threshold
        out.append(
            ScoredCustomer(
                row_id=str(row_ids[i]),
                p_show=ps,
                p_book_given_show=pb,
                p_book=float(p_book[i]),
                pred_show=pred_show,
                pred_book=pred_show and pb >= threshold,
                unseen=bool(unseen[i]),
            )
        )
    return out


def score_shortlist(cascade: CascadeModel, ds: ColumnarDataset, threshold: float = 0.5) -> list[ScoredCustomer]:
    """Score every customer with both champions; see :func:`build_shortlist`.

    Missing values are filled with the training fills, and customers with
    categories unseen in training are flagged and counted in one warning.
    """
    for model in (cascade.show_model, cascade.booked_model):
        model.space.align(ds)  # raises SchemaMismatch before any other work
    ds = apply_fills(ds, cascade.fills)
    _, unseen_show = cascade.show_model.space.align(ds)
    _, unseen_book = cascade.booked_model.space.align(ds)
    unseen = unseen_show | unseen_book
    if unseen.any():
        warnings.warn(
            f"{int(unseen.sum())} customer(s) carry categories unseen in training", UnseenCategoryWarning, stacklevel=2
        )
    return build_shortlist(
        ds.row_ids, _calibrated(cascade.show, ds), _calibrated(cascade.booked, ds), threshold, unseen
    )


SCORED_HEADER = ("row_id", "p_show", "p_book_given_show", "p_book", "pred_show", "pred_book")


def scored_to_csv(scored: list[ScoredCustomer]) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(SCORED_HEADER)
    for s in scored:
        w.writerow([s.row_id, repr(s.p_show), repr(s.p_book_given_show), repr(s.p_book), int(s.pred_show), int(s.pred_book)])
    return out.getvalue()


def read_scored_csv(path) -> list[ScoredCustomer]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != SCORED_HEADER:
            raise ShowbookError(f"{path}: not a scored shortlist (header {reader.fieldnames})")
        return [
            ScoredCustomer(
                r["row_id"],
                float(r["p_show"]),
                float(r["p_book_given_show"]),
                float(r["p_book"]),
                r["pred_show"] == "1",
                r["pred_book"] == "1",
            )
            for r in reader
        ]


@dataclass(frozen=True)
class DemandForecast:
    customers: int
    expected_shows: float
    expected_bookings: float
    predicted_shows: int
    predicted_bookings: int

    def to_dict(self) -> dict:
        return {
            "customers": self.customers,
            "expected_shows": self.expected_shows,
            "expected_bookings": self.expected_bookings,
            "predicted_shows": self.predicted_shows,
            "predicted_bookings": self.predicted_bookings,
        }


def forecast_demand(scored: list[ScoredCustomer]) -> DemandForecast:
    """Expected counts (sums of probabilities) and hard counts at the threshold."""
    if not scored:
        raise ValueError("cannot forecast demand from an empty shortlist")
    return DemandForecast(
        customers=len(scored),
        expected_shows=math.fsum(s.p_show for s in scored),
        expected_bookings=math.fsum(s.p_book for s in scored),
        predicted_shows=sum(s.pred_show for s in scored),
        predicted_bookings=sum(s.pred_book for s in scored),
    )


def shuffled_label_control(
    ds: ColumnarDataset, target: str, learners=("cart", "lr"), seed: int = 0, cfg: TrainConfig | None = None
) -> Leaderboard:
    """Leaderboard after permuting the target labels; AUCs should sit near 0.5.

    Blanks are filled with the default imputation policy first so every learner can run.
    """
    ds = apply_fills(ds, compute_fills(ds, ImputationPolicy()))
    rng = np.random.Generator(np.random.PCG64(seed))
    y = rng.permutation(ds.target(target))
    if target == "show":
        shuffled = ds.replace(show_flag=y, booked_flag=np.zeros_like(y))
    else:
        shuffled = ds.replace(booked_flag=y, show_flag=np.ones_like(y))
    return auto_classify(shuffled, target, learners, PartitionSpec(0.8, seed + 1, target), BalanceSpec(seed=seed + 2), cfg)


# -- bundle directory -------------------------------------------------------

BUNDLE_FORMAT = "showbook-cascade"
BUNDLE_FILES = {
    "cascade": "cascade.json",
    "show_model": "show_model.json",
    "booked_model": "booked_model.json",
    "show_board": "leaderboard_show.json",
    "booked_board": "leaderboard_booked.json",
    "schema": "schema.cfg",
}


def save_bundle(cascade: CascadeModel, directory) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    meta = {
        "format": BUNDLE_FORMAT,
        "format_version": 1,
        "tool_version": __version__,
        "schema_fingerprint": cascade.schema.fingerprint(),
        "config": cascade.config.to_dict(),
        "fills": cascade.fills,
        "summary": cascade.summary,
        "show": {"id": cascade.show.id, "prior_shift": cascade.show.prior_shift},
        "booked": {"id": cascade.booked.id, "prior_shift": cascade.booked.prior_shift},
    }
    atomic_write(d / BUNDLE_FILES["schema"], cascade.schema.to_text())
    atomic_write(d / BUNDLE_FILES["show_model"], dumps(model_to_dict(cascade.show.model)))
    atomic_write(d / BUNDLE_FILES["booked_model"], dumps(model_to_dict(cascade.booked.model)))
    atomic_write(d / BUNDLE_FILES["show_board"], dumps(cascade.show_board.to_dict()))
    atomic_write(d / BUNDLE_FILES["booked_board"], dumps(cascade.booked_board.to_dict()))
    atomic_write(d / BUNDLE_FILES["cascade"], dumps(meta))
    return d


@dataclass
class Bundle:
    """A cascade as read back from disk: champions plus leaderboard documents."""

    meta: dict
    schema: Schema
    show: CandidateResult
    booked: CandidateResult
    show_board: dict
    booked_board: dict

    @property
    def fills(self) -> dict:
        return self.meta["fills"]

    @property
    def show_model(self):
        return self.show.model

    @property
    def booked_model(self):
        return self.booked.model

    @property
    def config(self) -> CascadeConfig:
        return CascadeConfig.from_dict(self.meta["config"])


def load_bundle(directory) -> Bundle:
    d = Path(directory)
    if not d.is_dir():
        raise CorruptBundle(f"{d}: not a directory")
    try:
        meta = read_json(d / BUNDLE_FILES["cascade"])
        if meta.get("format") != BUNDLE_FORMAT:
            raise CorruptBundle(f"{d}: not a cascade bundle")
        schema = Schema.from_file(d / BUNDLE_FILES["schema"])
        show_model = load_model(d / BUNDLE_FILES["show_model"])
        booked_model = load_model(d / BUNDLE_FILES["booked_model"])
        show_board = read_json(d / BUNDLE_FILES["show_board"])
        booked_board = read_json(d / BUNDLE_FILES["booked_board"])
    except FileNotFoundError as exc:
        raise CorruptBundle(f"{d}: missing {Path(exc.filename).name}") from None
    except (ValueError, KeyError) as exc:
        raise CorruptBundle(f"{d}: {exc}") from None
    except ShowbookError as exc:
        if isinstance(exc, CorruptBundle):
            raise
        raise CorruptBundle(f"{d}: {exc}") from None
    if schema.fingerprint() != meta.get("schema_fingerprint"):
        raise CorruptBundle(f"{d}: schema fingerprint does not match cascade.json")
    train_cfg = TrainConfig.from_dict(meta["config"]["train"])

    def result(key, model):
        return CandidateResult(
            Candidate(model_kind(model)), train_cfg, model=model, prior_shift=meta[key]["prior_shift"]
        )

    return Bundle(meta, schema, result("show", show_model), result("booked", booked_model), show_board, booked_board)


def render_report(bundle: Bundle) -> tuple[str, dict]:
    """Both leaderboards in the four-metric comparison layout, plus the JSON twin."""
    text = [leaderboard_table(bundle.show_board), "", leaderboard_table(bundle.booked_board), ""]
    text.append(f"Stage 1 champion (show):   {bundle.meta['show']['id']}")
    text.append(f"Stage 2 champion (booked): {bundle.meta['booked']['id']}")
    doc = {
        "show": bundle.show_board,
        "booked": bundle.booked_board,
        "champions": {"show": bundle.meta["show"]["id"], "booked": bundle.meta["booked"]["id"]},
    }
    return "\n".join(text) + "\n", doc
