"""Command-line entry point: generate -> train -> evaluate -> score -> plan -> report.

Exit status is 0 on success, 1 for data or model errors and 2 for usage
errors.  Every command that writes artifacts writes them atomically into the
directory named by ``--out`` together with a ``manifest.json`` that records
the full flag set, so a run can be repeated from its manifest alone.
"""

from __future__ import annotations

import argparse
import hashlib
import logging
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from ._io import atomic_write, dumps
from .cascade import (
    ALL_CANDIDATES,
    BOOKED_CANDIDATES,
    SHOW_CANDIDATES,
    CascadeConfig,
    forecast_demand,
    load_bundle,
    read_scored_csv,
    render_report,
    score_shortlist,
    scored_to_csv,
    train_cascade,
)
from .dataset import ImputationPolicy, Schema, apply_fills, load_csv
from .errors import ConfigError, InvalidParams, ShowbookError
from .evaluate import comparison_table, evaluate
from .learners import LEARNER_NAMES, predict_proba
from .planner import CapacityParams, DemandParams, plan, plan_text, what_if
from .synthgen import BehaviorProfile, GeneratorConfig, generate, reference_schema

logger = logging.getLogger("showbook")


class UsageError(Exception):
    """Bad flag combination discovered after parsing; exit status 2."""


@dataclass
class RunManifest:
    subcommand: str
    flags: dict
    seeds: dict
    inputs: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    schema_fingerprint: str | None = None
    tool_version: str = __version__

    def to_dict(self) -> dict:
        return {
            "tool": "showbook",
            "tool_version": self.tool_version,
            "subcommand": self.subcommand,
            "flags": self.flags,
            "seeds": self.seeds,
            "inputs": self.inputs,
            "outputs": sorted(self.outputs),
            "schema_fingerprint": self.schema_fingerprint,
        }


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _flags(args) -> dict:
    return {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(args).items()) if k != "func"}


class Artifacts:
    """Writes files into one output directory and finishes with the manifest."""

    def __init__(self, out, manifest: RunManifest):
        self.dir = Path(out)
        self.manifest = manifest

    def write(self, name: str, data) -> Path:
        self.dir.mkdir(parents=True, exist_ok=True)
        path = self.dir / name
        atomic_write(path, data)
        self.manifest.outputs.append(name)
        return path

    def close(self) -> None:
        self.manifest.outputs.append("manifest.json")
        atomic_write(self.dir / "manifest.json", dumps(self.manifest.to_dict()))


def _require_out(args) -> Path:
    if args.out is None:
        raise UsageError(f"{args.command} needs --out DIR for its artifacts")
    return Path(args.out)


def _schema(args, default: Schema | None = None) -> Schema:
    if args.schema is not None:
        return Schema.from_file(args.schema)
    if default is None:
        raise UsageError(f"{args.command} needs --schema FILE")
    return default


def _input_record(path) -> dict:
    return {"path": str(path), "sha256": _sha256(path)}


def _load_any(path, schema: Schema):
    """Load a CSV labeled when it carries the status column, unlabeled otherwise."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
    labeled = schema.status_column.name in [h.strip() for h in header.rstrip("\r\n").split(",")]
    return load_csv(path, schema, labeled=labeled)


# -- generate ---------------------------------------------------------------


def cmd_generate(args) -> int:
    out = _require_out(args)
    try:
        cfg = GeneratorConfig(
            seed=args.seed,
            target_show_rate=None if args.no_calibrate else args.show_rate,
            target_book_rate=None if args.no_calibrate else args.book_rate,
            noise_feature_count=args.noise_features,
            cancel_rate=args.cancel_rate,
            noise_missing_rate=args.noise_missing_rate,
        )
        if args.rows is not None:
            cfg = cfg.with_total(args.rows)
    except (ValueError, ConfigError) as exc:
        raise UsageError(str(exc)) from None
    profile = BehaviorProfile.from_file(args.profile) if args.profile else None
    manifest = RunManifest("generate", _flags(args), {"generator": args.seed})
    if args.profile:
        manifest.inputs["profile"] = _input_record(args.profile)
    arts = Artifacts(out, manifest)
    corpus = generate(cfg, profile)
    manifest.schema_fingerprint = corpus.schema.fingerprint()
    arts.write("corpus.csv", corpus.csv_text)
    arts.write("schema.cfg", corpus.schema.to_text())
    arts.write("profile.cfg", corpus.profile.to_text())
    ds = corpus.dataset
    summary = {
        "rows_written": ds.provenance["raw_rows"],
        "canceled_rows": ds.provenance["discarded_canceled"],
        "rows_retained": ds.n_rows,
        "show_rate": float(np.mean(ds.show_flag)),
        "booked_rate": float(np.mean(ds.booked_flag)),
        "show_shift": corpus.profile.show_shift,
        "book_shift": corpus.profile.book_shift,
    }
    arts.write("summary.json", dumps(summary))
    arts.close()
    print(
        f"wrote {summary['rows_written']} rows to {out / 'corpus.csv'} "
        f"(show {100 * summary['show_rate']:.1f}%, booked {100 * summary['booked_rate']:.1f}%)"
    )
    return 0


# -- train ------------------------------------------------------------------


def _candidates(text: str | None, default, use_all: bool) -> tuple[str, ...]:
    if use_all:
        return ALL_CANDIDATES
    if text is None:
        return default
    names = tuple(n.strip() for n in text.split(",") if n.strip())
    bad = [n for n in names if n not in LEARNER_NAMES]
    if bad:
        raise UsageError(f"unknown learner(s) {', '.join(bad)}; choose from {', '.join(sorted(LEARNER_NAMES))}")
    if len(names) < 2:
        raise UsageError("give at least two candidates per stage")
    return names


def _cascade_config(args) -> CascadeConfig:
    try:
        return CascadeConfig(
            seed=args.seed,
            show_candidates=_candidates(args.show_candidates, SHOW_CANDIDATES, args.all_candidates),
            booked_candidates=_candidates(args.booked_candidates, BOOKED_CANDIDATES, args.all_candidates),
            show_train_fraction=args.show_train_fraction,
            booked_train_fraction=args.booked_train_fraction,
            balance_mode=None if args.balance == "none" else args.balance,
            imputation=ImputationPolicy(args.impute_categorical, args.impute_numeric),
            grid=args.grid,
            prefer_interpretable=args.prefer_interpretable,
            threshold=args.threshold,
            n_jobs=args.jobs,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_train(args) -> int:
    out = _require_out(args)
    schema = _schema(args, reference_schema())
    cfg = _cascade_config(args)
    # validate the partition and balance specs before touching the data
    try:
        cfg.stage("show"), cfg.stage("booked")
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    ds = load_csv(args.input, schema)
    manifest = RunManifest("train", _flags(args), cfg.seeds(), {"data": _input_record(args.input)})
    manifest.schema_fingerprint = schema.fingerprint()
    cascade = train_cascade(ds, cfg)
    out.mkdir(parents=True, exist_ok=True)
    cascade.save(out)
    manifest.outputs.extend(p.name for p in out.iterdir() if p.name != "manifest.json")
    Artifacts(out, manifest).close()
    print(cascade.show_board.to_text())
    print(cascade.booked_board.to_text())
    print(f"champions: show={cascade.show.id} booked={cascade.booked.id}; bundle written to {out}")
    return 0


# -- evaluate ---------------------------------------------------------------


def cmd_evaluate(args) -> int:
    bundle = load_bundle(args.bundle)
    schema = _schema(args, bundle.schema)
    ds = load_csv(args.input, schema)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        ds = apply_fills(ds, bundle.fills)
        p_show = predict_proba(bundle.show_model, ds)
        shown = ds.take(np.flatnonzero(ds.show_flag == 1))
        p_booked = predict_proba(bundle.booked_model, shown)
    show_rep = evaluate(p_show, ds.show_flag, args.threshold)
    booked_rep = evaluate(p_booked, shown.booked_flag, args.threshold)
    doc = {
        "threshold": args.threshold,
        "show": {"model": bundle.meta["show"]["id"], "report": show_rep.to_dict()},
        "booked": {"model": bundle.meta["booked"]["id"], "report": booked_rep.to_dict()},
    }
    text = (
        comparison_table("Evaluation of the champion for 'SHOW FLAG'",
                         [(LEARNER_NAMES[bundle.show.learner], doc["show"]["report"], None)])
        + "\n"
        + comparison_table("Evaluation of the champion for 'BOOKED FLAG' (shown customers)",
                           [(LEARNER_NAMES[bundle.booked.learner], doc["booked"]["report"], None)])
    )
    print(text)
    if args.out is not None:
        manifest = RunManifest(
            "evaluate", _flags(args), {}, {"data": _input_record(args.input)}, schema_fingerprint=schema.fingerprint()
        )
        arts = Artifacts(args.out, manifest)
        arts.write("evaluation.json", dumps(doc))
        arts.write("evaluation.txt", text)
        arts.write("roc_show.csv", show_rep.roc.to_csv())
        arts.write("roc_booked.csv", booked_rep.roc.to_csv())
        arts.close()
    return 0


# -- score ------------------------------------------------------------------


def cmd_score(args) -> int:
    out = _require_out(args)
    if not 0 <= args.threshold <= 1:
        raise UsageError("--threshold must be in [0, 1]")
    bundle = load_bundle(args.bundle)
    schema = _schema(args, bundle.schema)
    ds = _load_any(args.input, schema)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        scored = score_shortlist(bundle, ds, args.threshold)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    forecast = forecast_demand(scored)
    manifest = RunManifest(
        "score", _flags(args), {}, {"data": _input_record(args.input)}, schema_fingerprint=schema.fingerprint()
    )
    arts = Artifacts(out, manifest)
    arts.write("scored.csv", scored_to_csv(scored))
    arts.write("forecast.json", dumps(forecast.to_dict()))
    arts.close()
    print(
        f"scored {forecast.customers} customers: expected shows {forecast.expected_shows:.1f}, "
        f"expected bookings {forecast.expected_bookings:.1f}; wrote {out / 'scored.csv'}"
    )
    return 0


# -- plan -------------------------------------------------------------------


def _parse_range(text: str) -> tuple[int, int]:
    try:
        lo, hi = (int(x) for x in text.split(".."))
    except ValueError:
        raise UsageError(f"--what-if expects LO..HI with integers, got {text!r}") from None
    return lo, hi


def _customers(args) -> tuple[float, dict]:
    raw = args.customers
    try:
        return float(raw), {}
    except ValueError:
        pass
    path = Path(raw)
    if not path.is_file():
        raise UsageError(f"--customers must be a number or a scored CSV file, got {raw!r}")
    forecast = forecast_demand(read_scored_csv(path))
    key = {
        ("shows", False): "expected_shows",
        ("bookings", False): "expected_bookings",
        ("shows", True): "predicted_shows",
        ("bookings", True): "predicted_bookings",
    }[(args.demand, args.hard_count)]
    return float(getattr(forecast, key)), {"scored": _input_record(path), "demand": key}


def cmd_plan(args) -> int:
    try:
        cap = CapacityParams(args.staff, args.hours, args.utilization, args.days)
        lo_hi = _parse_range(args.what_if) if args.what_if else None
        customers, inputs = _customers(args)
        dem = DemandParams.from_minutes(customers, args.service_minutes)
    except InvalidParams as exc:
        raise UsageError(str(exc)) from None
    result = plan(cap, dem)
    doc = {"customers": customers, "service_minutes": args.service_minutes, "plan": result.to_dict()}
    text = plan_text(result)
    if lo_hi is not None:
        table = what_if(lo_hi[0], lo_hi[1], cap, dem)
        doc["what_if"] = table.to_dict()
        text += "\n" + table.to_text()
    print(text, end="")
    if args.out is not None:
        arts = Artifacts(args.out, RunManifest("plan", _flags(args), {}, inputs))
        arts.write("plan.json", dumps(doc))
        arts.write("plan.txt", text)
        arts.close()
    return 0


# -- report -----------------------------------------------------------------


def cmd_report(args) -> int:
    bundle = load_bundle(args.bundle)
    text, doc = render_report(bundle)
    print(text, end="")
    if args.out is not None:
        manifest = RunManifest("report", _flags(args), {}, schema_fingerprint=bundle.schema.fingerprint())
        manifest.inputs["bundle"] = {
            "path": str(args.bundle),
            "cascade_sha256": _sha256(Path(args.bundle) / "cascade.json"),
        }
        arts = Artifacts(args.out, manifest)
        arts.write("report.txt", text)
        arts.write("report.json", dumps(doc))
        arts.close()
    return 0


# -- parser -----------------------------------------------------------------


def _global_flags(parser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--seed", type=int, default=d(1), help="seed for every random step (default 1)")
    parser.add_argument("--out", default=d(None), help="output directory for artifacts")
    parser.add_argument("--schema", default=d(None), help="schema file (name = kind, role[, tag] per line)")
    parser.add_argument("-v", "--verbose", action="store_true", default=d(False), help="log progress to stderr")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="showbook", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"showbook {__version__}")
    _global_flags(p, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    g = sub.add_parser("generate", parents=[common], help="write a calibrated synthetic corpus")
    g.add_argument("--rows", type=int, help="total rows (default: the nine reference period counts)")
    g.add_argument("--profile", help="behaviour profile file (default: bundled reference profile)")
    g.add_argument("--show-rate", type=float, default=0.872, help="overall show-rate target")
    g.add_argument("--book-rate", type=float, default=0.202, help="overall booked-rate target (over all customers)")
    g.add_argument("--no-calibrate", action="store_true", help="use the profile probabilities as given")
    g.add_argument("--noise-features", type=int, default=2)
    g.add_argument("--noise-missing-rate", type=float, default=0.01)
    g.add_argument("--cancel-rate", type=float, default=0.005)
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", parents=[common], help="train the two-stage cascade into a bundle directory")
    t.add_argument("input", help="labeled customer CSV")
    t.add_argument("--show-candidates", help=f"comma list (default {','.join(SHOW_CANDIDATES)})")
    t.add_argument("--booked-candidates", help=f"comma list (default {','.join(BOOKED_CANDIDATES)})")
    t.add_argument("--all-candidates", action="store_true", help="use all four learners in both stages")
    t.add_argument("--grid", action="store_true", help="expand each learner into its small named grid")
    t.add_argument("--show-train-fraction", type=float, default=0.8)
    t.add_argument("--booked-train-fraction", type=float, default=0.5)
    t.add_argument("--balance", choices=("upsample-minority", "downsample-majority", "none"), default="upsample-minority")
    t.add_argument("--impute-categorical", choices=("mode", "leave-missing"), default="mode")
    t.add_argument("--impute-numeric", choices=("mean", "median", "leave-missing"), default="median")
    t.add_argument("--prefer-interpretable", action="store_true", help="pick the best tree within 0.02 AUC of the top")
    t.add_argument("--threshold", type=float, default=0.5)
    t.add_argument("--jobs", type=int, default=1, help="train candidates concurrently")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", parents=[common], help="evaluate bundle champions on a labeled CSV")
    e.add_argument("bundle")
    e.add_argument("input")
    e.add_argument("--threshold", type=float, default=0.5)
    e.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("score", parents=[common], help="score a shortlist, sorted by p_book")
    s.add_argument("bundle")
    s.add_argument("input")
    s.add_argument("--threshold", type=float, default=0.5)
    s.set_defaults(func=cmd_score)

    pl = sub.add_parser("plan", parents=[common], help="staff capacity versus forecast demand")
    pl.add_argument("--staff", type=int, required=True)
    pl.add_argument("--hours", type=float, required=True, help="working hours per day")
    pl.add_argument("--utilization", type=float, required=True, help="fraction in (0, 1]")
    pl.add_argument("--days", type=float, required=True, help="working days in the period")
    pl.add_argument("--customers", required=True, help="forecast head count, or a scored CSV")
    pl.add_argument("--service-minutes", type=float, required=True, help="service time per customer")
    pl.add_argument("--demand", choices=("shows", "bookings"), default="shows",
                    help="with a scored CSV: sum p_show (default) or p_book")
    pl.add_argument("--hard-count", action="store_true", help="with a scored CSV: count predicted flags instead")
    pl.add_argument("--what-if", metavar="LO..HI", help="staffing sweep")
    pl.set_defaults(func=cmd_plan)

    r = sub.add_parser("report", parents=[common], help="render both leaderboards of a bundle")
    r.add_argument("bundle")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"showbook {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except ShowbookError as exc:
        print(f"showbook {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"showbook {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
