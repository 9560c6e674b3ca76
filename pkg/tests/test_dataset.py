import csv
import io
from fractions import Fraction

import numpy as np
import pytest

from conftest import toy_dataset
from showbook.dataset import (
    ImputationPolicy,
    Kind,
    RawBookingStatus,
    Role,
    Schema,
    build_dataset,
    derive_flags,
    has_missing,
    impute,
    load_csv,
    summarize,
)
from showbook.errors import (
    AllMissingColumn,
    ConfigError,
    DataTypeError,
    EmptyFile,
    InvalidStatus,
    MissingGroupColumn,
    SchemaMismatch,
)
from showbook.synthgen import GeneratorConfig, generate, reference_schema

SCHEMA_TEXT = """\
# id first, status last
id = categorical, identifier
age = numeric, predictor
segment = categorical, predictor, age-group
status = categorical, raw-booking-status
"""


@pytest.fixture
def schema():
    return Schema.from_text(SCHEMA_TEXT)


def write(tmp_path, text, name="data.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


@pytest.mark.parametrize(
    "status, flags",
    [
        (RawBookingStatus.BookedCompleted, (1, 1)),
        (RawBookingStatus.ShowedNoBook, (1, 0)),
        (RawBookingStatus.NoShow, (0, 0)),
        (RawBookingStatus.BookedCanceled, None),
    ],
)
def test_derive_flags(status, flags):
    assert derive_flags(status) == flags


def test_schema_parsing(schema):
    assert schema.names == ("id", "age", "segment", "status")
    assert schema.column("age").kind is Kind.NUMERIC
    assert schema.status_column.name == "status"
    assert schema.identifier.name == "id"
    assert schema.tagged("age-group").name == "segment"
    assert Schema.from_text(schema.to_text()) == schema


@pytest.mark.parametrize(
    "text",
    [
        "a = numeric, predictor\n",  # no status column
        "s = categorical, raw-booking-status\n",  # no predictor
        "a = numeric, predictor\na = numeric, predictor\ns = categorical, raw-booking-status\n",
        "a = float, predictor\ns = categorical, raw-booking-status\n",
        "a = numeric, predictor, weird-tag\ns = categorical, raw-booking-status\n",
        "a = numeric\ns = categorical, raw-booking-status\n",
    ],
)
def test_schema_rejects_bad_config(text):
    with pytest.raises(ConfigError):
        Schema.from_text(text)


def test_config_error_reports_line():
    with pytest.raises(ConfigError, match=":2:"):
        Schema.from_text("a = numeric, predictor\nb = float, predictor\n", path="s.cfg")


def test_load_four_statuses_drops_canceled(tmp_path, schema):
    p = write(
        tmp_path,
        "id,age,segment,status\n"
        "a,30,x,BookedCompleted\n"
        "b,40,y,ShowedNoBook\n"
        "c,50,x,NoShow\n"
        "d,60,y,BookedCanceled\n",
    )
    ds = load_csv(p, schema)
    assert ds.n_rows == 3
    assert list(ds.row_ids) == ["a", "b", "c"]
    assert ds.show_flag.tolist() == [1, 1, 0]
    assert ds.booked_flag.tolist() == [1, 0, 0]
    assert ds.provenance["discarded_canceled"] == 1
    assert ds.provenance["raw_rows"] == 4


def test_quoted_fields_and_header_order(tmp_path, schema):
    p = write(tmp_path, 'status,segment,age,id\nNoShow,"x, y",1.5,"q"\n')
    ds = load_csv(p, schema)
    assert ds.columns["segment"].labels() == ["x, y"]
    assert ds.columns["age"].values.tolist() == [1.5]


def test_unknown_header_column(tmp_path, schema):
    p = write(tmp_path, "id,age,segment,status,extra\na,1,x,NoShow,z\n")
    with pytest.raises(SchemaMismatch) as err:
        load_csv(p, schema)
    assert err.value.unexpected == ("extra",)


def test_missing_header_column_is_named(tmp_path, schema):
    p = write(tmp_path, "id,segment,status\na,x,NoShow\n")
    with pytest.raises(SchemaMismatch, match="age") as err:
        load_csv(p, schema)
    assert err.value.missing == ("age",)


def test_non_numeric_token_reports_row(tmp_path, schema):
    p = write(tmp_path, "id,age,segment,status\na,1,x,NoShow\nb,abc,x,NoShow\n")
    with pytest.raises(TypeError) as err:
        load_csv(p, schema)
    assert isinstance(err.value, DataTypeError)
    assert err.value.row == 2 and err.value.column == "age" and err.value.token == "abc"


def test_non_finite_numeric_rejected(tmp_path, schema):
    p = write(tmp_path, "id,age,segment,status\na,inf,x,NoShow\n")
    with pytest.raises(DataTypeError):
        load_csv(p, schema)


def test_bad_status(tmp_path, schema):
    p = write(tmp_path, "id,age,segment,status\na,1,x,Maybe\n")
    with pytest.raises(InvalidStatus):
        load_csv(p, schema)


def test_empty_file(tmp_path, schema):
    with pytest.raises(EmptyFile):
        load_csv(write(tmp_path, ""), schema)


def test_header_only_file_is_empty(tmp_path, schema):
    with pytest.raises(EmptyFile):
        load_csv(write(tmp_path, "id,age,segment,status\n"), schema)


def test_unlabeled_load_rejects_status_column(tmp_path, schema):
    p = write(tmp_path, "id,age,segment\na,1,x\n")
    ds = load_csv(p, schema, labeled=False)
    assert not ds.is_labeled and ds.n_rows == 1
    with pytest.raises(SchemaMismatch):
        load_csv(write(tmp_path, "id,age,segment,status\na,1,x,NoShow\n", "l.csv"), schema, labeled=False)


def test_outliers_are_kept(tmp_path, schema):
    p = write(tmp_path, "id,age,segment,status\na,1e12,x,NoShow\nb,-1e12,x,NoShow\nc,3,x,NoShow\n")
    assert load_csv(p, schema).n_rows == 3


def test_synthetic_file_row_count_matches_independent_recount(tmp_path):
    path = tmp_path / "corpus.csv"
    corpus = generate(GeneratorConfig(seed=11).with_total(100_000), path=path)
    with path.open(newline="") as fh:
        statuses = [row["status"] for row in csv.DictReader(fh)]
    canceled = statuses.count("BookedCanceled")
    ds = load_csv(path, reference_schema())
    assert len(statuses) == 100_000
    assert ds.n_rows == 100_000 - canceled
    assert ds.provenance["raw_rows"] == ds.n_rows + ds.provenance["discarded_canceled"]
    assert np.all(ds.booked_flag <= ds.show_flag)
    assert ds.equals(corpus.dataset)


def test_dataset_is_immutable(tmp_path, schema):
    ds = load_csv(write(tmp_path, "id,age,segment,status\na,1,x,NoShow\n"), schema)
    with pytest.raises(ValueError):
        ds.show_flag[0] = 1
    with pytest.raises(TypeError):
        ds.columns["age"] = None


def test_impossible_flag_pair_rejected(schema):
    ds = toy_dataset({"x": [1, 2]}, {"x": "numeric"}, show=[1, 1], booked=[0, 1])
    with pytest.raises(ValueError):
        ds.replace(show_flag=np.array([0, 0]))


def test_impute_mean_numeric():
    ds = toy_dataset({"x": [1, None, 3]}, {"x": "numeric"})
    out = impute(ds, ImputationPolicy(numeric="mean"))
    assert out.columns["x"].values.tolist() == [1.0, 2.0, 3.0]
    assert out.provenance["imputation"]["policy"] == {"categorical": "mode", "numeric": "mean"}


def test_impute_median_numeric():
    ds = toy_dataset({"x": [1, None, 3, 10]}, {"x": "numeric"})
    assert impute(ds).columns["x"].values.tolist() == [1.0, 3.0, 3.0, 10.0]


def test_impute_mode_categorical():
    ds = toy_dataset({"c": ["A", "A", None, "B"]}, {"c": "categorical"})
    assert impute(ds).columns["c"].labels() == ["A", "A", "A", "B"]


def test_mode_tie_goes_to_first_seen():
    ds = toy_dataset({"c": ["B", "A", "A", "B", None]}, {"c": "categorical"})
    assert impute(ds).columns["c"].labels()[-1] == "B"


def test_impute_without_missing_is_identity():
    ds = toy_dataset({"x": [1, 2], "c": ["a", "b"]}, {"x": "numeric", "c": "categorical"})
    assert impute(ds).equals(ds)


def test_impute_idempotent():
    ds = toy_dataset({"x": [1, None, 7], "c": [None, "b", "b"]}, {"x": "numeric", "c": "categorical"})
    once = impute(ds)
    assert impute(once).equals(once)
    assert has_missing(once) == []


def test_leave_missing_keeps_blanks():
    ds = toy_dataset({"x": [1, None], "c": [None, "b"]}, {"x": "numeric", "c": "categorical"})
    out = impute(ds, ImputationPolicy("leave-missing", "leave-missing"))
    assert has_missing(out) == ["x", "c"]


def test_all_missing_column():
    ds = toy_dataset({"x": [None, None], "y": [1, 2]}, {"x": "numeric", "y": "numeric"})
    with pytest.raises(AllMissingColumn):
        impute(ds)


def test_summarize_synthetic_corpus(small_corpus):
    s = summarize(small_corpus.dataset)
    assert sum(r.n for r in s.periods) == s.total.n
    assert isinstance(s.total.show_pct, Fraction)
    assert abs(float(s.total.show_pct) - 87.2) < 1.5
    assert abs(float(s.total.booked_pct) - 20.2) < 1.5
    shares = dict(s.age_pct())
    assert abs(float(shares["young"]) - 50) < 1.5
    assert abs(float(shares["middle-aged"]) - 34) < 1.5
    assert abs(float(shares["elderly"]) - 16) < 1.5
    d = s.to_dict()
    assert d["total"]["show_pct"] == float(s.total.show_pct)
    assert "Total" in s.to_text()


def test_summarize_all_show():
    ds = toy_dataset({"x": [1, 2, 3]}, {"x": "numeric"}, show=[1, 1, 1])
    assert summarize(ds).total.show_pct == 100


def test_summarize_missing_group_column():
    ds = toy_dataset({"x": [1, 2]}, {"x": "numeric"})
    with pytest.raises(MissingGroupColumn):
        summarize(ds, groups=["period"])
