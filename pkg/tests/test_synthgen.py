import numpy as np
import pytest

from showbook.errors import CalibrationFailure, ConfigError
from showbook.synthgen import (
    REFERENCE_PERIODS,
    REFERENCE_TOTAL,
    BehaviorProfile,
    GeneratorConfig,
    calibrate_intercepts,
    expected_rates,
    find_shift,
    generate,
    reference_profile,
    split_counts,
)


def _logit(p):
    return np.log(p) - np.log1p(-p)


@pytest.fixture(scope="module")
def full_corpus():
    return generate(GeneratorConfig(seed=1))


def test_table1_counts_sum_to_total():
    assert sum(n for _, n, _, _ in REFERENCE_PERIODS) == REFERENCE_TOTAL[0]
    assert GeneratorConfig().n_total == 162_710


def test_reference_profile_encodes_insights():
    prof = reference_profile()
    for age in prof.age_groups:
        assert prof.cell(age, "first-time", "medium")[1] > 0.8
        show, book = prof.cell("elderly", "second-time", "medium")
    for income in prof.income_bands:
        show, book = prof.cell("elderly", "second-time", income)
        assert show > 0.95 and book < 0.1


def test_profile_text_round_trip():
    prof = reference_profile()
    again = BehaviorProfile.from_text(prof.to_text())
    assert np.array_equal(again.p_show, prof.p_show)
    assert np.array_equal(again.p_book_given_show, prof.p_book_given_show)


def test_profile_must_cover_every_cell():
    text = "\n".join(reference_profile().to_text().splitlines()[:-1])
    with pytest.raises(ConfigError, match="cover"):
        BehaviorProfile.from_text(text)


def test_profile_rejects_out_of_range():
    text = reference_profile().to_text().replace("cell.young.first-time.low = 0.3", "cell.young.first-time.low = 1.3")
    with pytest.raises(ConfigError):
        BehaviorProfile.from_text(text)


@pytest.mark.parametrize("kw", [{"age_mix": (0.5, 0.5, 0.1)}, {"n_per_period": (("a", 0),)}, {"cancel_rate": 2.0}])
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        GeneratorConfig(**kw)


def test_split_counts_largest_remainder():
    assert split_counts(10, [1, 1, 1]) == [4, 3, 3]
    assert sum(split_counts(20000, [n for _, n, _, _ in REFERENCE_PERIODS])) == 20000


def test_calibration_hits_targets_exactly():
    cfg = GeneratorConfig()
    prof = reference_profile()
    w = cfg.weights(prof.shape)
    cal = calibrate_intercepts(prof, w, 0.872, 0.202)
    # independent expectation: explicit sum over the 18 cells
    show = book = 0.0
    for _, (a, b, i) in cal.cells():
        wt = cfg.age_mix[a] * cfg.buyer_mix[b] * cfg.income_mix[i]
        show += wt * cal.p_show[a, b, i]
        book += wt * cal.p_show[a, b, i] * cal.p_book_given_show[a, b, i]
    assert abs(show - 0.872) < 1e-6
    assert abs(book - 0.202) < 1e-6
    assert expected_rates(cal, w) == pytest.approx((show, book), abs=1e-12)


def test_calibration_preserves_cell_order():
    prof = reference_profile()
    cal = calibrate_intercepts(prof, GeneratorConfig().weights(prof.shape), 0.872, 0.202)
    for name in ("p_show", "p_book_given_show"):
        before = getattr(prof, name).ravel()
        after = getattr(cal, name).ravel()
        assert np.array_equal(np.argsort(before, kind="stable"), np.argsort(after, kind="stable"))
        # a single logit shift: logit(after) - logit(before) is constant
        d = _logit(after) - _logit(before)
        assert np.ptp(d) < 1e-9


def test_calibration_fixed_point():
    prof = reference_profile()
    w = GeneratorConfig().weights(prof.shape)
    show, book = expected_rates(prof, w)
    cal = calibrate_intercepts(prof, w, show, book)
    assert abs(cal.show_shift) < 1e-8 and abs(cal.book_shift) < 1e-8


def test_uniform_profile_shifts_every_cell():
    prof = BehaviorProfile.uniform(0.5, 0.5)
    cal = calibrate_intercepts(prof, GeneratorConfig().weights(prof.shape), 0.872, None)
    assert np.allclose(cal.p_show, 0.872, atol=1e-9)
    assert np.array_equal(cal.p_book_given_show, prof.p_book_given_show)


def test_unreachable_target():
    w = np.ones((1, 1, 1))
    with pytest.raises(CalibrationFailure):
        find_shift(w, np.array([[[np.inf]]]), 0.5)
    prof = BehaviorProfile.uniform(1.0, 0.5)
    with pytest.raises(CalibrationFailure):
        calibrate_intercepts(prof, GeneratorConfig().weights(prof.shape), 0.872, 0.2)


def test_degenerate_profile_gives_all_booked():
    cfg = GeneratorConfig(seed=3, target_show_rate=None, target_book_rate=None, cancel_rate=0.0).with_total(500)
    ds = generate(cfg, BehaviorProfile.uniform(1.0, 1.0)).dataset
    assert ds.show_flag.all() and ds.booked_flag.all()


def test_generate_is_deterministic():
    cfg = GeneratorConfig(seed=1).with_total(3000)
    assert generate(cfg).csv_text == generate(cfg).csv_text
    assert generate(cfg).csv_text != generate(GeneratorConfig(seed=2).with_total(3000)).csv_text


def test_generate_writes_csv(tmp_path):
    cfg = GeneratorConfig(seed=4).with_total(1000)
    c = generate(cfg, path=tmp_path / "x.csv")
    assert (tmp_path / "x.csv").read_text() == c.csv_text
    assert c.csv_text.splitlines()[0] == ",".join(c.schema.names)


def test_full_corpus_marginals(full_corpus):
    ds = full_corpus.dataset
    assert ds.provenance["raw_rows"] == 162_710
    assert abs(ds.show_flag.mean() - 0.872) <= 0.005
    assert abs(ds.booked_flag.mean() - 0.202) <= 0.005
    assert np.all(ds.booked_flag <= ds.show_flag)


def test_full_corpus_planted_signal(full_corpus):
    ds = full_corpus.dataset
    buyer = np.array(ds.columns["buyer_type"].labels())
    income = np.array(ds.columns["income_band"].labels())
    shown = (buyer == "first-time") & (income == "medium") & (ds.show_flag == 1)
    assert ds.booked_flag[shown].mean() > 0.8


def test_noise_independent_of_outcome(full_corpus):
    ds = full_corpus.dataset
    x = ds.columns["noise_1"].values
    ok = ~np.isnan(x)
    assert abs(np.corrcoef(x[ok], ds.show_flag[ok])[0, 1]) <= 0.02
    cat = ds.columns["noise_2"]
    rates = [ds.show_flag[cat.codes == k].mean() for k in range(len(cat.levels))]
    assert np.ptp(rates) < 0.02
    assert 0.005 < np.isnan(x).mean() < 0.015


def test_age_mix_matches(full_corpus):
    labels = np.array(full_corpus.dataset.columns["age_group"].labels())
    for level, share in zip(("young", "middle-aged", "elderly"), (0.50, 0.34, 0.16)):
        assert abs((labels == level).mean() - share) < 0.005


def test_period_drift_follows_table():
    cfg = GeneratorConfig(seed=9, period_drift=True)
    c = generate(cfg)
    ds = c.dataset
    periods = np.array(ds.columns["period"].labels())
    for (label, _, show, book), prof in zip(REFERENCE_PERIODS, c.period_profiles):
        m = periods == label
        assert abs(ds.show_flag[m].mean() - show) < 0.012
        assert abs(ds.booked_flag[m].mean() - book) < 0.012
