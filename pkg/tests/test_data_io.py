import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from distforecast.backtest import BacktestReport
from distforecast.data_io import (ReturnSeries, SampleSplit, load_returns, read_report,
                                  write_report, write_returns)
from distforecast.errors import (EmptySeries, IoError, MissingFile, NonMonotoneDates,
                                 ParseError)
from distforecast.evaluation import EvalReport, ScoreReport, SelectionReport


def _csv(tmp_path, rows, header="date,value", name="x.csv"):
    path = tmp_path / name
    path.write_text("\n".join([header] + rows) + "\n", encoding="utf-8")
    return path


def test_prices_to_simple_returns(tmp_path):
    path = _csv(tmp_path, ["2020-01-01,100", "2020-01-02,101", "2020-01-03,99.99"])
    s = load_returns(path, "prices")
    assert len(s) == 2
    assert s.values[0] == pytest.approx(0.01, abs=1e-15)
    assert s.values[1] == pytest.approx(99.99 / 101 - 1, abs=1e-15)
    assert str(s.dates[0]) == "2020-01-02"


def test_returns_passthrough(tmp_path):
    path = _csv(tmp_path, ["2020-01-01,0.0", "2020-01-02,0.0"])
    s = load_returns(path)
    assert list(s.values) == [0.0, 0.0]


def test_invalid_month_reports_line(tmp_path):
    path = _csv(tmp_path, ["2004-12-01,0.01", "2004-13-01,0.02"])
    with pytest.raises(ParseError) as info:
        load_returns(path)
    assert info.value.line == 3


@pytest.mark.parametrize("rows,exc", [
    (["2020-01-01,abc", "2020-01-02,0.1"], ParseError),
    (["2020-01-01,0.1,7", "2020-01-02,0.1"], ParseError),
    (["2020-01-01,nan", "2020-01-02,0.1"], ParseError),
    (["2020-01-02,0.1", "2020-01-01,0.1"], NonMonotoneDates),
    (["2020-01-01,0.1", "2020-01-01,0.1"], NonMonotoneDates),
    (["2020-01-01,0.1"], EmptySeries),
])
def test_bad_rows_are_rejected(tmp_path, rows, exc):
    with pytest.raises(exc):
        load_returns(_csv(tmp_path, rows))


def test_missing_file_and_header(tmp_path):
    with pytest.raises(MissingFile):
        load_returns(tmp_path / "nope.csv")
    with pytest.raises(ParseError):
        load_returns(_csv(tmp_path, ["2020-01-01,1"], header="when,ret"))


def test_series_invariants():
    d = np.array(["2020-01-01", "2020-01-02"], dtype="datetime64[D]")
    with pytest.raises(ValueError):
        ReturnSeries(d, [0.1, np.inf])
    with pytest.raises(NonMonotoneDates):
        ReturnSeries(d[::-1], [0.1, 0.2])
    with pytest.raises(EmptySeries):
        ReturnSeries(d[:1], [0.1])
    with pytest.raises(ValueError):
        SampleSplit(500, 500)
    assert SampleSplit(500, 2826).out_of_sample_len == 2326


@given(st.lists(st.floats(0.5, 2.0), min_size=3, max_size=60))
def test_prices_reconstruct_from_compounded_returns(ratios):
    prices = 100.0 * np.cumprod(ratios)
    dates = np.datetime64("2001-01-01") + np.arange(len(prices))
    s = ReturnSeries.from_prices(dates, prices)
    rebuilt = prices[0] * np.cumprod(1.0 + s.values)
    np.testing.assert_allclose(rebuilt, prices[1:], rtol=1e-10)


def test_write_returns_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    s = ReturnSeries(np.datetime64("2010-01-04") + np.arange(50), rng.normal(0, 0.02, 50))
    write_returns(s, tmp_path / "r.csv")
    assert load_returns(tmp_path / "r.csv") == s


def test_empty_report_has_all_keys_as_null(tmp_path):
    write_report(EvalReport(), tmp_path / "e.json")
    rec = json.loads((tmp_path / "e.json").read_text())
    assert list(rec) == ["grs_contour_stat", "grs_contour_p", "grs_contour_full_stat",
                         "grs_contour_full_p", "grs_lag3_stat", "grs_lag3_p",
                         "grs_lag10_stat", "grs_lag10_p", "mean_brier", "mean_crps"]
    assert all(v is None for v in rec.values())


def test_pvalue_serialized_verbatim(tmp_path):
    write_report(EvalReport(grs_contour_p=0.05), tmp_path / "e.json")
    assert '"grs_contour_p": 0.05' in (tmp_path / "e.json").read_text()


def test_twelve_significant_digits(tmp_path):
    write_report(EvalReport(mean_crps=1.0 / 3.0), tmp_path / "e.json")
    assert json.loads((tmp_path / "e.json").read_text())["mean_crps"] == 0.333333333333


def test_write_into_missing_directory(tmp_path):
    with pytest.raises(IoError):
        write_report(EvalReport(), tmp_path / "no" / "e.json")


def _reports(rng):
    n = 6
    return [
        EvalReport(1.5, 0.2, 40.0, 0.3, 2.0, 0.5, 9.0, 0.6, -0.7, -0.01),
        EvalReport(),
        ScoreReport(-0.1, -0.002, rng.normal(size=n), rng.normal(size=n)),
        SelectionReport(2, 3, 500, np.arange(3.0), np.arange(3.0), np.full(3, 44.0),
                        rng.normal(size=3), rng.normal(size=3)),
        BacktestReport(0.3, 1.3, 0.1, 0.2, None, 0.25, 4, 0.5,
                       np.datetime64("2020-01-01") + np.arange(5),
                       1 + rng.random(5), rng.random(5), rng.normal(size=4)),
    ]


@pytest.mark.parametrize("fmt", ["json", "csv"])
def test_report_round_trip(tmp_path, fmt, rng):
    for i, rep in enumerate(_reports(rng)):
        path = tmp_path / f"r{i}.{fmt}"
        write_report(rep, path, fmt)
        back = read_report(type(rep), path)
        assert back == rep
        # a second pass is byte-identical (rounding is idempotent)
        write_report(back, tmp_path / f"s{i}.{fmt}", fmt)
        assert (tmp_path / f"s{i}.{fmt}").read_bytes() == path.read_bytes()


@given(st.floats(-1e6, 1e6, allow_nan=False))
def test_round_trip_property(x):
    import tempfile
    from pathlib import Path

    rep = EvalReport(grs_contour_stat=x, mean_brier=-abs(x))
    with tempfile.TemporaryDirectory() as d:
        path = Path(d) / "r.json"
        write_report(rep, path)
        once = read_report(EvalReport, path)
        write_report(once, path)
        assert read_report(EvalReport, path) == once == rep
