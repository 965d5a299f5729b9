import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lbincidence.cohort import (
    AgeDistribution,
    LBMasses,
    PrevalentRecord,
    ScreeningFrame,
    SurvivalCurve,
    total_time,
    validate_frame,
)
from lbincidence.errors import CoverageGap, ValidationError


def test_valid_frame_has_no_violations():
    frame = ScreeningFrame(10, (PrevalentRecord(1.0, 2.0, True),))
    assert validate_frame(frame) == []


def test_degenerate_duration_is_flagged():
    frame = ScreeningFrame(10, (PrevalentRecord(0.0, 0.0, True),))
    rules = [v.rule for v in validate_frame(frame)]
    assert rules == ["bwd+fwd_obs > 0"]
    assert validate_frame(frame)[0].index == 0


def test_more_cases_than_screened():
    frame = ScreeningFrame(3, tuple(PrevalentRecord(1.0, 1.0, True) for _ in range(5)))
    assert [v.rule for v in validate_frame(frame)] == ["n <= s"]


def test_negative_and_nonfinite_values_reported_not_raised():
    frame = ScreeningFrame(5, (PrevalentRecord(-1.0, 2.0, True), PrevalentRecord(math.nan, 1.0, False),
                               PrevalentRecord(1.0, 1.0, 1)))
    got = [(v.index, v.rule) for v in validate_frame(frame)]
    assert (0, "bwd >= 0") in got
    assert (1, "durations are finite") in got
    assert (2, "event is boolean") in got


@pytest.mark.parametrize("bwd,fwd,expected", [(1.5, 2.5, 4.0), (0.0, 3.0, 3.0), (4.75, 0.0, 4.75)])
def test_total_time(bwd, fwd, expected):
    assert total_time(PrevalentRecord(bwd, fwd, True)) == expected


@given(st.floats(0, 1e6), st.floats(0, 1e6))
def test_total_time_symmetric_under_swap(b, f):
    assert total_time(PrevalentRecord(b, f, True)) == total_time(PrevalentRecord(f, b, True))


def test_from_arrays_matches_records():
    frame = ScreeningFrame.from_arrays(7, [1.0, 2.0], [0.5, 0.0], [True, False], ["a", None])
    assert frame.records[0] == PrevalentRecord(1.0, 0.5, True, "a")
    assert frame.records[1] == PrevalentRecord(2.0, 0.0, False, None)
    np.testing.assert_array_equal(frame.arrays.total, [1.5, 2.0])


@given(st.lists(st.floats(0.01, 100), min_size=1, max_size=20, unique=True),
       st.lists(st.floats(0.01, 1), min_size=20, max_size=20))
def test_survival_curve_is_monotone(ts, ws):
    t = np.sort(np.array(ts))
    w = np.array(ws[: t.size])
    curve = SurvivalCurve(t, w / w.sum())
    eps = 1e-9
    xs = np.sort(np.concatenate([[0.0], t - eps, t, t + eps]))
    xs = xs[xs >= 0]
    s = curve.sf(xs)
    assert np.all(np.diff(s) <= 1e-15)
    assert s[0] <= 1 + 1e-12
    assert curve.sf(t[-1]) == 0.0


def test_incomplete_curve_reports_deficit():
    curve = SurvivalCurve([1.0, 2.0], [0.25, 0.25], complete_tail=False)
    assert curve.tail_deficit == pytest.approx(0.5)
    assert float(curve.sf(5.0)) == pytest.approx(0.5)
    with pytest.raises(ValidationError):
        SurvivalCurve([1.0], [1.0], complete_tail=False)


def test_curve_rejects_bad_support():
    with pytest.raises(ValidationError):
        SurvivalCurve([2.0, 1.0], [0.5, 0.5])
    with pytest.raises(ValidationError):
        SurvivalCurve([1.0, 2.0], [0.5, 0.6])


@given(st.lists(st.tuples(st.floats(0.05, 50), st.floats(0.01, 1)), min_size=1, max_size=15,
                unique_by=lambda x: x[0]))
def test_lb_to_curve_mean_identity(pairs):
    pairs.sort()
    t = np.array([p[0] for p in pairs])
    w = np.array([p[1] for p in pairs])
    lb = LBMasses(t, w / w.sum())
    curve = lb.to_curve()
    mu = float(np.dot(curve.mass, curve.support))
    assert mu == pytest.approx(1.0 / np.sum(lb.q / lb.support), rel=1e-12)
    assert lb.mean_duration() == pytest.approx(mu, rel=1e-12)


def test_age_distribution_constant_and_coverage():
    age = AgeDistribution.constant({"a": 0.6, "b": 0.4})
    assert age.is_constant
    assert age.share("b") == 0.4
    age.check_coverage(1000.0)

    tv = AgeDistribution(("a", "b"), ((0, 5, (0.5, 0.5)), (5, 10, (1.0, 0.0))))
    assert tv.share_at("a", 7.0) == 1.0
    tv.check_coverage(10.0)
    with pytest.raises(CoverageGap):
        tv.check_coverage(12.0)
    gap = AgeDistribution(("a",), ((0, 4, (1.0,)), (5, 10, (1.0,))))
    with pytest.raises(CoverageGap):
        gap.check_coverage(10.0)


def test_age_distribution_rejects_bad_probabilities_and_overlap():
    with pytest.raises(ValidationError):
        AgeDistribution(("a", "b"), ((0, 1, (0.5, 0.6)),))
    with pytest.raises(ValidationError):
        AgeDistribution(("a",), ((0, 5, (1.0,)), (4, 10, (1.0,))))
