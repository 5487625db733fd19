import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import wls_local_linear
from paleoconsensus.chronology import (
    ProxySeries,
    bin_dates,
    center,
    local_linear,
    merge_chronologies,
    rule_of_thumb_bandwidth,
    smooth_date_errors,
)
from paleoconsensus.exceptions import BinCollisionError, ConfigurationError, InvalidInputError


def rec(rid, ages, values=None, sd=None):
    values = np.arange(len(ages), dtype=float) if values is None else values
    return ProxySeries(rid, ages, values, sd)


def test_series_is_stored_oldest_first():
    s = rec("a", [100, 200, 300], [1.0, 2.0, 3.0], [5, 6, 7])
    assert np.array_equal(s.age_bp, [300, 200, 100])
    assert np.array_equal(s.values, [3.0, 2.0, 1.0])
    assert np.array_equal(s.age_sd, [7, 6, 5])
    assert np.all(np.diff(s.time) > 0)
    same = rec("a", [300, 200, 100], [3.0, 2.0, 1.0])
    assert np.array_equal(same.values, s.values)


@pytest.mark.parametrize(
    "ages, values, sd",
    [
        ([1, 2, 2], [0, 0, 0], None),
        ([1, 3, 2], [0, 0, 0], None),
        ([1, 2], [0, 0, 0], None),
        ([1], [0], None),
        ([1, 2], [0, np.inf], None),
        ([1, 2], [0, 0], [1, -1]),
    ],
)
def test_series_validation(ages, values, sd):
    with pytest.raises(InvalidInputError):
        ProxySeries("x", ages, values, sd)


def test_center_examples():
    a = center(rec("a", [1, 2], [3.0, 5.0]))
    assert np.allclose(sorted(a.values), [-1, 1]) and a.mean == 4.0
    b = center(rec("b", [1, 2], [-1.0, 1.0]))
    assert b.mean == 0.0 and np.allclose(sorted(b.values), [-1, 1])
    c = center(rec("c", [1, 2, 3], [10.2, 11.0, 12.1]))
    assert c.mean == pytest.approx(11.1)
    assert abs(c.values.sum()) < 1e-10


def test_bin_dates_examples():
    out = bin_dates([rec("a", [100, 300]), rec("b", [110, 400])], 15)
    assert 105 in out[0].age_bp and 105 in out[1].age_bp
    out = bin_dates([rec("a", [100, 300]), rec("b", [120, 400])], 15)
    assert np.array_equal(out[0].age_bp, [300, 100]) and np.array_equal(out[1].age_bp, [400, 120])
    with pytest.raises(BinCollisionError, match="'a'"):
        bin_dates([rec("a", [0, 10, 22])], 15)


def test_bin_width_zero_is_identity_and_values_unchanged():
    series = [rec("a", [0, 17, 40], [1, 2, 3]), rec("b", [3, 50], [4, 5])]
    assert bin_dates(series, 0) == series
    out = bin_dates(series, 15)
    for s, o in zip(series, out):
        assert np.array_equal(s.values, o.values)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.lists(st.integers(0, 3000), min_size=2, max_size=15, unique=True),
                min_size=1, max_size=4),
       st.floats(1, 40))
def test_binning_groups_respect_width(ages_per_record, width):
    series = [rec(f"r{i}", sorted(a)) for i, a in enumerate(ages_per_record)]
    try:
        out = bin_dates(series, width)
    except BinCollisionError:
        return
    pooled = np.unique(np.concatenate([s.age_bp for s in series]))
    for s, o in zip(series, out):
        assert np.all(np.diff(o.age_bp) < 0)
        # every age moved to a group mean no further than the width
        assert np.all(np.abs(o.age_bp - s.age_bp) <= width + 1e-9)
    new = np.unique(np.concatenate([o.age_bp for o in out]))
    assert new.size <= pooled.size


def test_merge_examples():
    j = merge_chronologies([rec("a", [0, 10, 20]), rec("b", [10, 30])])
    assert np.array_equal(j.age_bp, [30, 20, 10, 0]) and j.n == 4
    # incidence points at the same date for both records
    assert j.t[j.incidence[0][1]] == j.t[j.incidence[1][1]] == -10
    single = merge_chronologies([rec("a", [5, 3, 1])])
    assert np.array_equal(single.incidence[0], [0, 1, 2])
    twin = merge_chronologies([rec("a", [1, 2, 3]), rec("b", [1, 2, 3])])
    assert twin.n == 3 and np.array_equal(twin.incidence[0], twin.incidence[1])


def test_merge_idempotent_and_mean_sd():
    a = rec("a", [0, 10, 20], sd=[10, 20, 30])
    b = rec("b", [10, 30], sd=[40, 50])
    j = merge_chronologies([a, b])
    sd_by_age = dict(zip(j.age_bp, j.mean_sd))
    assert sd_by_age[10] == 30 and sd_by_age[0] == 10 and sd_by_age[30] == 50
    merged = ProxySeries("m", j.age_bp, np.zeros(j.n))
    again = merge_chronologies([merged, merged])
    assert np.array_equal(again.t, j.t)
    assert merge_chronologies([rec("a", [1, 2])]).mean_sd is None


def test_with_psi_validation():
    j = merge_chronologies([rec("a", [1, 2, 3])])
    assert np.array_equal(j.with_psi([1, 2, 3]).psi, [1, 2, 3])
    with pytest.raises(InvalidInputError):
        j.with_psi([1, 2])
    with pytest.raises(InvalidInputError):
        j.with_psi([1, 0, 2])


def test_date_error_smoothing_examples():
    t = np.sort(np.random.default_rng(0).uniform(-10000, 0, 60))
    assert np.allclose(smooth_date_errors(t, np.full(60, 50.0)), 50.0, atol=1e-8)
    line = 100 - 0.02 * t
    assert np.allclose(smooth_date_errors(t, line), line, atol=1e-8)
    with pytest.raises(ConfigurationError):
        smooth_date_errors(t, np.zeros(60))
    assert np.all(smooth_date_errors(t, np.r_[np.zeros(59), 0.5]) >= 1.0)


def test_date_error_smoothing_matches_wls_oracle():
    rng = np.random.default_rng(1)
    t = np.sort(rng.uniform(-10000, 0, 80))
    truth = 50 + 3e-6 * (t + 5000) ** 2
    sd = truth + rng.normal(0, 5, t.size)
    h = rule_of_thumb_bandwidth(t)
    ref = np.array([wls_local_linear(t, sd, x0, h) for x0 in t])
    assert np.allclose(smooth_date_errors(t, sd, h), ref, atol=1e-8)
    assert np.allclose(local_linear(t, sd, t, h), ref, atol=1e-8)
