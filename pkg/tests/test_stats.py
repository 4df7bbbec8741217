"""Statistics: splits, rates, bucket curves, pearson with p-values."""

from __future__ import annotations

import json
import statistics
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from patternscope.corpus import AppMetadata, AppRecord
from patternscope.detect import ComponentKind
from patternscope.errors import StatsError
from patternscope.stats import (Metric, betainc_reg, bucket_curve,
                                five_number_summary, material_usage, pearson,
                                quantile, rank_categories, split_by_median,
                                split_by_threshold, usage_rate)

FAB = ComponentKind.FLOATING_ACTION_BUTTON
SNACK = ComponentKind.SNACK_BAR

FIXTURES = json.loads(
    (Path(__file__).parent / "data" / "pearson_fixtures.json")
    .read_text(encoding="utf-8"))


def app(pid, rating=4.0, installs=1000, category="Tools"):
    return AppRecord(package_id=pid, screens=[],
                     metadata=AppMetadata(avg_rating=rating, installs=installs,
                                          category=category))


def apps_with_ratings(ratings):
    return [app(f"com.a{i:03d}", rating=r) for i, r in enumerate(ratings)]


class TestPearsonFixtures:
    @pytest.mark.parametrize("case", FIXTURES,
                             ids=[f"n{c['n']}_{i}"
                                  for i, c in enumerate(FIXTURES)])
    def test_matches_frozen_values(self, case):
        result = pearson(case["xs"], case["ys"])
        assert result.rho == pytest.approx(float(case["rho"]), abs=1e-12)
        expected_p = float(case["p"])
        if expected_p == 0.0:
            assert result.p_value == 0.0
        else:
            assert result.p_value == pytest.approx(expected_p, rel=1e-9)

    def test_fixture_count(self):
        assert len(FIXTURES) >= 20


class TestPearsonContract:
    def test_perfect_correlation(self):
        result = pearson([1, 2, 3, 4], [1, 2, 3, 4])
        assert result.rho == 1.0
        assert result.p_value == 0.0

    def test_perfect_anticorrelation(self):
        result = pearson([1, 2, 3], [5, 3, 1])
        assert result.rho == -1.0
        assert result.p_value == 0.0

    def test_simple_half(self):
        assert pearson([1, 2, 3], [2, 1, 3]).rho == pytest.approx(0.5)

    def test_zero_rho_p_one(self):
        # symmetric ys around the mean: exact zero covariance, n=10
        xs = list(range(1, 11))
        ys = [(x - 5.5) ** 2 for x in xs]
        result = pearson(xs, ys)
        assert result.rho == 0.0
        assert result.p_value == 1.0

    def test_length_mismatch(self):
        with pytest.raises(StatsError):
            pearson([1, 2], [1, 2, 3])

    def test_too_short(self):
        with pytest.raises(StatsError):
            pearson([1, 2], [3, 4])

    def test_zero_variance(self):
        with pytest.raises(StatsError):
            pearson([1, 1, 1], [1, 2, 3])
        with pytest.raises(StatsError):
            pearson([1, 2, 3], [7, 7, 7])

    def test_p_monotone_in_abs_rho(self):
        # same n: larger |rho| must never yield a larger p
        n = 12
        xs = list(range(n))
        noise = [((i * 7919) % n) - 5.5 for i in range(n)]
        cases = []
        for k in (0.0, 0.3, 1.0, 3.0, 10.0, 30.0):
            ys = [x + k * noise[i] for i, x in enumerate(xs)]
            result = pearson(xs, ys)
            cases.append((abs(result.rho), result.p_value))
        cases.sort()
        for (r_lo, p_lo), (r_hi, p_hi) in zip(cases, cases[1:]):
            assert p_hi <= p_lo
            if r_hi - r_lo > 1e-12:
                assert p_hi < p_lo

    def test_result_ranges(self):
        result = pearson([1, 5, 2, 8, 3], [2, 3, 9, 1, 4])
        assert -1.0 <= result.rho <= 1.0
        assert 0.0 < result.p_value <= 1.0
        assert result.n == 5


finite_floats = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)
vectors = st.integers(3, 40).flatmap(
    lambda n: st.tuples(
        st.lists(finite_floats, min_size=n, max_size=n),
        st.lists(finite_floats, min_size=n, max_size=n)))


def _nondegenerate(pair):
    xs, ys = pair
    return len(set(xs)) > 1 and len(set(ys)) > 1


@settings(max_examples=500, deadline=None)
@given(vectors.filter(_nondegenerate))
def test_pearson_symmetry(pair):
    xs, ys = pair
    assert pearson(xs, ys).rho == pytest.approx(pearson(ys, xs).rho,
                                                abs=1e-12)


# affine transforms that are exact in binary floats, so the mathematical
# invariance is not blurred by rounding of the transformed inputs
@settings(max_examples=500, deadline=None)
@given(vectors.filter(_nondegenerate),
       st.sampled_from([0.125, 0.25, 0.5, 2.0, 4.0, 32.0]))
def test_pearson_scale_invariance(pair, scale):
    xs, ys = pair
    base = pearson(xs, ys).rho
    assert pearson([scale * x for x in xs], ys).rho == \
        pytest.approx(base, abs=1e-12)


int_vectors = st.integers(3, 30).flatmap(
    lambda n: st.tuples(
        st.lists(st.integers(-10**6, 10**6), min_size=n, max_size=n),
        st.lists(st.integers(-10**6, 10**6), min_size=n, max_size=n)))


@settings(max_examples=500, deadline=None)
@given(int_vectors.filter(_nondegenerate),
       st.integers(1, 1000), st.integers(-10**6, 10**6))
def test_pearson_affine_invariance(pair, scale, shift):
    xs, ys = pair
    base = pearson(xs, ys).rho
    assert pearson([scale * x + shift for x in xs], ys).rho == \
        pytest.approx(base, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(vectors.filter(_nondegenerate))
def test_pearson_negation_flips_sign(pair):
    xs, ys = pair
    assert pearson([-x for x in xs], ys).rho == \
        pytest.approx(-pearson(xs, ys).rho, abs=1e-12)


def test_betainc_reg_bounds():
    assert betainc_reg(2.0, 3.0, 0.0) == 0.0
    assert betainc_reg(2.0, 3.0, 1.0) == 1.0
    # symmetric case: I_x(a,a) at x=0.5 is exactly 0.5
    assert betainc_reg(4.0, 4.0, 0.5) == pytest.approx(0.5, rel=1e-12)


class TestSplits:
    def test_even_count_median(self):
        split = split_by_median(apps_with_ratings([1, 2, 3, 4]),
                                Metric.AVG_RATING)
        assert split.threshold == pytest.approx(2.5)
        low = {a for a in split.low_group}
        assert len(low) == 2 and len(split.high_group) == 2

    def test_ties_go_high(self):
        apps = apps_with_ratings([4.16, 4.16, 3.0, 5.0])
        split = split_by_median(apps, Metric.AVG_RATING)
        assert split.threshold == pytest.approx(4.16)
        assert len(split.high_group) == 3       # both 4.16 apps sit high
        assert len(split.low_group) == 1

    def test_degenerate_all_equal(self):
        with pytest.raises(StatsError):
            split_by_median(apps_with_ratings([4.0] * 5), Metric.AVG_RATING)

    def test_threshold_split(self):
        apps = [app("com.a", installs=10), app("com.b", installs=10**6)]
        split = split_by_threshold(apps, Metric.INSTALLS, 10**6)
        assert split.low_group == frozenset({"com.a"})
        assert split.high_group == frozenset({"com.b"})

    def test_threshold_empty_side_errors(self):
        apps = [app("com.a", installs=10), app("com.b", installs=20)]
        with pytest.raises(StatsError):
            split_by_threshold(apps, Metric.INSTALLS, 10**6)

    @settings(max_examples=300, deadline=None)
    @given(st.lists(st.floats(0, 5, allow_nan=False), min_size=2,
                    max_size=60).filter(lambda v: len(set(v)) > 1))
    def test_partition_exact(self, ratings):
        apps = apps_with_ratings(ratings)
        med = statistics.median(ratings)
        if med == min(ratings):
            # every value >= median: ties-go-high leaves the low side empty
            with pytest.raises(StatsError):
                split_by_median(apps, Metric.AVG_RATING)
            return
        split = split_by_median(apps, Metric.AVG_RATING)
        assert split.threshold == pytest.approx(med)
        assert split.low_group.isdisjoint(split.high_group)
        assert len(split.low_group) + len(split.high_group) == len(apps)
        # membership decidable from the threshold alone
        for a in apps:
            expected_high = a.metadata.avg_rating >= split.threshold
            assert (a.package_id in split.high_group) == expected_high


class TestUsage:
    def test_rate(self):
        usage = {f"com.a{i}": {FAB: i < 3} for i in range(10)}
        group = list(usage)
        assert usage_rate(group, FAB, usage) == pytest.approx(0.3)

    def test_empty_group_errors(self):
        with pytest.raises(StatsError):
            usage_rate([], FAB, {})

    def test_material_usage(self):
        none = {k: False for k in ComponentKind}
        only_snack = dict(none)
        only_snack[SNACK] = True
        usage = {"com.none": none, "com.snack": only_snack}
        assert material_usage(usage, "com.none") is False
        assert material_usage(usage, "com.snack") is True


class TestBucketCurve:
    def test_singleton_buckets(self):
        apps = apps_with_ratings([i / 10 for i in range(100)])
        users = {a.package_id for a in apps[::2]}
        curve = bucket_curve(apps, Metric.AVG_RATING, 100,
                             lambda a: a.package_id in users)
        assert curve.k == 100
        assert all(c == 1 for c in curve.counts)
        assert set(curve.fractions) <= {0.0, 1.0}

    def test_constant_predicate(self):
        apps = apps_with_ratings([i / 7 for i in range(30)])
        curve = bucket_curve(apps, Metric.AVG_RATING, 10, lambda a: True)
        assert all(f == 1.0 for f in curve.fractions)

    def test_too_few_apps(self):
        with pytest.raises(StatsError, match="cannot fill"):
            bucket_curve(apps_with_ratings([1, 2, 3]), Metric.AVG_RATING, 10,
                         lambda a: True)

    def test_remainder_spread_over_lowest(self):
        apps = apps_with_ratings([i / 9 for i in range(23)])
        curve = bucket_curve(apps, Metric.AVG_RATING, 10, lambda a: True)
        assert list(curve.counts) == [3, 3, 3, 2, 2, 2, 2, 2, 2, 2]

    @settings(max_examples=200, deadline=None)
    @given(st.integers(1, 20),
           st.lists(st.floats(0, 5, allow_nan=False), min_size=1,
                    max_size=80))
    def test_sizes_and_order(self, k, ratings):
        apps = apps_with_ratings(ratings)
        if len(apps) < k:
            with pytest.raises(StatsError):
                bucket_curve(apps, Metric.AVG_RATING, k, lambda a: True)
            return
        curve = bucket_curve(apps, Metric.AVG_RATING, k, lambda a: True)
        assert max(curve.counts) - min(curve.counts) <= 1
        assert sum(curve.counts) == len(apps)
        assert all(0.0 <= f <= 1.0 for f in curve.fractions)


class TestQuantiles:
    def test_linear_interpolation(self):
        values = [1.0, 2.0, 3.0, 4.0]
        assert quantile(values, 0.25) == pytest.approx(1.75)
        assert quantile(values, 0.5) == pytest.approx(2.5)
        assert quantile(values, 0.75) == pytest.approx(3.25)

    def test_five_number_summary(self):
        values = [1.0, 2.0, 3.0, 4.0, 100.0]
        s = five_number_summary(values)
        assert s.minimum == 1.0 and s.maximum == 100.0
        assert s.median == 3.0
        assert s.q1 == 2.0 and s.q3 == 4.0
        # 1.5*IQR fence: 4 + 3 = 7; whisker stops at the last value inside
        assert s.whisker_high == 4.0
        assert s.whisker_low == 1.0

    def test_summary_no_outliers(self):
        s = five_number_summary([1.0, 2.0, 3.0, 4.0, 5.0])
        assert s.whisker_low == s.minimum
        assert s.whisker_high == s.maximum

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.floats(-100, 100, allow_nan=False), min_size=1,
                    max_size=50))
    def test_summary_against_numpy(self, values):
        s = five_number_summary(values)
        assert s.minimum <= s.q1 <= s.median <= s.q3 <= s.maximum
        assert s.q1 == pytest.approx(np.percentile(values, 25), abs=1e-9)
        assert s.median == pytest.approx(np.percentile(values, 50), abs=1e-9)
        assert s.q3 == pytest.approx(np.percentile(values, 75), abs=1e-9)
        # whiskers: extreme data values inside the 1.5*IQR fences
        lo_fence = s.q1 - 1.5 * (s.q3 - s.q1)
        hi_fence = s.q3 + 1.5 * (s.q3 - s.q1)
        inside = sorted(v for v in values if lo_fence <= v <= hi_fence)
        assert s.whisker_low == inside[0]
        assert s.whisker_high == inside[-1]


class TestCategories:
    def test_min_count_filter_and_order(self):
        apps = []
        usage = {}
        for i in range(25):
            a = app(f"com.t{i:02d}", category="Tools")
            apps.append(a)
            usage[a.package_id] = {FAB: i < 20}
        for i in range(25):
            a = app(f"com.g{i:02d}", category="Games")
            apps.append(a)
            usage[a.package_id] = {FAB: i < 5}
        for i in range(3):
            a = app(f"com.x{i}", category="Tiny")
            apps.append(a)
            usage[a.package_id] = {FAB: True}
        ranked = rank_categories(apps, FAB, usage, min_count=20)
        assert [c.category for c in ranked] == ["Tools", "Games"]
        assert ranked[0].rate == pytest.approx(0.8)
        assert ranked[0].app_count == 25
