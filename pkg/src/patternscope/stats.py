"""Corpus statistics: group splits, usage rates, bucket curves, correlation.

Pearson moments are accumulated exactly (Fraction arithmetic; float inputs
have power-of-two denominators, so this stays cheap), which makes rho
bit-reproducible and keeps precision at the |rho| -> 1 edge where the naive
float path loses the 1 - rho^2 term to cancellation. The p-value uses the
two-tailed Student-t test via a regularized incomplete beta evaluated with a
Lentz continued fraction.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence

from .corpus import AppRecord
from .detect import ALL_KINDS, ComponentKind
from .errors import StatsError

DEFAULT_INSTALL_THRESHOLD = 1_000_000

# usage_map convention throughout: package_id -> {ComponentKind: bool}
UsageMap = Mapping[str, Mapping[ComponentKind, bool]]


class Metric(enum.Enum):
    AVG_RATING = "AvgRating"
    INSTALLS = "Installs"

    def value_of(self, app: AppRecord) -> float:
        if app.metadata is None:
            raise StatsError(f"app {app.package_id} has no metadata")
        if self is Metric.AVG_RATING:
            return app.metadata.avg_rating
        return float(app.metadata.installs)


@dataclass(frozen=True)
class GroupSplit:
    metric: Metric
    threshold: float
    low_group: frozenset[str]       # metric < threshold
    high_group: frozenset[str]      # metric >= threshold (ties go high)


@dataclass(frozen=True)
class BucketCurve:
    metric: Metric
    k: int
    fractions: tuple[float, ...]
    counts: tuple[int, ...]


@dataclass(frozen=True)
class CorrelationResult:
    rho: float
    p_value: float
    n: int


@dataclass(frozen=True)
class FiveNumberSummary:
    minimum: float
    q1: float
    median: float
    q3: float
    maximum: float
    whisker_low: float      # smallest value >= q1 - 1.5 * IQR
    whisker_high: float     # largest value <= q3 + 1.5 * IQR


def _values(apps: Iterable[AppRecord], metric: Metric) -> list[tuple[str, float]]:
    pairs = [(app.package_id, metric.value_of(app)) for app in apps]
    if len(pairs) < 2:
        raise StatsError("need at least 2 apps to split")
    return pairs


def _median(values: Sequence[float]) -> float:
    ordered = sorted(values)
    n = len(ordered)
    mid = n // 2
    if n % 2:
        return float(ordered[mid])
    return (ordered[mid - 1] + ordered[mid]) / 2.0


def _split(pairs: list[tuple[str, float]], metric: Metric,
           threshold: float) -> GroupSplit:
    low = frozenset(pid for pid, v in pairs if v < threshold)
    high = frozenset(pid for pid, v in pairs if v >= threshold)
    if not low or not high:
        raise StatsError(
            f"degenerate split on {metric.value}: threshold {threshold} "
            f"leaves {len(low)} low / {len(high)} high")
    return GroupSplit(metric=metric, threshold=threshold,
                      low_group=low, high_group=high)


def split_by_median(apps: Iterable[AppRecord], metric: Metric) -> GroupSplit:
    """Median split; apps at exactly the median land in the high group."""
    pairs = _values(apps, metric)
    return _split(pairs, metric, _median([v for _, v in pairs]))


def split_by_threshold(apps: Iterable[AppRecord], metric: Metric,
                       threshold: float = DEFAULT_INSTALL_THRESHOLD) -> GroupSplit:
    return _split(_values(apps, metric), metric, threshold)


def usage_rate(group: Iterable[str], kind: ComponentKind,
               usage_map: UsageMap) -> float:
    members = list(group)
    if not members:
        raise StatsError("usage_rate over an empty group")
    used = sum(1 for pid in members
               if usage_map.get(pid, {}).get(kind, False))
    return used / len(members)


def material_usage(usage_map: UsageMap, package_id: str) -> bool:
    """True iff the app uses at least one of the six component kinds."""
    kinds = usage_map.get(package_id, {})
    return any(kinds.get(kind, False) for kind in ALL_KINDS)


def bucket_curve(apps: Iterable[AppRecord], metric: Metric, k: int,
                 predicate: Callable[[AppRecord], bool]) -> BucketCurve:
    """k contiguous buckets over the metric-sorted app list.

    Sort is ascending by (metric, package_id) so ties are deterministic.
    Bucket sizes differ by at most one; the remainder goes to the lowest
    buckets.
    """
    if k < 1:
        raise StatsError("bucket count must be >= 1")
    ordered = sorted(apps, key=lambda a: (metric.value_of(a), a.package_id))
    n = len(ordered)
    if n < k:
        raise StatsError(f"{n} apps cannot fill {k} buckets; use k <= {n}")
    base, rem = divmod(n, k)
    fractions, counts = [], []
    start = 0
    for i in range(k):
        size = base + (1 if i < rem else 0)
        chunk = ordered[start:start + size]
        start += size
        hits = sum(1 for app in chunk if predicate(app))
        counts.append(size)
        fractions.append(hits / size)
    return BucketCurve(metric=metric, k=k, fractions=tuple(fractions),
                       counts=tuple(counts))


# -- Pearson correlation ------------------------------------------------------

def _exact_moments(xs: Sequence[float], ys: Sequence[float]):
    n = len(xs)
    fx = [Fraction(x) for x in xs]
    fy = [Fraction(y) for y in ys]
    sx, sy = sum(fx), sum(fy)
    cov = n * sum(a * b for a, b in zip(fx, fy)) - sx * sy
    vx = n * sum(v * v for v in fx) - sx * sx
    vy = n * sum(v * v for v in fy) - sy * sy
    return cov, vx, vy


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    tiny = 1e-300
    eps = 3e-16
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 400):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise StatsError(f"incomplete beta did not converge for a={a} b={b} x={x}")


def betainc_reg(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b) for a, b > 0, x in [0, 1]."""
    if not 0.0 <= x <= 1.0:
        raise StatsError(f"incomplete beta argument {x} outside [0, 1]")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    ln_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def pearson(xs: Sequence[float], ys: Sequence[float]) -> CorrelationResult:
    """Product-moment correlation with a two-tailed t-test p-value.

    The t statistic is rho * sqrt((n - 2) / (1 - rho^2)) with n - 2 degrees
    of freedom; p = I_x(df/2, 1/2) at x = df / (df + t^2). Exactly collinear
    inputs give |rho| = 1 and p = 0.
    """
    if len(xs) != len(ys):
        raise StatsError(f"length mismatch: {len(xs)} vs {len(ys)}")
    n = len(xs)
    if n < 3:
        raise StatsError(f"need n >= 3 for a p-value, got {n}")
    cov, vx, vy = _exact_moments(xs, ys)
    if vx == 0 or vy == 0:
        raise StatsError("zero variance in pearson input")
    # rho^2 stays an exact Fraction in [0, 1]; float(vx * vy) can under- or
    # overflow for extreme input scales, so never leave rational arithmetic
    # before the final conversion.
    rho2 = Fraction(cov * cov, vx * vy)
    magnitude = math.sqrt(float(rho2))
    rho = -magnitude if cov < 0 else magnitude
    if rho2 == 1:
        return CorrelationResult(rho=-1.0 if cov < 0 else 1.0,
                                 p_value=0.0, n=n)
    df = n - 2
    # df / (df + t^2) simplifies to exactly 1 - rho^2 for the t statistic
    # rho * sqrt(df / (1 - rho^2))
    p = betainc_reg(df / 2.0, 0.5, float(1 - rho2))
    return CorrelationResult(rho=rho, p_value=min(max(p, 0.0), 1.0), n=n)


# -- summaries and rankings ---------------------------------------------------

def quantile(values: Sequence[float], q: float) -> float:
    """Linear-interpolation quantile at position h = (n - 1) * q."""
    if not values:
        raise StatsError("quantile of empty sequence")
    if not 0.0 <= q <= 1.0:
        raise StatsError(f"quantile level {q} outside [0, 1]")
    ordered = sorted(values)
    h = (len(ordered) - 1) * q
    lo = math.floor(h)
    hi = min(lo + 1, len(ordered) - 1)
    frac = h - lo
    return ordered[lo] * (1.0 - frac) + ordered[hi] * frac


def five_number_summary(values: Sequence[float]) -> FiveNumberSummary:
    if not values:
        raise StatsError("summary of empty sequence")
    ordered = sorted(values)
    q1 = quantile(ordered, 0.25)
    q3 = quantile(ordered, 0.75)
    iqr = q3 - q1
    lo_fence = q1 - 1.5 * iqr
    hi_fence = q3 + 1.5 * iqr
    inside = [v for v in ordered if lo_fence <= v <= hi_fence]
    # q1/q3 always sit inside the fences, so inside is never empty
    return FiveNumberSummary(minimum=ordered[0], q1=q1,
                             median=quantile(ordered, 0.5), q3=q3,
                             maximum=ordered[-1], whisker_low=inside[0],
                             whisker_high=inside[-1])


@dataclass(frozen=True)
class CategoryRate:
    category: str
    rate: float
    app_count: int


def rank_categories(apps: Iterable[AppRecord], kind: ComponentKind,
                    usage_map: UsageMap,
                    min_count: int = 20) -> list[CategoryRate]:
    """Per-category usage rates, highest first, for categories with at least
    min_count apps; ties break alphabetically."""
    by_cat: dict[str, list[str]] = {}
    for app in apps:
        if app.metadata is None:
            continue
        by_cat.setdefault(app.metadata.category, []).append(app.package_id)
    rates = [CategoryRate(category=cat,
                          rate=usage_rate(members, kind, usage_map),
                          app_count=len(members))
             for cat, members in by_cat.items() if len(members) >= min_count]
    return sorted(rates, key=lambda r: (-r.rate, r.category))
