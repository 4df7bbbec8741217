"""Regenerate pearson_fixtures.json with an implementation-independent oracle.

rho is computed from exact Fraction sums (no floating-point accumulation);
the two-tailed p-value comes from brute-force numerical integration of the
Student-t density with mpmath at 80 digits, deliberately avoiding the
incomplete-beta route the library itself uses. Run from the repo root:

    python3 tests/data/make_pearson_fixtures.py
"""

import json
import random
from fractions import Fraction
from pathlib import Path

import mpmath as mp

mp.mp.dps = 160


def exact_moments(xs, ys):
    n = len(xs)
    fx = [Fraction(x) for x in xs]
    fy = [Fraction(y) for y in ys]
    sx, sy = sum(fx), sum(fy)
    sxx = sum(v * v for v in fx)
    syy = sum(v * v for v in fy)
    sxy = sum(a * b for a, b in zip(fx, fy))
    cov = n * sxy - sx * sy
    vx = n * sxx - sx * sx
    vy = n * syy - sy * sy
    return cov, vx, vy


def oracle(xs, ys):
    n = len(xs)
    cov, vx, vy = exact_moments(xs, ys)
    if vx == 0 or vy == 0:
        raise ValueError("zero variance")
    rho = mp.mpf(cov.numerator) / mp.mpf(cov.denominator) / mp.sqrt(
        mp.mpf((vx * vy).numerator) / mp.mpf((vx * vy).denominator))
    if cov * cov == vx * vy:                # |rho| == 1 exactly
        return rho, mp.mpf(0)
    one_minus_rho2 = Fraction(vx * vy - cov * cov, vx * vy)
    t = abs(rho) * mp.sqrt(
        mp.mpf(n - 2)
        / (mp.mpf(one_minus_rho2.numerator) / mp.mpf(one_minus_rho2.denominator)))
    df = n - 2
    norm = mp.gamma((df + 1) / mp.mpf(2)) / (
        mp.sqrt(df * mp.pi) * mp.gamma(df / mp.mpf(2)))

    def pdf(u):
        return norm * (1 + u * u / df) ** (-(df + 1) / mp.mpf(2))

    if t < 50:
        p = 2 * mp.quad(pdf, [t, mp.inf], maxdegree=12)
    else:
        # far tail: u = 1/w turns the integrand into a smooth power near 0,
        # where tanh-sinh quadrature is reliable (the [t, inf] form is not)
        p = 2 * mp.quad(lambda w: pdf(1 / w) / (w * w), [0, 1 / t],
                        maxdegree=12)
    # guard the quadrature against an independent closed-form route before
    # freezing anything
    x = mp.mpf(df) / (mp.mpf(df) + t * t)
    p_beta = mp.betainc(mp.mpf(df) / 2, mp.mpf(1) / 2, 0, x, regularized=True)
    rel = abs(p - p_beta) / p_beta
    assert rel < mp.mpf("1e-20"), (n, mp.nstr(rho, 20), mp.nstr(rel, 5))
    return rho, min(p, mp.mpf(1))


def build_cases():
    cases = [
        ([1, 2, 3], [2, 1, 3]),
        ([1, 2, 3], [1, 2, 3]),
        ([1, 2, 3, 4], [8, 6, 4, 2]),
        (list(range(1, 11)), [(x - 5.5) ** 2 for x in range(1, 11)]),
        ([1, 2, 3, 4, 5], [2, 4, 5, 4, 5]),
        ([10, 20, 30, 40, 50, 60], [3, 2, 5, 4, 7, 6]),
    ]
    rng = random.Random(20260814)
    for n in (3, 4, 5, 7, 8, 12, 16, 25, 40, 100):
        xs = [rng.randint(-50, 50) for _ in range(n)]
        ys = [rng.randint(-50, 50) for _ in range(n)]
        cov, vx, vy = exact_moments(xs, ys)
        if vx == 0 or vy == 0:
            ys[0] += 1
        cases.append((xs, ys))
    for n in (5, 9, 15, 30):                # near-perfect correlations
        xs = [rng.uniform(0, 10) for _ in range(n)]
        ys = [3.0 * x + 1.0 + rng.uniform(-1e-3, 1e-3) for x in xs]
        cases.append((xs, ys))
    for n in (6, 11, 21):                   # strong negative
        xs = list(range(n))
        ys = [-2 * x + rng.randint(0, 3) for x in xs]
        cases.append((xs, ys))
    return cases


def main():
    out = []
    for xs, ys in build_cases():
        rho, p = oracle(xs, ys)
        out.append({
            "xs": xs, "ys": ys, "n": len(xs),
            "rho": mp.nstr(rho, 30),
            "p": mp.nstr(p, 30),
        })
    path = Path(__file__).with_name("pearson_fixtures.json")
    path.write_text(json.dumps(out, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {len(out)} cases to {path}")


if __name__ == "__main__":
    main()
