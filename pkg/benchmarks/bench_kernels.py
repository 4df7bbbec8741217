"""Compare the compiled kernels against the pure fallback.

Run from the repository root:

    python3 benchmarks/bench_kernels.py

Times the two hot operations (keyword scanning over class/ancestor strings,
area-mean image resize) on workloads shaped like real corpus traffic and
prints per-backend timings with the speedup ratio.
"""

from __future__ import annotations

import random
import statistics
import time

import numpy as np

from patternscope.kernels import available_backends

KEYWORDS = ["floatingactionbutton", "bottomnavigation", "appbarlayout",
            "navigationview", "snackbar", "tablayout"]

CLASS_POOL = [
    "android.widget.framelayout",
    "android.support.design.widget.floatingactionbutton",
    "com.example.ui.widgetv3",
    "android.support.design.widget.snackbar$snackbarlayout",
    "android.widget.imageview",
    "android.view.view",
    "android.support.v7.widget.recyclerview",
]

ANCESTOR_POOL = [
    ("android.widget.imagebutton", "android.widget.imageview",
     "android.view.view", "java.lang.object"),
    ("android.widget.framelayout", "android.view.viewgroup",
     "android.view.view", "java.lang.object"),
    ("android.support.design.widget.visibilityawareimagebutton",
     "android.widget.imagebutton", "android.widget.imageview",
     "android.view.view", "java.lang.object"),
]


def bench(fn, repeats: int = 5) -> float:
    """Best-of-n wall time in seconds."""
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def make_string_workload(n: int, seed: int = 7):
    rng = random.Random(seed)
    return [(rng.choice(CLASS_POOL), rng.choice(ANCESTOR_POOL))
            for _ in range(n)]


def make_image_workload(n: int, seed: int = 7):
    rng = np.random.default_rng(seed)
    return [rng.integers(0, 256, size=(rng.integers(40, 400),
                                       rng.integers(40, 400), 3),
                         dtype=np.uint8) for _ in range(n)]


def main() -> None:
    backends = available_backends()
    nodes = make_string_workload(200_000)
    images = make_image_workload(400)

    results: dict[str, dict[str, float]] = {}
    for name, module in sorted(backends.items()):
        def run_match():
            for cls, ancestors in nodes:
                module.match_strings(cls, ancestors, KEYWORDS)

        def run_resize():
            for img in images:
                module.resize_area_mean(img, 32, 32)

        results[name] = {
            "match_strings (200k nodes)": bench(run_match),
            "resize_area_mean (400 imgs)": bench(run_resize),
        }

    ops = list(next(iter(results.values())))
    width = max(len(op) for op in ops)
    header = f"{'operation':<{width}}  " + "  ".join(
        f"{name:>10}" for name in sorted(results))
    print(header)
    print("-" * len(header))
    for op in ops:
        row = f"{op:<{width}}  " + "  ".join(
            f"{results[name][op]*1000:>8.1f}ms" for name in sorted(results))
        if len(results) == 2 and "fallback" in results and "native" in results:
            ratio = results["fallback"][op] / results["native"][op]
            row += f"  ({ratio:.1f}x)"
        print(row)
    if len(results) < 2:
        print("\nonly one backend available; build the extension with "
              "`pip install -e . --no-build-isolation` to compare")


if __name__ == "__main__":
    main()
