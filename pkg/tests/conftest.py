"""Shared fixtures and the acceptance-summary hook."""

from __future__ import annotations

from pathlib import Path

import pytest

from patternscope.detect import ComponentKind
from patternscope.synth import SynthSpec, generate

DATA_DIR = Path(__file__).parent / "data"

# (nodeid, passed) per acceptance test, in run order
_acceptance_results: list[tuple[str, bool]] = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when == "call" and "test_acceptance" in item.nodeid:
        _acceptance_results.append((item.name, report.passed))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _acceptance_results:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for name, passed in _acceptance_results:
        verdict = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"{verdict}  {name}")


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA_DIR


@pytest.fixture(scope="session")
def fab_sample_text(data_dir) -> str:
    return (data_dir / "fab_sample_screen.json").read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def small_spec() -> SynthSpec:
    return SynthSpec(
        app_count=30,
        adoption={kind: 0.5 for kind in ComponentKind},
        decoy_rate=0.3,
        occlusion_rate=0.2,
        seed=1234,
    )


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory, small_spec):
    """30 rendered apps plus ground truth, built once per session."""
    out = tmp_path_factory.mktemp("small_corpus")
    truth = generate(small_spec, out)
    return out, truth, small_spec
