import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from hmmqcd import build_augmented  # noqa: E402
from hmmqcd.scenarios import illustrative_model  # noqa: E402


@pytest.fixture(scope="session")
def example_model():
    return illustrative_model()


@pytest.fixture(scope="session")
def example_aug(example_model):
    return build_augmented(example_model)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = []


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance" in report.nodeid:
        props = dict(report.user_properties)
        _ACCEPTANCE.append((props.get("criterion", report.nodeid), report.outcome, props.get("detail", "")))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for name, outcome, detail in sorted(_ACCEPTANCE):
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{verdict} {name}: {detail}")
