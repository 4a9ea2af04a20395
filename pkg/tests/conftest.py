import re

import numpy as np
import pytest

_acceptance = {}


@pytest.fixture
def rng():
    return np.random.default_rng(20160817)


def pytest_runtest_logreport(report):
    match = re.search(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)", report.nodeid)
    if not match:
        return
    key = (int(match.group(1)), match.group(2))
    if report.when == "call" or report.outcome != "passed":
        _acceptance[key] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for (number, name), outcome in sorted(_acceptance.items()):
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d} {name.replace('_', ' '):<32} {status}")


@pytest.fixture(scope="session")
def small_toy(tmp_path_factory):
    """Toy dataset with 4 train / 2 test images per class (fast)."""
    from resfeats.pipeline.toy import make_toy

    return make_toy(tmp_path_factory.mktemp("small_toy"), seed=1, train_per_class=4, test_per_class=2)
