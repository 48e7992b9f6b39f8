import os

import numpy as np
import pytest

from osnn.cli.data import SPLIT_FILES, data_dir


def _have_mnist():
    d = data_dir()
    return all(os.path.exists(os.path.join(d, f)) for pair in SPLIT_FILES.values() for f in pair)


def pytest_configure(config):
    config.addinivalue_line("markers", "needs_mnist: test reads the real MNIST IDX files")
    config.addinivalue_line("markers", "acceptance: acceptance-gate criterion")


def pytest_collection_modifyitems(config, items):
    if _have_mnist():
        return
    skip = pytest.mark.skip(reason="MNIST IDX files not found")
    for item in items:
        if "needs_mnist" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_RESULTS = pytest.StashKey()


@pytest.fixture
def criterion(request):
    """Record one acceptance verdict: prints a pass/fail line and asserts."""
    def record(n, ok, detail):
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
        request.config.stash.setdefault(_RESULTS, []).append(line)
        print(line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_RESULTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
