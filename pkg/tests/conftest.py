import sys
from pathlib import Path

import numpy as np
import pytest

from bsfnet.data import load_csv, load_idx

DATA = Path(__file__).parent / "data"
MNIST = DATA / "mnist-subset"


@pytest.fixture(scope="session")
def wine():
    return load_csv(DATA / "wine.csv", "class")


@pytest.fixture(scope="session")
def mnist_train():
    return load_idx(MNIST / "train-images-idx3-ubyte.gz", MNIST / "train-labels-idx1-ubyte.gz", limit=2000)


@pytest.fixture(scope="session")
def mnist_test():
    return load_idx(MNIST / "test-images-idx3-ubyte.gz", MNIST / "test-labels-idx1-ubyte.gz", limit=500)


def numeric_grad(f, x, h=1e-5):
    """Central differences of scalar ``f`` with respect to array ``x`` (modified in place)."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        fp = f()
        x[i] = old - h
        fm = f()
        x[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def rel_error(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b) / np.maximum(1e-8, np.abs(a) + np.abs(b))))


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if module is None:
        return
    terminalreporter.section("acceptance criteria")
    for number in range(1, 12):
        terminalreporter.write_line(results.get(number, f"criterion {number:>2}: FAIL  (not run or errored)"))
