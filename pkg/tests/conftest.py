import numpy as np
import pytest

from nohis.synth import mixture_dataset
from nohis.tree import build_nohis, build_pddp_baseline

# (number, title, passed, detail) tuples filled in by test_acceptance.py
ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num, title, ok, detail in sorted(ACCEPTANCE_RESULTS):
        status = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"[{status}] criterion {num:>2}: {title}: {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def mixture_10k():
    data, queries, labels = mixture_dataset(10_000, dim=12, components=50, queries=100, seed=7)
    return data, queries, labels


@pytest.fixture(scope="session")
def trees_10k(mixture_10k):
    data, _, labels = mixture_10k
    return (build_nohis(data, labels, c_max=40),
            build_pddp_baseline(data, labels, c_max=40))
