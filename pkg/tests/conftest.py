import sys

import numpy as np
import pytest

from mobius_falsify import LabeledCounts, NoiseSpec, aggregate, sample_dataset


@pytest.fixture(scope="session")
def noisy_a1b_counts():
    """ε = 0.05 symmetric flips on the 48-circuit / 24576-shot budget."""
    return aggregate(sample_dataset(NoiseSpec.preset("a1b", eps=0.05, seed=2024)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_counts(rng, n=3, shots=200):
    arr = rng.multinomial(shots, rng.dirichlet(np.ones(1 << n)), size=2)
    arr[:, 0] += 1  # keep both labels nonempty
    return LabeledCounts(n, arr)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
