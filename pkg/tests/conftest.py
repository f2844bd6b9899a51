import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mstan.seqdata import PaddedBatch  # noqa: E402


def random_batch(rng, B, L, d, min_len=1):
    lengths = rng.integers(min_len, L + 1, size=B)
    lengths[0] = L
    values = rng.uniform(-1, 1, (B, L, d))
    times = np.cumsum(rng.exponential(2.0, (B, L)), axis=1)
    mask = np.arange(L)[None, :] < lengths[:, None]
    for b, n in enumerate(lengths):
        values[b, n:] = 0.0
        times[b, n:] = times[b, n - 1]
    labels = rng.integers(0, 2, size=B).astype(float)
    return PaddedBatch(values, times, mask, labels)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    from acceptance_report import lines

    out = lines()
    if out:
        terminalreporter.section("acceptance criteria")
        for line in out:
            terminalreporter.write_line(line)
