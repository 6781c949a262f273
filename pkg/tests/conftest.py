import numpy as np
import pytest

from rootflip.pulse import DesignSpec
from rootflip.roots import FlipContext

CRITERIA = []


class TableContext:
    """Toy objective: a seeded random peak per pattern index.

    ``amplitude`` returns a fixed random vector per pattern rescaled so its
    maximum equals the tabulated peak, so the agent can run on it too.
    """

    def __init__(self, n_root, seed=0, n_points=8):
        rng = np.random.default_rng(seed)
        self.n_root = n_root
        self.table = rng.uniform(0.5, 1.5, 2 ** n_root)
        self.shapes = rng.uniform(0.1, 1.0, (2 ** n_root, n_points))
        self.calls = 0

    def index(self, bits):
        idx = 0
        for b in bits:
            idx = 2 * idx + int(b)
        return idx

    def peak(self, bits):
        self.calls += 1
        return float(self.table[self.index(bits)])

    def amplitude(self, bits):
        i = self.index(bits)
        v = self.shapes[i]
        return v / v.max() * self.table[i]


@pytest.fixture
def toy4():
    return TableContext(4, seed=3)


@pytest.fixture(scope="session")
def nb3_spec():
    return DesignSpec(nb=3)


@pytest.fixture(scope="session")
def nb3_ctx(nb3_spec):
    return FlipContext(nb3_spec)


@pytest.fixture(scope="session")
def ci_spec():
    return DesignSpec(nb=2, tbw=4.0, n_points=256)


@pytest.fixture(scope="session")
def ci_ctx(ci_spec):
    return FlipContext(ci_spec)


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in CRITERIA:
            terminalreporter.write_line(line)
