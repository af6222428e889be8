import numpy as np
import pytest

from fedsim.client import ClientState
from fedsim.numerics import RngStream
from fedsim.objective import Quadratic


def quad_client(A=1.0, b=0.0, cid=0, wd=0.0):
    """A data-free client whose gradient is exactly ``A x - b``."""
    q = Quadratic(np.atleast_2d(A), np.atleast_1d(b), wd)
    return ClientState(cid, q, None, None, RngStream(0, "client", cid))


class ConstantGrad:
    """Objective with a fixed gradient regardless of x; handy for hand-computed steps."""

    def __init__(self, g):
        self.g = np.atleast_1d(np.asarray(g, dtype=np.float64))
        self.dim = self.g.size

    def loss(self, x, data=None, idx=None):
        return float(self.g @ x)

    def grad(self, x, data=None, idx=None):
        return self.g.copy()


def const_client(g, cid=0):
    return ClientState(cid, ConstantGrad(g), None, None, RngStream(0, "client", cid))


@pytest.fixture
def softmax_client():
    from fedsim.datagen import generate_gaussian_classes
    from fedsim.objective import SoftmaxLinear

    ds = generate_gaussian_classes(30, 4, 3, 2.0, RngStream(0, "data"))
    model = SoftmaxLinear(4, 3, 1e-3)

    def make(seed=0, cid=0):
        return ClientState(cid, model, ds, np.arange(ds.n), RngStream(seed, "client", cid))

    return make


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import REPORT
    except ImportError:
        return
    if REPORT:
        terminalreporter.section("acceptance criteria")
        for line in REPORT:
            terminalreporter.write_line(line)
