import numpy as np
import pytest

from streamtucker import kernels
from streamtucker.model import DenseSide, Hyperparams, SideInfoSet, init_model
from streamtucker.tensor import SparseTensor


def random_instance(rng, dims, ranks, widths=None, density=0.5, lam=0.1, seed=0):
    """Dense random side information, a random model and a masked random tensor."""
    widths = widths or dims
    side = SideInfoSet([DenseSide(rng.standard_normal((d, m))) for d, m in zip(dims, widths)])
    hp = Hyperparams(lambda_g=lam, lambda_i=(lam,), seed=seed)
    model = init_model(ranks, side, hp)
    mask = rng.random(dims) < density
    data = SparseTensor.from_dense(rng.standard_normal(dims), mask)
    return model, side, data, hp


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=sorted(kernels.BACKENDS))
def backend(request):
    return request.param


# one line per acceptance criterion, collected by tests/test_acceptance.py
ACCEPTANCE: dict[str, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE, key=lambda k: (int("".join(c for c in k if c.isdigit())), k)):
            terminalreporter.write_line(ACCEPTANCE[key])
