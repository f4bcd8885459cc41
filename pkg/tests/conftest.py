import pytest

from gmwalk import _kernels


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    # JIT compilation happens once here so timed tests measure the
    # algorithms, not compiler latency
    _kernels.warm_up()
