import pytest

from ricreg import _kernels


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels():
    # Compile the JIT kernels once so no test pays (or times) compilation.
    _kernels.warm_up()
