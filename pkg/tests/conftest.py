import pytest

from qmetro import kernels


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    # compile the jit kernels once so timed tests measure compute, not JIT
    kernels.warmup()
