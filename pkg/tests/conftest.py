import pytest

from cdes import backend


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    # JIT-compile the numba kernels once so timed tests measure math, not
    # compilation.
    backend.warmup()
