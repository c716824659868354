import pytest

from iota_sim import kernels


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    # JIT compile (or no-op on the numpy backend) before any timed test.
    kernels.warmup()
