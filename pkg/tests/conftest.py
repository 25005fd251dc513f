import numpy as np
import pytest

from pdtrade.etc import etc_int_codes


@pytest.fixture(scope="session", autouse=True)
def _warm_numba_kernel():
    # first call pays the JIT compile; keep it out of timed tests
    etc_int_codes(np.array([0, 1, 0, 1], dtype=np.int64))
