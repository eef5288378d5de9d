import pytest

from alkd import tensor


@pytest.fixture(autouse=True, scope="session")
def _debug_checks():
    tensor.set_debug_checks(True)
    yield
    tensor.set_debug_checks(False)
