import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from es_service.pool import EvalPool  # noqa: E402


@pytest.fixture(autouse=True)
def fresh_pool():
    """Every test gets its own evaluation pool."""
    EvalPool.reset()
    yield
    EvalPool.reset()
