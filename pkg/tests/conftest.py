import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from hob.binaries import MarketParams  # noqa: E402


@pytest.fixture
def params():
    return MarketParams(r=0.05, q=0.0, sigma=0.2)


@pytest.fixture
def div_params():
    return MarketParams(r=0.03, q=0.02, sigma=0.3)
