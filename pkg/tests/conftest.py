import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from replica_aloha.occupancy import build_policy_table


@pytest.fixture(scope="session")
def table_m4_g0():
    return build_policy_table(4, 0.0, n_max=16)


@pytest.fixture(scope="session")
def table_m10_g0():
    return build_policy_table(10, 0.0, n_max=40)


@pytest.fixture(scope="session")
def table_m10_g04():
    return build_policy_table(10, 0.4, n_max=40)
