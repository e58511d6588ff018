import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

# TestTable is a data type, not a test class
from avtestbed.covering import TestTable

TestTable.__test__ = False

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")


@pytest.fixture
def fixtures_dir() -> str:
    return FIXTURES


@pytest.fixture
def demo_scenario_path() -> str:
    return os.path.join(FIXTURES, "demo_scenario.json")


@pytest.fixture
def ca_csv_path() -> str:
    return os.path.join(FIXTURES, "ca_2way.csv")
