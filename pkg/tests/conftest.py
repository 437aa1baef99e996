import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from lpforge.modelgen import paper_flow_instance


@pytest.fixture
def flow_fixture():
    """The worked 4-node minimum-cost-flow instance."""
    return paper_flow_instance()


@pytest.fixture
def fixtures_dir():
    return Path(__file__).parent / "fixtures"
