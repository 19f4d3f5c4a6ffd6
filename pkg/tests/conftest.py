import sys
from fractions import Fraction
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from idsbench.orchestrator import DeploymentProfile  # noqa: E402


@pytest.fixture
def fast_profile():
    """Mock deployment compressed to 0.2 real seconds per logical minute."""
    return DeploymentProfile(time_compress=Fraction(1, 5), resting_seconds=Fraction(1),
                             ready_timeout=Fraction(60))
