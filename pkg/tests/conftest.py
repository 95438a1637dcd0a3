import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from coexsim import table1_params, validate, slicing_plan, sharing_plan


@pytest.fixture
def slicing_half():
    """Default constants, orthogonal split with half the band for IoT."""
    params = table1_params(num_iot=10)
    return validate(params, slicing_plan(params.bandwidth_total,
                                         params.bandwidth_total / 2))


@pytest.fixture
def sharing_full():
    params = table1_params(num_iot=10)
    return validate(params, sharing_plan(params.bandwidth_total))
