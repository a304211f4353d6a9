import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fixtures import (  # noqa: E402
    EC2_POLICY_JSON,
    GOLDEN_FORMAL_STATEMENT,
    GOLDEN_PROOF_BODY,
    GOLDEN_PROOF_WRAPPED,
    accepting_mock,
)


@pytest.fixture
def ec2_policy():
    from proofseek.policy import parse_policy
    return parse_policy(EC2_POLICY_JSON, source_name="ec2_sample")


@pytest.fixture
def golden_statement():
    return GOLDEN_FORMAL_STATEMENT


@pytest.fixture
def golden_proof_body():
    return GOLDEN_PROOF_BODY


@pytest.fixture
def golden_proof_wrapped():
    return GOLDEN_PROOF_WRAPPED


@pytest.fixture
def golden_mock():
    """Prover mock accepting every step of the golden proof."""
    return accepting_mock([GOLDEN_PROOF_BODY])
