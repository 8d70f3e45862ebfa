from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from convoforge.personas import load_registry

REPO_ROOT = Path(__file__).resolve().parent.parent
PERSONAS_TOML = REPO_ROOT / "configs" / "personas.toml"

# Audio-heavy property tests blow the default 200 ms deadline on slow runners;
# correctness here never depends on wall time.
settings.register_profile(
    "convoforge", deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("convoforge")


@pytest.fixture(scope="session")
def registry():
    return load_registry(PERSONAS_TOML)


@pytest.fixture(scope="session")
def personas_path():
    return str(PERSONAS_TOML)
