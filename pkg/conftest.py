import os

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.register_profile("ci", parent=settings.get_profile("default"), max_examples=200, derandomize=True)
settings.load_profile(os.getenv("HYPOTHESIS_PROFILE", "default"))


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="ejecuta las pruebas marcadas como slow")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: corridas largas (escala completa o datos externos)")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="requiere --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def _isolated_env(monkeypatch):
    """Las variables PTG_* del entorno local no afectan las pruebas."""
    for name in ("PTG_WORKERS", "PTG_CONFIG", "PTG_LOG_LEVEL"):
        monkeypatch.delenv(name, raising=False)
