"""Shared fixtures for the DMC simulator tests."""

import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parent.parent
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from dmc_sim.config import apply_overrides, load_scenario  # noqa: E402
from dmc_sim.models import ScenarioConfig  # noqa: E402
from dmc_sim.scenario import CANONICAL_CASES, calibrate_operating_point, run  # noqa: E402

CONFIG_DIR = ROOT / "configs"

# Scenario tests run at a coarser step to keep the suite quick.
TEST_DT = 200e-6


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full-resolution runs; deselect with -m 'not slow'")


@pytest.fixture
def default_config() -> ScenarioConfig:
    return ScenarioConfig()


@pytest.fixture
def plant_params(default_config):
    return calibrate_operating_point(default_config)


@pytest.fixture
def config_dir() -> Path:
    return CONFIG_DIR


def load_case(name: str, **overrides) -> ScenarioConfig:
    config = apply_overrides(load_scenario(CONFIG_DIR / f"{name}.cfg"), dt=TEST_DT)
    if overrides:
        config = config.model_copy(update=overrides)
    return config


@pytest.fixture(scope="session")
def canonical_runs():
    """The four shipped cases, simulated once per session at TEST_DT."""
    return {name: run(load_case(name)) for name in CANONICAL_CASES}
