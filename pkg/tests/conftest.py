from pathlib import Path

import pytest

from problem import load_instance

INSTANCES = Path(__file__).resolve().parent.parent / "instances"
EXPERIMENTS = Path(__file__).resolve().parent.parent / "experiments"


@pytest.fixture(scope="session")
def toy4():
    return load_instance(INSTANCES / "toy4.toml")


@pytest.fixture(scope="session")
def eighth89():
    return load_instance(INSTANCES / "89-eighth.toml")
