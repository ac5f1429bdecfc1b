import json
from pathlib import Path

import pytest

from safelq import build_problem

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


def load_config(name: str) -> dict:
    return json.loads((CONFIG_DIR / name).read_text())


def load_spec(name: str):
    return build_problem(load_config(name))


@pytest.fixture(scope="session")
def scalar_spec():
    return load_spec("scalar_demo.json")


@pytest.fixture(scope="session")
def cubic_spec():
    return load_spec("cubic_demo.json")


@pytest.fixture(scope="session")
def timevarying_spec():
    return load_spec("timevarying_demo.json")


@pytest.fixture(scope="session")
def expk_spec():
    return load_spec("expk_demo.json")


@pytest.fixture(scope="session")
def ball2d_spec():
    return load_spec("ball2d_demo.json")


@pytest.fixture(scope="session")
def geometric_spec():
    return load_spec("geometric_ball.json")


@pytest.fixture(scope="session")
def outward_spec():
    return load_spec("outward_drift.json")
