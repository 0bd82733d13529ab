import json

import pytest

from maps import MapSpec
from rds import PerturbationSpec, RdsConfig


def rational_a_maps() -> tuple[MapSpec, MapSpec]:
    return MapSpec.rational(1.1, 2.0, 3.0, name="f"), MapSpec.rational(1.3, 1.0, 3.3, name="g")


def rational_b_maps() -> tuple[MapSpec, MapSpec]:
    return MapSpec.rational(1.1, 1.05, 2.8, name="f"), MapSpec.rational(1.3, 1.0, 2.9, name="g")


def increasing_maps() -> tuple[MapSpec, MapSpec]:
    # A_f = 0.5 < A_g = 0.6 < K_f = 2.0 < K_g = 2.4 on [0, 3]
    return MapSpec.sigmoid(2.5, 1.0, name="f"), MapSpec.sigmoid(3.0, 1.44, name="g")


INCREASING_DELTA = 0.05


@pytest.fixture
def rat_a_maps():
    return rational_a_maps()


@pytest.fixture
def rat_b_maps():
    return rational_b_maps()


@pytest.fixture
def inc_maps():
    return increasing_maps()


@pytest.fixture
def rat_a_config():
    return RdsConfig.build(*rational_a_maps(), 0.5)


@pytest.fixture
def rat_b_config():
    return RdsConfig.build(*rational_b_maps(), 0.5)


@pytest.fixture
def inc_config():
    return RdsConfig.build(*increasing_maps(), 0.5)


@pytest.fixture
def noisy_inc_config():
    return RdsConfig.build(*increasing_maps(), 0.5, PerturbationSpec(INCREASING_DELTA))


@pytest.fixture
def write_system(tmp_path):
    """Write a system config dict to a JSON file and return its path."""
    def _write(data: dict, name: str = "system.json") -> str:
        path = tmp_path / name
        path.write_text(json.dumps(data), encoding="utf-8")
        return str(path)
    return _write


RATIONAL_A_SYSTEM = {
    "f": {"family": "rational_unimodal", "G": 1.1, "bp": 2.0, "T": 3.0},
    "g": {"family": "rational_unimodal", "G": 1.3, "bp": 1.0, "T": 3.3},
    "p": 0.5,
}

RATIONAL_B_SYSTEM = {
    "f": {"family": "rational_unimodal", "G": 1.1, "bp": 1.05, "T": 2.8},
    "g": {"family": "rational_unimodal", "G": 1.3, "bp": 1.0, "T": 2.9},
    "p": 0.5,
}

INCREASING_SYSTEM = {
    "f": {"family": "sigmoid", "rho": 2.5, "a": 1.0},
    "g": {"family": "sigmoid", "rho": 3.0, "a": 1.44},
    "p": 0.5,
}
