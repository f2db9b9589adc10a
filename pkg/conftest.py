from pathlib import Path

import pytest

from plant_model import ElementKind, TransferElement, TransferMatrix, load_plant_file

PLANTS_DIR = Path(__file__).parent / "plants"


@pytest.fixture(scope="session")
def radiator_path() -> Path:
    return PLANTS_DIR / "radiator_plant.json"


@pytest.fixture(scope="session")
def radiator(radiator_path) -> TransferMatrix:
    return load_plant_file(radiator_path)


@pytest.fixture
def single_loop() -> TransferMatrix:
    """1x1 plant 2 e^(-s) / (10 s + 1)."""
    el = TransferElement(ElementKind.FOPDT, 2.0, 10.0, 1.0)
    return TransferMatrix("single", ("Y1",), ("U1",), ((el,),))
