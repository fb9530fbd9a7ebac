import pytest

from src.core.dataset import Dataset
from src.core.schema import Kind
from src.nuisance.cross_fit import NuisanceConfig
from src.scm.sampler import sample
from src.scm.spec import reference_spec
from tests.helpers import LINEAR, make_schema


@pytest.fixture(autouse=True)
def no_run_log(monkeypatch):
    """Keep the JSON run log out of the working tree."""
    monkeypatch.setenv("CFA_LOG_FILE", "")


@pytest.fixture(scope="session")
def desk1():
    return reference_spec("desk-1")


@pytest.fixture(scope="session")
def null1():
    return reference_spec("null-1")


@pytest.fixture(scope="session")
def desk1_data(desk1):
    return sample(desk1, 20000, seed=11)


@pytest.fixture(scope="session")
def desk1_large(desk1):
    return sample(desk1, 100000, seed=12)


@pytest.fixture(scope="session")
def null1_data(null1):
    return sample(null1, 10000, seed=13)


@pytest.fixture(scope="session")
def linear_nuisance():
    return NuisanceConfig(outcome=LINEAR, propensity=LINEAR, mediator_odds=LINEAR, nested=LINEAR)


@pytest.fixture
def tiny_dataset():
    """Ten complete rows over x, ses (Q1..Q3), female, club, y."""
    schema = make_schema(
        confounders=[("ses", Kind.CATEGORICAL, ("Q1", "Q2", "Q3")), ("female", Kind.BINARY)],
        mediators=[("club", Kind.BINARY)],
    )
    return Dataset.from_columns(schema, {
        "x": [0, 1, 0, 1, 0, 1, 0, 1, 0, 1],
        "ses": ["Q1", "Q2", "Q3", "Q1", "Q2", "Q3", "Q1", "Q2", "Q3", "Q1"],
        "female": [0, 0, 1, 1, 0, 1, 0, 1, 1, 0],
        "club": [1, 0, 0, 1, 1, 0, 1, 0, 0, 1],
        "y": [0.5, 1.5, 2.0, -0.3, 0.8, 1.1, 0.0, 0.2, 1.7, 0.9],
    })
