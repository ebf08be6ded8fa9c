import pytest

from painter_atlas.corpus import generate_fixture
from painter_atlas.labels import builtin_taxonomy, default_table


@pytest.fixture(scope="session")
def taxonomy():
    return builtin_taxonomy()


@pytest.fixture(scope="session")
def table():
    return default_table()


@pytest.fixture(scope="session")
def fixture_corpus():
    return generate_fixture(7, 60, (900, 1900))
