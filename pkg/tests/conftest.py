import pytest

from sphere_rigidity import build_grid


@pytest.fixture(scope="session")
def grid16():
    return build_grid(16, 32)


@pytest.fixture(scope="session")
def grid24():
    return build_grid(24, 48)


@pytest.fixture(scope="session")
def grid32():
    return build_grid(32, 64)


@pytest.fixture(scope="session")
def grid48():
    return build_grid(48, 96)
