import pytest

from mkmsim import IpRegistry, Simulator, genesis_keypairs, load_bundled, run_scenario


@pytest.fixture
def sim():
    return Simulator(seed=0)


@pytest.fixture(scope="session")
def keypairs():
    return genesis_keypairs(0)


@pytest.fixture(scope="session")
def registry(keypairs):
    return IpRegistry.from_keypairs(keypairs)


@pytest.fixture(scope="session")
def tls_run():
    """One shared happy-path run; treat as read-only."""
    return run_scenario(load_bundled("tls_lifecycle"))
