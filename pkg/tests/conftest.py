import pytest

from e2sec import config as C
from e2sec.cli import _train


@pytest.fixture(scope="session")
def default_cfg():
    return C.load_config()


@pytest.fixture(scope="session")
def trained(default_cfg):
    """(dataset, autoencoder) from the shipped defaults, master seed 0."""
    return _train(default_cfg)


def pytest_terminal_summary(terminalreporter):
    from tests import acceptance_log

    if not acceptance_log.LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in acceptance_log.LINES:
        terminalreporter.write_line(line)
