import pytest

collect_ignore = ["examples"]


def pytest_addoption(parser):
    parser.addoption("--run-slow", action="store_true", default=False, help="Run full-size reproduction checks")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full-size (n = 5000) reproduction checks")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--run-slow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --run-slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)
