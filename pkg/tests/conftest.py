import pytest


def pytest_addoption(parser):
    parser.addoption("--run-extended", action="store_true", default=False,
                     help="run the slow, non-CI extended tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--run-extended"):
        return
    skip = pytest.mark.skip(reason="extended test; use --run-extended")
    for item in items:
        if "extended" in item.keywords:
            item.add_marker(skip)
