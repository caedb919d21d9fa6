import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))


def pytest_addoption(parser):
    parser.addoption(
        "--run-stretch", action="store_true", default=False,
        help="run resource-heavy stretch tests (7-party LP)")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--run-stretch") or os.environ.get("RANDAMP_STRETCH"):
        return
    skip = pytest.mark.skip(reason="stretch test; use --run-stretch")
    for item in items:
        if "stretch" in item.keywords:
            item.add_marker(skip)


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "stretch: resource-heavy tests gated behind --run-stretch")
