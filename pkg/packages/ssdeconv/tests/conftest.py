# Copyright (c) 2025 Apple Inc. Licensed under MIT License.

import pytest


def pytest_addoption(parser):
    parser.addoption(
        "--run-slow",
        action="store_true",
        default=False,
        help="Run the replicated benchmark reproductions (minutes to hours).",
    )


def pytest_collection_modifyitems(config, items):
    if config.getoption("--run-slow"):
        return
    skip = pytest.mark.skip(reason="needs --run-slow to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture(autouse=True)
def isolated_cache(tmp_path, monkeypatch):
    """Keep Monte Carlo truth caches out of the user's cache directory."""
    monkeypatch.setenv("SSDECONV_CACHE_DIR", str(tmp_path / "ssdeconv-cache"))
