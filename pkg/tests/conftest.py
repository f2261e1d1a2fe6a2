import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

import schema  # noqa: E402
from scenario import Scenario, static_trace  # noqa: E402


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow acceptance tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running acceptance test, needs --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def isolated_env(monkeypatch, tmp_path):
    monkeypatch.delenv("OLSRTUNE_DATABASE_URL", raising=False)
    monkeypatch.setenv("OLSRTUNE_OUT_DIR", str(tmp_path / "default-out"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_static_scenario(positions, flows=(), duration=180.0, radio_range=500.0, name="static", **kwargs):
    xs = [p[0] for p in positions]
    ys = [p[1] for p in positions]
    area = schema.Area(width=max(max(xs), 1.0), height=max(max(ys), 1.0))
    return Scenario(
        area=area,
        trace=static_trace(positions, duration),
        flows=tuple(flows),
        radio_range=radio_range,
        sim_duration=duration,
        name=name,
        **kwargs,
    )


@pytest.fixture
def two_node_scenario():
    flow = schema.CbrFlow(source=0, destination=1, start=20.0, duration=10.0, rate=4.0)
    return make_static_scenario([(0.0, 0.0), (100.0, 0.0)], flows=[flow], duration=40.0)


@pytest.fixture
def chain_scenario():
    """Four nodes in a line, each only in range of its direct neighbours."""
    flow = schema.CbrFlow(source=0, destination=3, start=30.0, duration=20.0, rate=2.0)
    positions = [(0.0, 0.0), (400.0, 0.0), (800.0, 0.0), (1200.0, 0.0)]
    return make_static_scenario(positions, flows=[flow], duration=60.0)
