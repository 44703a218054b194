"""
Module for setting up pytest fixtures
"""

from unittest import mock

import pytest
from pytest_factoryboy import register

import tests.fixtures.factories as factories
from dedem import environment
from dedem.environment import Settings


class FilteredLogCaptureFixture(pytest.LogCaptureFixture):
    """A custom implementation to simplify capture
    of logs for a particular logger."""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.logger_name = ""  # root (all)

    @property
    def records(self):
        """Return filtered list of messages"""
        return [
            r
            for r in super().records
            if not self.logger_name or r.name == self.logger_name
        ]

    def for_logger(self, logger_name):
        """Specify logger to filter captured messages"""
        self.logger_name = logger_name
        return self


@pytest.fixture()
def capturelogs(request):
    """A custom log capture that can filter on logger name."""
    result = FilteredLogCaptureFixture(request.node)
    yield result
    result._finalize()


@pytest.fixture(autouse=True)
def mocked_statsd():
    with mock.patch("dedem.common.instrument.statsd") as _mocked_statsd:
        yield _mocked_statsd


@pytest.fixture(autouse=True)
def fresh_settings():
    environment.get_settings.cache_clear()
    yield
    environment.get_settings.cache_clear()


register(factories.DomainFactory)
register(factories.MaterialFactory)
register(factories.CrackPathFactory)
register(factories.CrackSectionFactory)
register(factories.NetConfigFactory)
register(factories.TrainConfigFactory)
register(factories.GridConfigFactory)
register(factories.CodSampleFactory)
register(factories.ScenarioFactory, "_scenario")


@pytest.fixture
def settings():
    """A test Settings object"""
    return Settings()


@pytest.fixture
def scenario(scenario_factory):
    """Half plate with an edge crack of length 0.5 on x2 = 0, coarse grid, tiny network."""
    return scenario_factory()


@pytest.fixture
def uncracked_scenario(scenario_factory):
    return scenario_factory(crack={})
