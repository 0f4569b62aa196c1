import functools
import re

import pytest
from hypothesis import HealthCheck, settings

from hdm.discretisation import build_discretisation, mesh_kind_for
from hdm.mesh import build_mesh

settings.register_profile("default", max_examples=50, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@functools.lru_cache(maxsize=None)
def cached_hd(method, level, domain="square", pattern="diagonal"):
    return build_discretisation(method, build_mesh(domain, mesh_kind_for(method), level, pattern))


@pytest.fixture
def hd_factory():
    return cached_hd


ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES, key=lambda s: (int(re.match(r"\d+", s).group()), s)):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
