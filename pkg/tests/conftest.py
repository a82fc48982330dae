import random

import pytest

from colonygraph.abm import (
    TABLE2_PARAMS,
    InitialCondition,
    Site,
    WorldConfig,
    make_initial_condition,
    run_simulation,
)


def two_site_world(q=(0.9, 0.6), d=100.0, K=10, **kw):
    sites = (Site(0, (d, 0.0), q[0]), Site(1, (-d, 0.0), q[1]))
    return WorldConfig(sites=sites, num_agents=K, **kw)


def sim(world, seed=0, kind=InitialCondition.ALL_OBSERVE, params=TABLE2_PARAMS):
    colony = make_initial_condition(kind, world, random.Random(seed), params)
    return run_simulation(world, params, colony, seed)


@pytest.fixture
def world():
    return two_site_world()


@pytest.fixture(scope="session")
def small_corpus():
    """Ten short recorded trials on one world (for graph and analysis tests)."""
    w = two_site_world(K=5, max_ticks=400)
    kinds = list(InitialCondition)
    return w, [sim(w, seed=s, kind=kinds[s % 3]) for s in range(10)]


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion(request):
    """Record a one-line verdict for an acceptance criterion."""

    def record(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} | {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
