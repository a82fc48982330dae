import math
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from colonygraph.abm import (
    A, E, HUB, O, R, T_HO, T_HR, T_S, TABLE2_PARAMS, TRAVEL_STATES,
    Agent, AgentState, InitialCondition, InvariantViolation, Site, TransitionParams,
    WorldConfig, check_quorum, compute_gamma, compute_x, experiment1_world,
    make_initial_condition, place_sites, run_simulation, sample_qualities,
    sample_recruitment, step_agent, validate_agent,
)
from colonygraph.io import trajectory_lines

from conftest import sim, two_site_world


def test_seven_states():
    assert len(AgentState) == 7
    assert {s.value for s in AgentState} == {"O", "E", "A", "R", "T_HO", "T_HR", "T_S"}


# -- compute_x / compute_gamma ---------------------------------------------

def test_compute_x_examples():
    assert compute_x(0.0) == pytest.approx(2 / 3, abs=1e-12)
    # oracle: 2 / (2 + e^-7) and 2 / (2 + e^-3.5) evaluated independently
    assert compute_x(1.0) == pytest.approx(2 / (2 + np.exp(-7.0)), abs=1e-15)
    assert compute_x(1.0) == pytest.approx(0.999544, abs=1e-6)
    assert compute_x(0.5) == pytest.approx(2 / (2 + np.exp(-3.5)), abs=1e-15)
    # the quoted 0.985139 is off in the fifth decimal; direct evaluation is 0.985126
    assert compute_x(0.5) == pytest.approx(0.985139, abs=2e-5)


@pytest.mark.parametrize("q", [-0.01, 1.01, -5])
def test_compute_x_domain(q):
    with pytest.raises(ValueError):
        compute_x(q)


def test_compute_gamma_examples():
    assert compute_gamma(1.0) == 1.0
    assert compute_gamma(0.25) == 0.5
    assert compute_gamma(0.64) == pytest.approx(0.8)
    assert TABLE2_PARAMS.reassess_budget(0.64) == 2
    assert TABLE2_PARAMS.reassess_budget(1.0) == 3
    # floor of one trip for any positive quality
    assert TABLE2_PARAMS.reassess_budget(0.01) == 1
    with pytest.raises(ValueError):
        compute_gamma(-0.1)


def test_recruiting_pressure_monotone():
    grid = np.linspace(0.0, 1.0, 1001)[1:]
    xs = [compute_x(q) for q in grid]
    gs = [compute_gamma(q) for q in grid]
    assert all(b > a for a, b in zip(xs, xs[1:]))
    assert all(b > a for a, b in zip(gs, gs[1:]))
    assert all(2 / 3 < x < 1 for x in xs)


# -- sample_recruitment -------------------------------------------------------

def test_recruitment_no_recruiters():
    assert sample_recruitment(7, {}, random.Random(0)) == [None] * 7
    assert sample_recruitment(3, {0: 0, 1: 0}, random.Random(0)) == [None] * 3


def test_recruitment_probability_monte_carlo():
    n = 1_000_000
    draws = sample_recruitment(n, {0: 6, 1: 4}, random.Random(11))
    hits = sum(d is not None for d in draws)
    p = 1 - 0.9 ** 10
    assert p == pytest.approx(0.6513, abs=1e-4)
    sigma = math.sqrt(p * (1 - p) / n)
    assert abs(hits / n - p) < 3 * sigma
    # site choice proportional to recruiters: 6 of 10 for site 0
    share0 = sum(d == 0 for d in draws) / hits
    assert abs(share0 - 0.6) < 3 * math.sqrt(0.24 / hits)


def test_recruitment_single_site():
    draws = sample_recruitment(2000, {1: 4}, random.Random(3))
    assert {d for d in draws} <= {None, 1}
    assert any(d == 1 for d in draws)


def test_recruitment_negative_counts():
    with pytest.raises(ValueError):
        sample_recruitment(1, {0: -1}, random.Random(0))


# -- step_agent -------------------------------------------------------------

def test_travel_site_arrival(world):
    s = world.site(0)
    a = Agent(3, T_S, s.position, favored_site=0, reassess_remaining=2, target=s.position)
    b = step_agent(a, (a,), world, TABLE2_PARAMS, random.Random(0))
    assert b.state is A and b.favored_site == 0 and b.position == s.position


def test_observe_stays_when_nothing_fires(world):
    params = TransitionParams(p1=0.0)
    a = Agent(0, O)
    b = step_agent(a, (a,), world, params, random.Random(0))
    assert b.state is O and b.position == HUB


def test_explorer_discovers_perfect_site():
    w = WorldConfig(sites=(Site(0, (50.0, 0.0), 1.0),), num_agents=1)
    a = Agent(0, E, (49.0, 0.0), heading=0.0)
    params = TransitionParams(heading_noise=0.0)
    b = step_agent(a, (a,), w, params, random.Random(0))
    assert b.state is A and b.favored_site == 0
    assert b.reassess_remaining == 3


def test_recruit_without_site_is_invalid(world):
    a = Agent(0, R)
    with pytest.raises(InvariantViolation):
        step_agent(a, (a,), world, TABLE2_PARAMS, random.Random(0))


@pytest.mark.parametrize("agent", [
    Agent(0, O, favored_site=0),
    Agent(0, O, reassess_remaining=1),
    Agent(0, A, (100.0, 0.0), favored_site=7),
    Agent(0, E, (2000.0, 0.0)),
    Agent(0, T_HO, (5.0, 0.0)),
])
def test_invalid_agents(world, agent):
    with pytest.raises(InvariantViolation):
        validate_agent(agent, world)


def test_recruit_bout_end_paths(world):
    # x(q) < 1, so a bout eventually ends; with budget 0 the agent abandons
    rng = random.Random(5)
    a = Agent(0, R, HUB, favored_site=1, reassess_remaining=0)
    for _ in range(10_000):
        a = step_agent(a, (a,), world, TABLE2_PARAMS, rng)
        if a.state is not R:
            break
    assert a.state is O and a.favored_site is None
    # with budget and p2 = 1 the agent heads back to reassess, spending one trip
    params = TransitionParams(p2=1.0)
    a = Agent(0, R, HUB, favored_site=1, reassess_remaining=2)
    for _ in range(10_000):
        a = step_agent(a, (a,), world, params, rng)
        if a.state is not R:
            break
    assert a.state is T_S and a.reassess_remaining == 1 and a.target == world.site(1).position


def test_observer_recruited_travels_to_site(world):
    recruiter = Agent(1, R, HUB, favored_site=1, reassess_remaining=2)
    params = TransitionParams(recruit_pull_rate=1.0)
    b = step_agent(Agent(0, O), (Agent(0, O), recruiter), world, params, random.Random(0))
    assert b.state is T_S and b.favored_site == 1 and b.target == world.site(1).position
    assert b.reassess_remaining == params.reassess_budget(0.6)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 2 * math.pi), st.floats(3.0, 600.0), st.sampled_from([T_S, T_HR, T_HO]))
def test_travel_determinism(angle, dist, state):
    w = two_site_world()
    start = (dist * math.cos(angle), dist * math.sin(angle))
    if state is T_HO:
        a = Agent(0, T_HO, start, target=HUB)
    else:
        tgt = HUB if state is T_HR else w.site(0).position
        a = Agent(0, state, start, favored_site=0, reassess_remaining=1, target=tgt)
    rng = random.Random(0)
    arrive = {T_S: A, T_HR: R, T_HO: O}[state]
    for _ in range(2000):
        near = math.dist(a.position, a.target) <= w.agent_speed
        b = step_agent(a, (a,), w, TABLE2_PARAMS, rng)
        if near:
            assert b.state is arrive
            return
        assert b.state is state
        a = b
    pytest.fail("never arrived")


# -- check_quorum -------------------------------------------------------------

def _recruiters(n, site, pos=HUB):
    return [Agent(i, R, pos, favored_site=site, reassess_remaining=1) for i in range(n)]


def test_quorum_examples():
    w10 = two_site_world(K=10)
    col = _recruiters(6, 0) + [Agent(i, O) for i in range(6, 10)]
    assert w10.quorum_threshold == 6
    assert check_quorum(col, w10) == 0
    assert check_quorum(_recruiters(5, 0) + [Agent(i, O) for i in range(5, 10)], w10) is None
    w5 = two_site_world(K=5)
    assert w5.quorum_threshold == 3
    assert check_quorum(_recruiters(2, 1) + [Agent(i, O) for i in range(2, 5)], w5) is None
    at_site = _recruiters(6, 0, pos=w10.site(0).position)
    assert check_quorum(at_site, w10) is None


# -- run_simulation -----------------------------------------------------------

def test_immediate_convergence():
    w = two_site_world(K=10)
    col = _recruiters(6, 1) + [Agent(i, O) for i in range(6, 10)]
    tr = run_simulation(w, TABLE2_PARAMS, col, 1)
    assert tr.ticks_elapsed == 0 and tr.outcome == 1 and len(tr.snapshots) == 1


def test_absorbing_configuration_times_out():
    w = two_site_world(K=5, max_ticks=300)
    params = TransitionParams(p1=0.0, p3=0.0)
    tr = run_simulation(w, params, [Agent(i, O) for i in range(5)], 9)
    assert tr.timed_out and tr.ticks_elapsed == 300
    assert all(a.state is O for snap in tr.snapshots for a in snap)


def test_seed_determinism():
    w = two_site_world(K=10, max_ticks=1500)
    t1, t2 = sim(w, seed=42), sim(w, seed=42)
    assert list(trajectory_lines(t1, w)) == list(trajectory_lines(t2, w))
    t3 = sim(w, seed=43)
    assert list(trajectory_lines(t1, w)) != list(trajectory_lines(t3, w))


def test_invalid_initial_state():
    w = two_site_world(K=3)
    with pytest.raises(ValueError):
        run_simulation(w, TABLE2_PARAMS, [Agent(0, O), Agent(1, O)], 0)
    with pytest.raises(ValueError):
        run_simulation(w, TABLE2_PARAMS, [Agent(0, O), Agent(0, O), Agent(2, O)], 0)
    with pytest.raises(InvariantViolation):
        run_simulation(w, TABLE2_PARAMS, [Agent(0, O), Agent(1, O), Agent(2, A)], 0)


def test_closure_conservation_and_quorum_soundness():
    """Fuzz: about 10^6 agent steps across many trials and initial conditions."""
    steps = 0
    seed = 0
    kinds = list(InitialCondition)
    while steps < 1_000_000:
        K = 5 if seed % 2 else 10
        w = two_site_world(q=(0.6 + 0.03 * (seed % 10), 0.55), K=K, max_ticks=2000)
        tr = sim(w, seed=seed, kind=kinds[seed % 4])
        for snap in tr.snapshots:
            assert len(snap) == K and len({a.id for a in snap}) == K
            for a in snap:
                validate_agent(a, w)
        steps += K * tr.ticks_elapsed
        assert tr.ticks_elapsed <= w.max_ticks
        if tr.outcome is None:
            assert tr.ticks_elapsed == w.max_ticks
        else:
            assert check_quorum(tr.final, w) == tr.outcome
        seed += 1


# -- initial conditions and world setup ----------------------------------------

def test_initial_conditions():
    w5 = two_site_world(K=5)
    c = make_initial_condition(InitialCondition.ALL_OBSERVE, w5, random.Random(0))
    assert len(c) == 5 and all(a.state is O and a.position == HUB for a in c)

    w10 = two_site_world(K=10, q=(0.9, 0.6))
    c = make_initial_condition(InitialCondition.HALF_EXPLORE_HALF_OBSERVE, w10, random.Random(0))
    assert sum(a.state is E for a in c) == 5 and sum(a.state is O for a in c) == 5
    assert all(math.hypot(*a.position) <= w10.max_distance for a in c)

    c = make_initial_condition(InitialCondition.NINETY_OBSERVE_TEN_RECRUIT_WORST, w10, random.Random(0))
    rec = [a for a in c if a.state is R]
    assert len(rec) == 1 and rec[0].favored_site == 1 and rec[0].position == HUB
    assert sum(a.state is O for a in c) == 9


def test_recruit_condition_needs_sites():
    w = WorldConfig(sites=(), num_agents=4)
    with pytest.raises(ValueError):
        make_initial_condition(InitialCondition.NINETY_OBSERVE_TEN_RECRUIT_WORST, w, random.Random(0))


def test_random_states_are_valid():
    w = experiment1_world()
    for s in range(200):
        c = make_initial_condition(InitialCondition.RANDOM_STATES, w, random.Random(s))
        for a in c:
            validate_agent(a, w)


def test_place_sites_geometry():
    sites = place_sites((0.9, 0.7, 0.6), 150.0, random.Random(2))
    assert [s.id for s in sites] == [0, 1, 2]
    for s in sites:
        assert math.hypot(*s.position) == pytest.approx(150.0)
    angles = sorted(math.atan2(s.position[1], s.position[0]) % (2 * math.pi) for s in sites)
    gaps = np.diff(angles + [angles[0] + 2 * math.pi])
    assert np.allclose(gaps, 2 * math.pi / 3)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 4), st.integers(0, 2**32))
def test_sample_qualities_constraints(n, seed):
    qs = sample_qualities(n, random.Random(seed))
    assert len(qs) == n
    assert min(qs) > 0.5 and max(qs) <= 1.0
    assert max(qs) - min(qs) < 0.5


def test_world_validation():
    with pytest.raises(ValueError):
        WorldConfig(sites=(Site(0, (2000.0, 0.0), 0.9),))
    with pytest.raises(ValueError):
        WorldConfig(sites=(), quorum_fraction=1.0)
    with pytest.raises(ValueError):
        Site(0, (0.0, 0.0), 0.0)


def test_travel_states_constant():
    assert TRAVEL_STATES == {T_HO, T_HR, T_S}
