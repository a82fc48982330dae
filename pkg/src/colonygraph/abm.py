"""Agent-based model of a hub colony solving the best-of-N site selection problem.

Every agent runs the same seven-state Markov machine. All agents are updated
synchronously from the previous tick's snapshot, so the result of a tick does
not depend on the order in which agents are visited (only the RNG stream does,
and that order is fixed by agent id).
"""

from __future__ import annotations

import enum
import math
import random
from dataclasses import dataclass, field
from typing import Sequence


class InvariantViolation(ValueError):
    """An agent record is internally inconsistent."""


class AgentState(enum.Enum):
    OBSERVE = "O"
    EXPLORE = "E"
    ASSESS = "A"
    RECRUIT = "R"
    TRAVEL_HUB_OBSERVE = "T_HO"
    TRAVEL_HUB_RECRUIT = "T_HR"
    TRAVEL_SITE = "T_S"


O = AgentState.OBSERVE
E = AgentState.EXPLORE
A = AgentState.ASSESS
R = AgentState.RECRUIT
T_HO = AgentState.TRAVEL_HUB_OBSERVE
T_HR = AgentState.TRAVEL_HUB_RECRUIT
T_S = AgentState.TRAVEL_SITE

SITE_ORIENTED = frozenset({A, R, T_HR, T_S})
TRAVEL_STATES = frozenset({T_HO, T_HR, T_S})

HUB = (0.0, 0.0)


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class Site:
    id: int
    position: tuple[float, float]
    quality: float

    def __post_init__(self):
        if not 0.0 < self.quality <= 1.0:
            raise ValueError(f"site quality must lie in (0, 1], got {self.quality}")


@dataclass(slots=True)
class Agent:
    """One colony member. Treated as immutable once placed in a snapshot."""

    id: int
    state: AgentState
    position: tuple[float, float] = HUB
    heading: float = 0.0
    favored_site: int | None = None
    reassess_remaining: int = 0
    target: tuple[float, float] | None = None

    def as_tuple(self):
        return (self.id, self.state.value, self.position, self.heading,
                self.favored_site, self.reassess_remaining, self.target)


Snapshot = Sequence[Agent]


@dataclass(frozen=True)
class WorldConfig:
    sites: tuple[Site, ...]
    num_agents: int = 10
    max_distance: float = 1000.0
    quorum_fraction: float = 0.5
    max_ticks: int = 1000
    agent_speed: float = 2.0
    site_radius: float = 10.0
    rng_seed: int = 0
    # absolute quorum size; overrides the tau*K rule when set
    quorum_count: int | None = None
    hub_position: tuple[float, float] = HUB

    def __post_init__(self):
        object.__setattr__(self, "sites", tuple(self.sites))
        if self.num_agents < 1:
            raise ValueError("num_agents must be >= 1")
        if self.max_distance <= 0:
            raise ValueError("max_distance must be positive")
        if not 0.0 < self.quorum_fraction < 1.0:
            raise ValueError("quorum_fraction must lie in (0, 1)")
        if self.hub_position != HUB:
            raise ValueError("the hub sits at the origin")
        for s in self.sites:
            if math.hypot(*s.position) > self.max_distance:
                raise ValueError(f"site {s.id} lies beyond max_distance")
        ids = [s.id for s in self.sites]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate site ids")

    @property
    def quorum_threshold(self) -> int:
        """Smallest integer strictly greater than tau*K (or the fixed count)."""
        if self.quorum_count is not None:
            return self.quorum_count
        return math.floor(self.quorum_fraction * self.num_agents) + 1

    def site(self, site_id: int) -> Site:
        for s in self.sites:
            if s.id == site_id:
                return s
        raise KeyError(f"unknown site id {site_id}")

    @property
    def qualities(self) -> tuple[float, ...]:
        return tuple(s.quality for s in self.sites)

    @property
    def best_site(self) -> int:
        return max(self.sites, key=lambda s: (s.quality, -s.id)).id


@dataclass(frozen=True)
class TransitionParams:
    """Per-tick transition probabilities.

    ``recruit_model`` selects the per-tick probability of continuing a
    recruitment bout: ``"logistic"`` is x(q) = 2/(2 + exp(-7q)), ``"dwell"`` is
    1 - 1/(dwell_scale*q), i.e. a bout with mean length dwell_scale*q ticks.
    ``explore_stop_fraction`` replaces the p3 exit by a deterministic return
    once an explorer is that fraction of max_distance away from the hub.
    """

    p1: float = 0.01
    p2: float = 0.99
    p3: float = 0.02
    p4: float = 0.1
    recruit_pull_rate: float = 0.1
    gamma_exponent: float = 0.5
    reassess_scale: float = 3.0
    recruit_model: str = "logistic"
    dwell_scale: float = 6.0
    explore_stop_fraction: float | None = None
    heading_noise: float = 0.3

    def __post_init__(self):
        for name in ("p1", "p2", "p3", "p4", "recruit_pull_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be a probability, got {v}")
        if self.reassess_scale <= 0:
            raise ValueError("reassess_scale must be positive")
        if self.recruit_model not in ("logistic", "dwell"):
            raise ValueError(f"unknown recruit_model {self.recruit_model!r}")

    def recruit_continue(self, q: float) -> float:
        if self.recruit_model == "logistic":
            return compute_x(q)
        mean = self.dwell_scale * q
        return 0.0 if mean <= 1.0 else 1.0 - 1.0 / mean

    def discover(self, q: float, at_site: bool) -> float:
        return q if at_site else 0.0

    def reassess_budget(self, q: float) -> int:
        if q <= 0:
            return 0
        return max(1, round_half_up(self.reassess_scale * q ** self.gamma_exponent))


TABLE2_PARAMS = TransitionParams()

# Fig. 4 setting: dwell means of 8 s (O), 3 s (A), 6q s (R bout), one tick per
# second, recruitment 1/40 per recruiter, reassess trips ~ 3q, explorers turn
# back at D/2.
EXPERIMENT1_PARAMS = TransitionParams(
    p1=1 / 8,
    p4=1 / 3,
    recruit_pull_rate=1 / 40,
    gamma_exponent=1.0,
    recruit_model="dwell",
    dwell_scale=6.0,
    explore_stop_fraction=0.5,
)


def compute_x(q: float) -> float:
    """Per-tick probability of continuing to recruit for a site of quality q."""
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"quality must lie in [0, 1], got {q}")
    return 2.0 / (2.0 + math.exp(-7.0 * q))


def compute_gamma(q: float, exponent: float = 0.5) -> float:
    if q < 0:
        raise ValueError(f"quality must be non-negative, got {q}")
    if q > 1:
        raise ValueError(f"quality must lie in [0, 1], got {q}")
    return q ** exponent


def _recruit_one(total: int, recruiters_by_site: dict[int, int], rate: float,
                 rng: random.Random) -> int | None:
    # p_r ~ binomial(total, rate); only the event p_r >= 1 matters and it has
    # probability 1 - (1 - rate)^total.
    if total <= 0:
        return None
    if rng.random() >= 1.0 - (1.0 - rate) ** total:
        return None
    u = rng.random() * total
    acc = 0
    for site_id in sorted(recruiters_by_site):
        acc += recruiters_by_site[site_id]
        if u < acc:
            return site_id
    return max(s for s, c in recruiters_by_site.items() if c > 0)


def sample_recruitment(observer_count: int, recruiters_by_site: dict[int, int],
                       rng: random.Random, rate: float = 0.1) -> list[int | None]:
    if any(c < 0 for c in recruiters_by_site.values()):
        raise ValueError("recruiter counts must be non-negative")
    total = sum(recruiters_by_site.values())
    return [_recruit_one(total, recruiters_by_site, rate, rng) for _ in range(observer_count)]


def _at_hub(pos, world: WorldConfig) -> bool:
    return math.hypot(pos[0], pos[1]) <= world.site_radius


def recruiters_at_hub(snapshot: Snapshot, world: WorldConfig) -> dict[int, int]:
    counts: dict[int, int] = {}
    for a in snapshot:
        if a.state is R and _at_hub(a.position, world):
            counts[a.favored_site] = counts.get(a.favored_site, 0) + 1
    return counts


def validate_agent(agent: Agent, world: WorldConfig) -> None:
    if not isinstance(agent.state, AgentState):
        raise InvariantViolation(f"agent {agent.id}: unknown state {agent.state!r}")
    oriented = agent.state in SITE_ORIENTED
    if oriented and agent.favored_site is None:
        raise InvariantViolation(f"agent {agent.id}: state {agent.state.value} requires a favored site")
    if not oriented and agent.favored_site is not None:
        raise InvariantViolation(f"agent {agent.id}: state {agent.state.value} cannot favor a site")
    if agent.reassess_remaining < 0:
        raise InvariantViolation(f"agent {agent.id}: negative reassess budget")
    if agent.reassess_remaining > 0 and agent.favored_site is None:
        raise InvariantViolation(f"agent {agent.id}: reassess budget without a favored site")
    if agent.favored_site is not None:
        try:
            world.site(agent.favored_site)
        except KeyError:
            raise InvariantViolation(f"agent {agent.id}: unknown site {agent.favored_site}") from None
    if math.hypot(*agent.position) > world.max_distance + 1e-9:
        raise InvariantViolation(f"agent {agent.id}: outside the world")
    if agent.state in TRAVEL_STATES and agent.target is None:
        raise InvariantViolation(f"agent {agent.id}: travelling without a target")


def _travel(agent: Agent, speed: float):
    """Returns (new position, arrived)."""
    x, y = agent.position
    tx, ty = agent.target
    dx, dy = tx - x, ty - y
    d = math.hypot(dx, dy)
    if d <= speed:
        return agent.target, True
    return (x + dx / d * speed, y + dy / d * speed), False


def _reflect(x: float, y: float, heading: float, radius: float):
    r = math.hypot(x, y)
    if r <= radius:
        return x, y, heading
    nx, ny = x / r, y / r
    # mirror the position back inside and the velocity about the boundary tangent
    back = 2.0 * radius - r
    vx, vy = math.cos(heading), math.sin(heading)
    dot = vx * nx + vy * ny
    vx, vy = vx - 2 * dot * nx, vy - 2 * dot * ny
    return nx * back, ny * back, math.atan2(vy, vx)


def step_agent(agent: Agent, snapshot: Snapshot, world: WorldConfig,
               params: TransitionParams, rng: random.Random,
               recruiters: dict[int, int] | None = None) -> Agent:
    """Advance one agent by one tick, reading the colony from ``snapshot``.

    ``recruiters`` may carry the precomputed hub recruiter counts of
    ``snapshot``; the colony loop passes it to avoid recounting per agent.
    """
    validate_agent(agent, world)
    st = agent.state

    if st is O:
        if recruiters is None:
            recruiters = recruiters_at_hub(snapshot, world)
        total = sum(recruiters.values())
        site_id = _recruit_one(total, recruiters, params.recruit_pull_rate, rng)
        if site_id is not None:
            site = world.site(site_id)
            return Agent(agent.id, T_S, agent.position, 0.0, site_id,
                         params.reassess_budget(site.quality), site.position)
        if rng.random() < params.p1:
            return Agent(agent.id, E, agent.position, rng.uniform(0.0, 2.0 * math.pi))
        return agent

    if st is E:
        heading = agent.heading + rng.uniform(-params.heading_noise, params.heading_noise)
        x = agent.position[0] + world.agent_speed * math.cos(heading)
        y = agent.position[1] + world.agent_speed * math.sin(heading)
        x, y, heading = _reflect(x, y, heading, world.max_distance)
        for site in world.sites:
            sx, sy = site.position
            if math.hypot(x - sx, y - sy) <= world.site_radius:
                if rng.random() < params.discover(site.quality, True):
                    return Agent(agent.id, A, site.position, 0.0, site.id,
                                 params.reassess_budget(site.quality))
                break
        if params.explore_stop_fraction is not None:
            if math.hypot(x, y) >= params.explore_stop_fraction * world.max_distance:
                return Agent(agent.id, T_HO, (x, y), heading, target=HUB)
        elif rng.random() < params.p3:
            return Agent(agent.id, T_HO, (x, y), heading, target=HUB)
        return Agent(agent.id, E, (x, y), heading)

    if st is A:
        if rng.random() < params.p4:
            return Agent(agent.id, T_HR, agent.position, 0.0, agent.favored_site,
                         agent.reassess_remaining, HUB)
        return agent

    if st is R:
        q = world.site(agent.favored_site).quality
        if rng.random() < params.recruit_continue(q):
            return agent
        if agent.reassess_remaining > 0 and rng.random() < params.p2:
            site = world.site(agent.favored_site)
            return Agent(agent.id, T_S, agent.position, 0.0, agent.favored_site,
                         agent.reassess_remaining - 1, site.position)
        return Agent(agent.id, O, agent.position)

    # travel states
    pos, arrived = _travel(agent, world.agent_speed)
    if not arrived:
        return Agent(agent.id, st, pos, agent.heading, agent.favored_site,
                     agent.reassess_remaining, agent.target)
    if st is T_S:
        return Agent(agent.id, A, pos, 0.0, agent.favored_site, agent.reassess_remaining)
    if st is T_HR:
        return Agent(agent.id, R, pos, 0.0, agent.favored_site, agent.reassess_remaining)
    return Agent(agent.id, O, pos)


def check_quorum(snapshot: Snapshot, world: WorldConfig) -> int | None:
    need = world.quorum_threshold
    for site_id, n in sorted(recruiters_at_hub(snapshot, world).items()):
        if n >= need:
            return site_id
    return None


@dataclass
class Trajectory:
    initial_condition_id: int
    snapshots: list[tuple[Agent, ...]]
    outcome: int | None
    ticks_elapsed: int
    seed: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def timed_out(self) -> bool:
        return self.outcome is None

    @property
    def final(self) -> tuple[Agent, ...]:
        return self.snapshots[-1]


def validate_colony(colony: Snapshot, world: WorldConfig) -> None:
    if len(colony) != world.num_agents:
        raise ValueError(f"expected {world.num_agents} agents, got {len(colony)}")
    ids = [a.id for a in colony]
    if len(set(ids)) != len(ids):
        raise ValueError("agent ids must be distinct")
    for a in colony:
        validate_agent(a, world)


def run_simulation(world: WorldConfig, params: TransitionParams, colony: Snapshot,
                   rng_seed: int, initial_condition_id: int = 0,
                   record: bool = True) -> Trajectory:
    """Run one trial until quorum or ``world.max_ticks``.

    With ``record=False`` only the initial and final snapshots are kept.
    """
    validate_colony(colony, world)
    rng = random.Random(rng_seed)
    current = tuple(sorted(colony, key=lambda a: a.id))
    snapshots = [current]
    outcome = check_quorum(current, world)
    tick = 0
    while outcome is None and tick < world.max_ticks:
        counts = recruiters_at_hub(current, world)
        current = tuple(step_agent(a, current, world, params, rng, counts) for a in current)
        tick += 1
        if record:
            snapshots.append(current)
        outcome = check_quorum(current, world)
    if not record and tick > 0:
        snapshots.append(current)
    return Trajectory(initial_condition_id, snapshots, outcome, tick, rng_seed)


class InitialCondition(enum.Enum):
    ALL_OBSERVE = "all_observe"
    HALF_EXPLORE_HALF_OBSERVE = "half_explore_half_observe"
    NINETY_OBSERVE_TEN_RECRUIT_WORST = "ninety_observe_ten_recruit_worst"
    RANDOM_STATES = "random_states"


def _random_point_in_disk(rng: random.Random, radius: float):
    r = radius * math.sqrt(rng.random())
    th = rng.uniform(0.0, 2.0 * math.pi)
    return (r * math.cos(th), r * math.sin(th))


def make_initial_condition(kind: InitialCondition, world: WorldConfig,
                           rng: random.Random,
                           params: TransitionParams = TABLE2_PARAMS) -> tuple[Agent, ...]:
    kind = InitialCondition(kind)
    K = world.num_agents
    if kind is InitialCondition.ALL_OBSERVE:
        return tuple(Agent(i, O) for i in range(K))

    if kind is InitialCondition.HALF_EXPLORE_HALF_OBSERVE:
        n_explore = K // 2
        agents = []
        for i in range(K):
            if i < n_explore:
                pos = _random_point_in_disk(rng, world.max_distance)
                agents.append(Agent(i, E, pos, rng.uniform(0.0, 2.0 * math.pi)))
            else:
                agents.append(Agent(i, O))
        return tuple(agents)

    if not world.sites:
        raise ValueError("initial condition needs at least one site")

    if kind is InitialCondition.NINETY_OBSERVE_TEN_RECRUIT_WORST:
        worst = min(world.sites, key=lambda s: (s.quality, s.id))
        n_recruit = round_half_up(0.1 * K)
        budget = params.reassess_budget(worst.quality)
        return tuple(Agent(i, R, HUB, 0.0, worst.id, budget) if i < n_recruit else Agent(i, O)
                     for i in range(K))

    # every agent in a uniformly drawn state, placed where that state makes sense
    states = list(AgentState)
    explore_radius = world.max_distance * (params.explore_stop_fraction or 1.0)
    agents = []
    for i in range(K):
        st = rng.choice(states)
        if st in SITE_ORIENTED:
            site = rng.choice(world.sites)
            budget = params.reassess_budget(site.quality)
            frac = rng.random()
            sx, sy = site.position
            if st is A:
                agents.append(Agent(i, A, site.position, 0.0, site.id, budget))
            elif st is R:
                agents.append(Agent(i, R, HUB, 0.0, site.id, budget))
            elif st is T_S:
                agents.append(Agent(i, T_S, (sx * frac, sy * frac), 0.0, site.id, budget, site.position))
            else:
                agents.append(Agent(i, T_HR, (sx * frac, sy * frac), 0.0, site.id, budget, HUB))
        elif st is O:
            agents.append(Agent(i, O))
        elif st is E:
            agents.append(Agent(i, E, _random_point_in_disk(rng, explore_radius * 0.999),
                                rng.uniform(0.0, 2.0 * math.pi)))
        else:
            agents.append(Agent(i, T_HO, _random_point_in_disk(rng, explore_radius), 0.0, target=HUB))
    return tuple(agents)


def place_sites(qualities: Sequence[float], distance: float, rng: random.Random) -> tuple[Site, ...]:
    """N sites at ``distance`` from the hub, evenly spaced in angle, randomly rotated."""
    n = len(qualities)
    rot = rng.uniform(0.0, 2.0 * math.pi)
    return tuple(
        Site(i, (distance * math.cos(rot + 2 * math.pi * i / n),
                 distance * math.sin(rot + 2 * math.pi * i / n)), float(q))
        for i, q in enumerate(qualities)
    )


def sample_qualities(n_sites: int, rng: random.Random, max_diff: float = 0.5,
                     min_quality: float = 0.5, max_tries: int = 100_000) -> tuple[float, ...]:
    """Uniform qualities rejection-sampled so every pair differs by < max_diff
    and every quality exceeds min_quality."""
    for _ in range(max_tries):
        qs = [1.0 - rng.random() for _ in range(n_sites)]  # (0, 1]
        if min(qs) <= min_quality:
            continue
        if max(qs) - min(qs) >= max_diff:
            continue
        return tuple(qs)
    raise RuntimeError("could not sample qualities satisfying the constraints")


def experiment1_world(max_ticks: int = 5000, seed: int = 0) -> WorldConfig:
    D = 40.0
    sites = place_sites((1.0, 0.5), D / 4, random.Random(seed))
    return WorldConfig(sites=sites, num_agents=10, max_distance=D, max_ticks=max_ticks,
                       quorum_count=3, site_radius=0.01 * D, rng_seed=seed)
