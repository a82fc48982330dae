"""Campaign configuration: a key/value text file whose keys mirror Table II.

Example (the ``table2`` preset)::

    [campaign]
    x = 2/(2 + e^{-7q})
    y = q*delta(r - r_S)
    z = delta(p_r)/|R|
    p_r = binomial(|R|, 0.1)
    p_1 = binomial(1, 0.01)
    ...
    simulation_run_times_T = 1000, 10000, 35000
"""

from __future__ import annotations

import configparser
import re
from dataclasses import asdict, dataclass, replace

from .abm import EXPERIMENT1_PARAMS, TABLE2_PARAMS, TransitionParams

SECTION = "campaign"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Campaign:
    params: TransitionParams = TABLE2_PARAMS
    runtimes: tuple[int, ...] = (1000, 10000, 35000)
    distances: tuple[float, ...] = (100.0, 150.0, 200.0)
    agent_counts: tuple[int, ...] = (5, 10)
    site_counts: tuple[int, ...] = (2, 3, 4)
    max_distance: float = 1000.0
    quorum_fraction: float = 0.5
    quorum_count: int | None = None
    max_quality_difference: float = 0.5
    min_quality: float = 0.5
    agent_speed: float = 2.0
    site_radius: float = 10.0
    quality_vectors: int = 5
    fixed_qualities: tuple[float, ...] | None = None
    pool_size: int = 10
    pool_ticks: int = 1000
    repetitions: int = 10
    # "pool": initial colonies sampled from three seed trajectories;
    # "random_states": every agent starts in a uniformly drawn state
    initial_mode: str = "pool"
    base_seed: int = 0
    name: str = "table2"

    def __post_init__(self):
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        if self.pool_size < 1:
            raise ConfigError("initial_conditions must be >= 1")
        if self.initial_mode not in ("pool", "random_states"):
            raise ConfigError(f"unknown initial_mode {self.initial_mode!r}")
        if not self.runtimes or not self.distances or not self.agent_counts or not self.site_counts:
            raise ConfigError("every grid axis needs at least one value")
        if self.fixed_qualities is not None and len(self.site_counts) != 1:
            raise ConfigError("fixed qualities need a single site count")
        if self.fixed_qualities is not None and len(self.fixed_qualities) != self.site_counts[0]:
            raise ConfigError("fixed qualities must list one quality per site")


TABLE2 = Campaign()

# Fig. 4 setting. The world size is not reported; D = 40 puts the sites 10
# units (5 ticks) from the hub, matching the seconds-scale dwell times.
EXPERIMENT1 = Campaign(
    params=EXPERIMENT1_PARAMS,
    runtimes=(5000,),
    distances=(10.0,),
    agent_counts=(10,),
    site_counts=(2,),
    max_distance=40.0,
    quorum_count=3,
    site_radius=0.4,
    fixed_qualities=(1.0, 0.5),
    pool_size=1,
    repetitions=500,
    initial_mode="random_states",
    name="experiment1",
)

PRESETS = {"table2": TABLE2, "experiment1": EXPERIMENT1}

_NUM = r"([-+]?\d*\.?\d+(?:[eE][-+]?\d+)?)"


def _norm(s: str) -> str:
    return re.sub(r"\s+", "", s)


def _binomial(value: str, key: str, n: str) -> float:
    m = re.fullmatch(rf"binomial\({re.escape(n)},{_NUM}\)", _norm(value))
    if not m:
        raise ConfigError(f"{key}: expected binomial({n}, p), got {value!r}")
    return float(m.group(1))


def _floats(value: str, key: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in value.split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"{key}: expected a comma-separated list of numbers, got {value!r}") from None


def _ints(value: str, key: str) -> tuple[int, ...]:
    vals = _floats(value, key)
    if any(v != int(v) for v in vals):
        raise ConfigError(f"{key}: expected integers, got {value!r}")
    return tuple(int(v) for v in vals)


def _x_model(value: str) -> dict:
    v = _norm(value)
    if v in ("2/(2+e^{-7q})", "2/(2+e^(-7q))", "2/(2+exp(-7q))"):
        return {"recruit_model": "logistic"}
    m = re.fullmatch(rf"1-1/\({_NUM}q\)", v)
    if m:
        return {"recruit_model": "dwell", "dwell_scale": float(m.group(1))}
    raise ConfigError(f"x: unsupported recruit-continuation formula {value!r}")


def _gamma(value: str) -> float:
    m = re.fullmatch(rf"q\^{{?{_NUM}}}?", _norm(value))
    if not m:
        raise ConfigError(f"gamma: expected q^e, got {value!r}")
    return float(m.group(1))


def _constraints(value: str) -> tuple[float, float]:
    v = _norm(value)
    m1 = re.search(rf"\|[^|]*\|<{_NUM}", v)
    m2 = re.search(rf"min\([^)]*\)>{_NUM}", v)
    if not (m1 and m2):
        raise ConfigError(f"quality_constraints: cannot parse {value!r}")
    return float(m1.group(1)), float(m2.group(1))


def parse_config(text: str, base: Campaign = TABLE2) -> Campaign:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    if not cp.has_section(SECTION):
        raise ConfigError(f"config needs a [{SECTION}] section")
    sec = cp[SECTION]
    p: dict = {}
    c: dict = {}
    known = set()

    def take(key):
        known.add(key)
        return sec.get(key)

    if (v := take("preset")) is not None:
        if v.strip() not in PRESETS:
            raise ConfigError(f"unknown preset {v!r}")
        base = PRESETS[v.strip()]
    if (v := take("x")) is not None:
        p.update(_x_model(v))
    if (v := take("y")) is not None and _norm(v) not in ("q*delta(r-r_S)", "qdelta(r-r_S)", "q\\delta(r-r_S)"):
        raise ConfigError(f"y: only q*delta(r - r_S) is supported, got {v!r}")
    if (v := take("z")) is not None and _norm(v) != "delta(p_r)/|R|":
        raise ConfigError(f"z: only delta(p_r)/|R| is supported, got {v!r}")
    if (v := take("p_r")) is not None:
        p["recruit_pull_rate"] = _binomial(v, "p_r", "|R|")
    for i in range(1, 5):
        if (v := take(f"p_{i}")) is not None:
            p[f"p{i}"] = _binomial(v, f"p_{i}", "1")
    if (v := take("gamma")) is not None:
        p["gamma_exponent"] = _gamma(v)
    if (v := take("threshold_tau")) is not None:
        c["quorum_fraction"] = float(v)
    if (v := take("quality_constraints")) is not None:
        c["max_quality_difference"], c["min_quality"] = _constraints(v)
    if (v := take("simulation_run_times_T")) is not None:
        c["runtimes"] = _ints(v, "simulation_run_times_T")
    if (v := take("distance_of_sites")) is not None:
        c["distances"] = _floats(v, "distance_of_sites")
    if (v := take("maximum_distance")) is not None:
        c["max_distance"] = float(v)
    if (v := take("number_of_agents")) is not None:
        c["agent_counts"] = _ints(v, "number_of_agents")
    if (v := take("number_of_sites")) is not None:
        c["site_counts"] = _ints(v, "number_of_sites")

    for key, conv, target in (
        ("reassess_scale", float, p), ("dwell_scale", float, p), ("heading_noise", float, p),
        ("agent_speed", float, c), ("site_radius", float, c), ("quality_vectors", int, c),
        ("initial_conditions", int, c), ("pool_ticks", int, c), ("repetitions", int, c),
        ("base_seed", int, c), ("initial_mode", str, c), ("name", str, c),
    ):
        if (v := take(key)) is not None:
            try:
                target[{"initial_conditions": "pool_size"}.get(key, key)] = conv(v.strip())
            except ValueError:
                raise ConfigError(f"{key}: bad value {v!r}") from None
    if (v := take("explore_stop_fraction")) is not None:
        p["explore_stop_fraction"] = None if v.strip().lower() == "none" else float(v)
    if (v := take("quorum_count")) is not None:
        c["quorum_count"] = None if v.strip().lower() == "none" else int(v)
    if (v := take("fixed_qualities")) is not None:
        c["fixed_qualities"] = None if v.strip().lower() == "none" else _floats(v, "fixed_qualities")

    unknown = set(sec) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    try:
        params = replace(base.params, **p)
        return replace(base, params=params, **c)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def load_config(path, base: Campaign = TABLE2) -> Campaign:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, base)


def _fmt(v) -> str:
    if isinstance(v, tuple):
        return ", ".join(_fmt(x) for x in v)
    return "none" if v is None else repr(v) if isinstance(v, float) else str(v)


def format_config(c: Campaign) -> str:
    p = c.params
    x = "2/(2 + e^{-7q})" if p.recruit_model == "logistic" else f"1 - 1/({p.dwell_scale!r}q)"
    lines = [
        f"[{SECTION}]",
        f"x = {x}",
        "y = q*delta(r - r_S)",
        "z = delta(p_r)/|R|",
        f"p_r = binomial(|R|, {p.recruit_pull_rate!r})",
        f"p_1 = binomial(1, {p.p1!r})",
        f"p_2 = binomial(1, {p.p2!r})",
        f"p_3 = binomial(1, {p.p3!r})",
        f"p_4 = binomial(1, {p.p4!r})",
        f"gamma = q^{p.gamma_exponent!r}",
        f"threshold_tau = {c.quorum_fraction!r}",
        f"quality_constraints = |q_s1 - q_s2| < {c.max_quality_difference!r}; "
        f"min(q_s1, q_s2) > {c.min_quality!r}",
        f"simulation_run_times_T = {_fmt(c.runtimes)}",
        f"distance_of_sites = {_fmt(c.distances)}",
        f"maximum_distance = {c.max_distance!r}",
        f"number_of_agents = {_fmt(c.agent_counts)}",
        f"number_of_sites = {_fmt(c.site_counts)}",
        "# artifact settings",
        f"reassess_scale = {p.reassess_scale!r}",
        f"dwell_scale = {p.dwell_scale!r}",
        f"heading_noise = {p.heading_noise!r}",
        f"explore_stop_fraction = {_fmt(p.explore_stop_fraction)}",
        f"agent_speed = {c.agent_speed!r}",
        f"site_radius = {c.site_radius!r}",
        f"quorum_count = {_fmt(c.quorum_count)}",
        f"fixed_qualities = {_fmt(c.fixed_qualities)}",
        f"quality_vectors = {c.quality_vectors}",
        f"initial_conditions = {c.pool_size}",
        f"pool_ticks = {c.pool_ticks}",
        f"repetitions = {c.repetitions}",
        f"initial_mode = {c.initial_mode}",
        f"base_seed = {c.base_seed}",
        f"name = {c.name}",
    ]
    return "\n".join(lines) + "\n"


def campaign_to_dict(c: Campaign) -> dict:
    d = asdict(c)
    d["params"] = asdict(c.params)
    return d
