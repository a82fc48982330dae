"""Canonical, anonymized collective-state tensors.

Two encodings are supported:

* ``onehot``: per agent ``(Q, R, A, T_HR, T_S, O, E, T_HO)``; 8 values per agent.
* ``float``: per agent ``[q, S, x_s/D, y_s/D]`` with S on a seven-point grid,
  padded with ``[0, 1, 1, 1]`` records up to ``max_agents`` (40 values for 10).
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from typing import NamedTuple, Sequence

from .abm import A, O, E, R, T_HO, T_HR, T_S, SITE_ORIENTED, AgentState, Snapshot, WorldConfig

ONEHOT = "onehot"
FLOAT = "float"
ONEHOT_WIDTH = 8
FLOAT_WIDTH = 4
MAX_AGENTS = 10
PADDING = (0.0, 1.0, 1.0, 1.0)

ONEHOT_ORDER = (R, A, T_HR, T_S, O, E, T_HO)
# grid values are i/6, computed the same way everywhere so they compare bit-exactly
STATE_CODES = {st: i / 6 for i, st in enumerate(ONEHOT_ORDER)}
CODE_STATES = {v: k for k, v in STATE_CODES.items()}


class CapacityError(ValueError):
    pass


class NonCanonicalError(ValueError):
    pass


class OneHotRecord(NamedTuple):
    q: float
    r: int
    a: int
    t_hr: int
    t_s: int
    o: int
    e: int
    t_ho: int
    id: int

    @property
    def state(self) -> AgentState:
        bits = self[1:8]
        return ONEHOT_ORDER[bits.index(1)]


class FloatRecord(NamedTuple):
    q: float
    s: float
    x: float
    y: float


@dataclass(frozen=True)
class StateTensor:
    values: tuple[float, ...]
    encoding: str
    width: int

    def __len__(self):
        return len(self.values)

    @property
    def records(self) -> list[tuple[float, ...]]:
        w = self.width
        return [self.values[i:i + w] for i in range(0, len(self.values), w)]

    def states(self) -> list[AgentState]:
        """Agent states of the real (non-padding) records."""
        if self.encoding == ONEHOT:
            return [ONEHOT_ORDER[[int(b) for b in rec[1:8]].index(1)] for rec in self.records]
        return [CODE_STATES[rec[1]] for rec in self.records if tuple(rec) != PADDING]

    def site_oriented_count(self) -> int:
        return sum(st in SITE_ORIENTED for st in self.states())


def state_to_float(state: AgentState) -> float:
    return STATE_CODES[AgentState(state)]


def encode_onehot(snapshot: Snapshot, world: WorldConfig) -> list[OneHotRecord]:
    out = []
    for agent in snapshot:
        q = world.site(agent.favored_site).quality if agent.favored_site is not None else 0.0
        bits = [1 if agent.state is st else 0 for st in ONEHOT_ORDER]
        out.append(OneHotRecord(float(q), *bits, agent.id))
    return out


def float_records(snapshot: Snapshot, world: WorldConfig) -> list[FloatRecord]:
    D = world.max_distance
    out = []
    for agent in snapshot:
        if agent.favored_site is None:
            out.append(FloatRecord(0.0, STATE_CODES[agent.state], 0.0, 0.0))
        else:
            site = world.site(agent.favored_site)
            out.append(FloatRecord(float(site.quality), STATE_CODES[agent.state],
                                   site.position[0] / D, site.position[1] / D))
    return out


def canonicalize(records: Sequence[Sequence[float]], encoding: str | None = None,
                 pad_to: int | None = None) -> StateTensor:
    """Strip ids, sort records ascending, concatenate; padding goes after the sort."""
    if isinstance(records, StateTensor):
        if records.encoding == FLOAT and pad_to is None:
            pad_to = len(records.records)
        records, encoding = records.records, records.encoding
    if not records and encoding is None:
        raise ValueError("cannot infer the encoding of an empty record list")
    rows = []
    for rec in records:
        if isinstance(rec, OneHotRecord):
            rec = tuple(rec)[:ONEHOT_WIDTH]
        rows.append(tuple(float(v) for v in rec))
    widths = {len(r) for r in rows}
    if len(widths) > 1:
        raise ValueError("records have mixed widths")
    if encoding is None:
        encoding = ONEHOT if widths == {ONEHOT_WIDTH} else FLOAT
    if encoding == FLOAT:
        return _canonical_float(rows, pad_to)
    rows.sort()
    return StateTensor(tuple(v for r in rows for v in r), ONEHOT, ONEHOT_WIDTH)


def _canonical_float(rows, pad_to):
    real = sorted(tuple(r) for r in rows if tuple(r) != PADDING)
    if pad_to is not None:
        if len(real) > pad_to:
            raise CapacityError(f"{len(real)} agents exceed capacity {pad_to}")
        real += [PADDING] * (pad_to - len(real))
    return StateTensor(tuple(v for r in real for v in r), FLOAT, FLOAT_WIDTH)


def encode_float(snapshot: Snapshot, world: WorldConfig, max_agents: int = MAX_AGENTS) -> StateTensor:
    if len(snapshot) > max_agents:
        raise CapacityError(f"{len(snapshot)} agents exceed capacity {max_agents}")
    return _canonical_float(float_records(snapshot, world), max_agents)


def encode(snapshot: Snapshot, world: WorldConfig, encoding: str = FLOAT,
           max_agents: int = MAX_AGENTS) -> StateTensor:
    if encoding == FLOAT:
        return encode_float(snapshot, world, max_agents)
    if encoding == ONEHOT:
        return canonicalize(encode_onehot(snapshot, world), ONEHOT)
    raise ValueError(f"unknown encoding {encoding!r}")


def is_canonical(tensor: StateTensor) -> bool:
    recs = [tuple(r) for r in tensor.records]
    if tensor.encoding == ONEHOT:
        return recs == sorted(recs)
    n_real = next((i for i, r in enumerate(recs) if r == PADDING), len(recs))
    real, pad = recs[:n_real], recs[n_real:]
    return real == sorted(real) and all(r == PADDING for r in pad)


def tensor_key(tensor: StateTensor) -> str:
    if len(tensor.values) % tensor.width:
        raise NonCanonicalError("tensor length is not a multiple of its record width")
    if not is_canonical(tensor):
        raise NonCanonicalError("tensor records are not in canonical order")
    h = hashlib.blake2b(digest_size=12)
    h.update(tensor.encoding.encode())
    h.update(struct.pack(f"<{len(tensor.values)}d", *tensor.values))
    return h.hexdigest()


def tensor_to_csv_row(tensor: StateTensor) -> str:
    return ",".join(repr(v) for v in tensor.values)


def tensor_from_values(values: Sequence[float], encoding: str) -> StateTensor:
    width = ONEHOT_WIDTH if encoding == ONEHOT else FLOAT_WIDTH
    return StateTensor(tuple(float(v) for v in values), encoding, width)
