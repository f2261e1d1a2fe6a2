"""OLSR node logic: configuration space, control messages, MPR selection,
duplicate suppression and routing-table computation.

Each node state is owned by exactly one simulation; nothing here is shared.
"""
import heapq
import itertools
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, FrozenSet, Iterable, List, Sequence, Set, Tuple

import numpy as np

import schema
from errors import GenomeError

logger = logging.getLogger(__name__)

WILL_NEVER = 0
WILL_DEFAULT = 3
WILL_ALWAYS = 7

HELLO_HEADER_BYTES = 24
HELLO_ENTRY_BYTES = 8
TC_HEADER_BYTES = 20
TC_ENTRY_BYTES = 4

GENE_ORDER = (
    "hello_interval",
    "refresh_interval",
    "tc_interval",
    "willingness",
    "neighb_hold_time",
    "mid_hold_time",
    "top_hold_time",
    "dup_hold_time",
)
WILLINGNESS_GENE = 3


# --------- Parameter space ---------
@dataclass(frozen=True, eq=False)
class ParamSpace:
    lower: np.ndarray
    upper: np.ndarray
    rfc: np.ndarray
    integer_genes: Tuple[int, ...] = (WILLINGNESS_GENE,)

    def __post_init__(self):
        for name in ("lower", "upper", "rfc"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if np.any(self.lower >= self.upper):
            raise ValueError("every gene needs z_min < z_max")
        if np.any(self.rfc < self.lower) or np.any(self.rfc > self.upper):
            raise ValueError("RFC defaults must lie inside the gene bounds")

    @property
    def size(self) -> int:
        return len(self.lower)

    @property
    def span(self) -> np.ndarray:
        return self.upper - self.lower

    def clip(self, genes: np.ndarray) -> np.ndarray:
        """Clamp into bounds and snap integer genes (round half up)."""
        out = np.clip(np.asarray(genes, dtype=float), self.lower, self.upper)
        for i in self.integer_genes:
            out[i] = min(max(math.floor(out[i] + 0.5), self.lower[i]), self.upper[i])
        return out

    def contains(self, genes: np.ndarray) -> bool:
        genes = np.asarray(genes, dtype=float)
        inside = bool(np.all(genes >= self.lower) and np.all(genes <= self.upper))
        return inside and all(float(genes[i]).is_integer() for i in self.integer_genes)


DEFAULT_SPACE = ParamSpace(
    lower=np.array([2.0, 2.0, 4.0, 0.0, 5.5, 10.5, 10.5, 10.5]),
    upper=np.array([15.0, 15.0, 35.0, 7.0, 45.0, 90.0, 90.0, 90.0]),
    rfc=np.array([2.0, 2.0, 5.0, 3.0, 6.0, 15.0, 15.0, 30.0]),
)


def rfc_default() -> schema.OlsrConfig:
    """RFC 3626 values; hold times are 3 x HELLO_INTERVAL and 3 x TC_INTERVAL."""
    return schema.OlsrConfig(
        hello_interval=2.0,
        refresh_interval=2.0,
        tc_interval=5.0,
        willingness=WILL_DEFAULT,
        neighb_hold_time=3 * 2.0,
        top_hold_time=3 * 5.0,
        mid_hold_time=3 * 5.0,
        dup_hold_time=30.0,
    )


def energy_aware_default() -> schema.OlsrConfig:
    """Best published energy-aware tuning, used as a second reference point."""
    return schema.OlsrConfig(
        hello_interval=14.890,
        refresh_interval=7.416,
        tc_interval=28.158,
        willingness=5,
        neighb_hold_time=20.825,
        mid_hold_time=10.814,
        top_hold_time=70.959,
        dup_hold_time=90.0,
    )


def encode_config(config: schema.OlsrConfig) -> np.ndarray:
    return np.array([float(getattr(config, name)) for name in GENE_ORDER])


def decode_genome(genes: Sequence[float], space: ParamSpace = DEFAULT_SPACE) -> schema.OlsrConfig:
    values = np.asarray(genes, dtype=float)
    if values.shape != (space.size,):
        raise GenomeError(f"genome must have {space.size} genes, got shape {values.shape}")
    if not np.all(np.isfinite(values)):
        raise GenomeError(f"non-finite gene in {values.tolist()}")
    values = space.clip(values)
    decoded = {name: float(v) for name, v in zip(GENE_ORDER, values)}
    decoded["willingness"] = int(values[WILLINGNESS_GENE])
    return schema.OlsrConfig(**decoded)


def hello_emission_interval(config: schema.OlsrConfig) -> float:
    """Every link must be re-advertised within REFRESH_INTERVAL."""
    return min(config.hello_interval, config.refresh_interval)


# --------- Messages ---------
class MessageKind(str, Enum):
    HELLO = "HELLO"
    TC = "TC"


class LinkStatus(str, Enum):
    ASYM = "asym"
    SYM = "sym"
    MPR = "mpr"


@dataclass(frozen=True)
class HelloEntry:
    neighbor: int
    status: LinkStatus
    willingness: int = WILL_DEFAULT


@dataclass(frozen=True)
class ControlMessage:
    kind: MessageKind
    originator: int
    sender: int
    seq_no: int
    willingness: int = WILL_DEFAULT
    neighbors: Tuple[HelloEntry, ...] = ()
    selectors: Tuple[int, ...] = ()

    @property
    def entry_count(self) -> int:
        return len(self.neighbors) if self.kind == MessageKind.HELLO else len(self.selectors)

    @property
    def size(self) -> int:
        """Size in bytes."""
        if self.kind == MessageKind.HELLO:
            return HELLO_HEADER_BYTES + HELLO_ENTRY_BYTES * self.entry_count
        return TC_HEADER_BYTES + TC_ENTRY_BYTES * self.entry_count


# --------- Node state ---------
@dataclass
class LinkTuple:
    sym: bool
    expiry: float


@dataclass
class TwoHopTuple:
    nodes: FrozenSet[int]
    expiry: float


@dataclass
class TopologyTuple:
    seq_no: int
    expiry: float


@dataclass(frozen=True)
class Route:
    next_hop: int
    hops: int


_LINK, _TWO_HOP, _SELECTOR, _TOPOLOGY, _DUPLICATE = range(5)


@dataclass
class OlsrNodeState:
    """Information repositories of one node.

    Mutate through the set_*/record_* methods so every stored expiry is also
    queued for expire().
    """

    node_id: int
    willingness: int = WILL_DEFAULT
    link_set: Dict[int, LinkTuple] = field(default_factory=dict)
    two_hop_set: Dict[int, TwoHopTuple] = field(default_factory=dict)
    mpr_set: Set[int] = field(default_factory=set)
    mpr_selector_set: Dict[int, float] = field(default_factory=dict)
    topology: Dict[int, Dict[int, TopologyTuple]] = field(default_factory=dict)  # last_hop -> dest -> tuple
    duplicate_set: Dict[Tuple[int, int], float] = field(default_factory=dict)
    routing_table: Dict[int, Route] = field(default_factory=dict)
    neighbor_willingness: Dict[int, int] = field(default_factory=dict)
    routes_dirty: bool = False
    _expiries: List[tuple] = field(default_factory=list, repr=False)
    _counter: "itertools.count" = field(default_factory=itertools.count, repr=False)

    def _queue(self, expiry: float, kind: int, key) -> None:
        heapq.heappush(self._expiries, (expiry, next(self._counter), kind, key))

    def set_link(self, neighbor: int, sym: bool, expiry: float) -> None:
        self.link_set[neighbor] = LinkTuple(sym=sym, expiry=expiry)
        self._queue(expiry, _LINK, neighbor)

    def set_two_hop(self, neighbor: int, nodes: Iterable[int], expiry: float) -> None:
        self.two_hop_set[neighbor] = TwoHopTuple(nodes=frozenset(nodes), expiry=expiry)
        self._queue(expiry, _TWO_HOP, neighbor)

    def set_selector(self, neighbor: int, expiry: float) -> None:
        self.mpr_selector_set[neighbor] = expiry
        self._queue(expiry, _SELECTOR, neighbor)

    def set_topology(self, dest: int, last_hop: int, seq_no: int, expiry: float) -> None:
        self.topology.setdefault(last_hop, {})[dest] = TopologyTuple(seq_no=seq_no, expiry=expiry)
        self._queue(expiry, _TOPOLOGY, (dest, last_hop))

    def record_duplicate(self, originator: int, seq_no: int, expiry: float) -> None:
        self.duplicate_set[(originator, seq_no)] = expiry
        self._queue(expiry, _DUPLICATE, (originator, seq_no))

    @property
    def topology_set(self) -> Dict[Tuple[int, int], TopologyTuple]:
        """Flat (dest, last_hop) view of the topology repository."""
        return {(dest, last): t for last, dests in self.topology.items() for dest, t in dests.items()}

    def symmetric_neighbors(self) -> Set[int]:
        return {n for n, link in self.link_set.items() if link.sym}

    def stored_expiries(self) -> List[float]:
        expiries = [link.expiry for link in self.link_set.values()]
        expiries += [t.expiry for t in self.two_hop_set.values()]
        expiries += list(self.mpr_selector_set.values())
        expiries += [t.expiry for dests in self.topology.values() for t in dests.values()]
        expiries += list(self.duplicate_set.values())
        return expiries


# --------- Operations ---------
def make_hello(state: OlsrNodeState, seq_no: int) -> ControlMessage:
    entries = []
    for neighbor, link in sorted(state.link_set.items()):
        if neighbor in state.mpr_set:
            status = LinkStatus.MPR
        else:
            status = LinkStatus.SYM if link.sym else LinkStatus.ASYM
        entries.append(HelloEntry(neighbor, status, state.neighbor_willingness.get(neighbor, WILL_DEFAULT)))
    return ControlMessage(
        kind=MessageKind.HELLO,
        originator=state.node_id,
        sender=state.node_id,
        seq_no=seq_no,
        willingness=state.willingness,
        neighbors=tuple(entries),
    )


def make_tc(state: OlsrNodeState, seq_no: int) -> ControlMessage:
    return ControlMessage(
        kind=MessageKind.TC,
        originator=state.node_id,
        sender=state.node_id,
        seq_no=seq_no,
        willingness=state.willingness,
        selectors=tuple(sorted(state.mpr_selector_set)),
    )


def process_hello(state: OlsrNodeState, msg: ControlMessage, now: float, config: schema.OlsrConfig) -> OlsrNodeState:
    me, sender = state.node_id, msg.sender
    expiry = now + config.neighb_hold_time

    old_link = state.link_set.get(sender)
    old_two_hop = state.two_hop_set.get(sender)
    old_willingness = state.neighbor_willingness.get(sender)

    mine = next((e for e in msg.neighbors if e.neighbor == me), None)
    sym = mine is not None
    state.set_link(sender, sym, expiry)
    state.neighbor_willingness[sender] = msg.willingness

    two_hop: FrozenSet[int] = frozenset()
    if sym:
        two_hop = frozenset(
            e.neighbor for e in msg.neighbors
            if e.status in (LinkStatus.SYM, LinkStatus.MPR) and e.neighbor != me
        )
        state.set_two_hop(sender, two_hop, expiry)
    else:
        state.two_hop_set.pop(sender, None)

    if mine is not None and mine.status == LinkStatus.MPR:
        state.set_selector(sender, expiry)
    else:
        state.mpr_selector_set.pop(sender, None)

    was_sym = old_link is not None and old_link.sym
    old_nodes = old_two_hop.nodes if old_two_hop is not None else frozenset()
    if was_sym != sym or old_nodes != two_hop or (sym and old_willingness != msg.willingness):
        state.mpr_set = select_mprs(state)
        state.routes_dirty = True
    return state


def select_mprs(state: OlsrNodeState) -> Set[int]:
    """Greedy MPR cover: sole providers, then willingness, then reachability, then lowest id."""
    me = state.node_id
    symmetric = state.symmetric_neighbors()

    def willingness(n: int) -> int:
        return state.neighbor_willingness.get(n, WILL_DEFAULT)

    reach = {
        n: set(state.two_hop_set[n].nodes) - symmetric - {me} if n in state.two_hop_set else set()
        for n in symmetric
    }
    candidates = {n for n in symmetric if willingness(n) != WILL_NEVER}
    coverable = set().union(*(reach[n] for n in candidates))
    for lost in sorted(set().union(*reach.values()) - coverable):
        logger.debug(f"node {me}: two-hop node {lost} only reachable via willingness-0 neighbors")

    mprs = {n for n in symmetric if willingness(n) == WILL_ALWAYS}
    uncovered = coverable - set().union(*(reach[n] for n in mprs))
    while uncovered:
        providers: Dict[int, int] = defaultdict(int)
        pool = [n for n in candidates - mprs if reach[n] & uncovered]
        for n in pool:
            for node in reach[n] & uncovered:
                providers[node] += 1

        def rank(n: int):
            covers = reach[n] & uncovered
            sole = any(providers[node] == 1 for node in covers)
            return (not sole, -willingness(n), -len(covers), n)

        best = min(pool, key=rank)
        mprs.add(best)
        uncovered -= reach[best]
    return mprs


def process_tc(state: OlsrNodeState, msg: ControlMessage, now: float, config: schema.OlsrConfig) -> OlsrNodeState:
    originator = msg.originator
    if originator == state.node_id:
        return state
    current = state.topology.get(originator, {})
    if any(t.seq_no > msg.seq_no for t in current.values()):
        return state
    for dest in [d for d, t in current.items() if t.seq_no < msg.seq_no]:
        del current[dest]
    expiry = now + config.top_hold_time
    for dest in msg.selectors:
        state.set_topology(dest, originator, msg.seq_no, expiry)
    if originator in state.topology and not state.topology[originator]:
        del state.topology[originator]
    state.routes_dirty = True
    return state


def is_duplicate(state: OlsrNodeState, originator: int, seq_no: int, now: float) -> bool:
    expiry = state.duplicate_set.get((originator, seq_no))
    return expiry is not None and expiry > now


def should_forward(
    state: OlsrNodeState,
    originator: int,
    seq_no: int,
    sender: int,
    now: float,
    config: schema.OlsrConfig,
) -> bool:
    """Record the message as seen; forward only when the sender selected this node as MPR."""
    if is_duplicate(state, originator, seq_no, now):
        return False
    state.record_duplicate(originator, seq_no, now + config.dup_hold_time)
    selected_until = state.mpr_selector_set.get(sender)
    return selected_until is not None and selected_until > now


def compute_routes(state: OlsrNodeState) -> Dict[int, Route]:
    me = state.node_id
    symmetric = sorted(state.symmetric_neighbors())
    adjacency: Dict[int, Set[int]] = defaultdict(set)
    for n in symmetric:
        if n in state.two_hop_set:
            adjacency[n].update(state.two_hop_set[n].nodes)
    for last_hop, dests in state.topology.items():
        adjacency[last_hop].update(dests)

    table = {n: Route(next_hop=n, hops=1) for n in symmetric}
    frontier = [(n, n) for n in symmetric]
    hops = 1
    while frontier:
        hops += 1
        reached = []
        # lowest next hop first, then lowest last hop
        for node, via in sorted(frontier, key=lambda pair: (pair[1], pair[0])):
            for dest in sorted(adjacency.get(node, ())):
                if dest == me or dest in table:
                    continue
                table[dest] = Route(next_hop=via, hops=hops)
                reached.append((dest, via))
        frontier = reached
    state.routing_table = table
    state.routes_dirty = False
    return table


def current_routes(state: OlsrNodeState) -> Dict[int, Route]:
    if state.routes_dirty:
        compute_routes(state)
    return state.routing_table


def expire(state: OlsrNodeState, now: float) -> OlsrNodeState:
    neighborhood_changed = topology_changed = False
    queue = state._expiries
    while queue and queue[0][0] <= now:
        _, _, kind, key = heapq.heappop(queue)
        if kind == _LINK:
            link = state.link_set.get(key)
            if link is not None and link.expiry <= now:
                del state.link_set[key]
                state.two_hop_set.pop(key, None)
                state.neighbor_willingness.pop(key, None)
                neighborhood_changed = True
        elif kind == _TWO_HOP:
            entry = state.two_hop_set.get(key)
            if entry is not None and entry.expiry <= now:
                del state.two_hop_set[key]
                neighborhood_changed = True
        elif kind == _SELECTOR:
            if state.mpr_selector_set.get(key, math.inf) <= now:
                del state.mpr_selector_set[key]
        elif kind == _TOPOLOGY:
            dest, last_hop = key
            dests = state.topology.get(last_hop, {})
            entry = dests.get(dest)
            if entry is not None and entry.expiry <= now:
                del dests[dest]
                if not dests:
                    del state.topology[last_hop]
                topology_changed = True
        elif state.duplicate_set.get(key, math.inf) <= now:
            del state.duplicate_set[key]

    # duplicate and selector removals cannot change the MPR set or the routes
    if neighborhood_changed:
        state.mpr_set = select_mprs(state)
    if neighborhood_changed or topology_changed:
        compute_routes(state)
    return state
