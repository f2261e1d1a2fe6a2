"""Discrete-event simulation of OLSR over a unit-disk broadcast medium with a
per-packet transmit/receive energy model.

One Simulation is one isolated, single-threaded event loop; results leave it
by value as schema.SimMetrics.
"""
import heapq
import itertools
import logging
from dataclasses import dataclass, replace
from enum import Enum
from typing import Any, Dict, List, Optional, Set, Tuple, Union

import numpy as np

import olsr
import schema
from errors import ConfigurationError
from scenario import MobilityTrace, Scenario

logger = logging.getLogger(__name__)

DEFAULT_PROCESSING_DELAY = 0.002
MAX_DATA_HOPS = 32


# --------- Energy model ---------
@dataclass(frozen=True)
class NicProfile:
    i_send: float = 440.0  # mA
    v_send: float = 5.0  # V
    i_recv: float = 260.0  # mA
    v_recv: float = 5.0  # V
    bandwidth: float = 6e6  # bit/s

    def __post_init__(self):
        for name in ("i_send", "v_send", "i_recv", "v_recv", "bandwidth"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"NIC {name} must be strictly positive")


DEFAULT_NIC = NicProfile()


def packet_airtime(size: float, bandwidth: float) -> float:
    """Seconds to put `size` bits on the air."""
    return size / bandwidth


def energy_send(nic: NicProfile, size: float) -> float:
    """mA x V x s = mJ."""
    return nic.i_send * nic.v_send * packet_airtime(size, nic.bandwidth)


def energy_recv(nic: NicProfile, size: float) -> float:
    return nic.i_recv * nic.v_recv * packet_airtime(size, nic.bandwidth)


def broadcast_energy(nic: NicProfile, size: float, receivers: int) -> float:
    return energy_send(nic, size) + receivers * energy_recv(nic, size)


class EnergyLedger:
    """Per-node send/receive accumulators (mJ)."""

    def __init__(self, node_count: int):
        self.e_sent = np.zeros(node_count)
        self.e_recv = np.zeros(node_count)
        self.e_control = 0.0
        self.e_data = 0.0

    def charge(self, sender: int, receivers: np.ndarray, send_mj: float, recv_mj: float, control: bool) -> None:
        self.e_sent[sender] += send_mj
        self.e_recv[receivers] += recv_mj
        spent = send_mj + recv_mj * len(receivers)
        if control:
            self.e_control += spent
        else:
            self.e_data += spent

    @property
    def total_sent(self) -> float:
        return float(self.e_sent.sum())

    @property
    def total_recv(self) -> float:
        return float(self.e_recv.sum())

    @property
    def e_total(self) -> float:
        return self.total_sent + self.total_recv

    @property
    def e_total_per_vehicle(self) -> float:
        return self.e_total / len(self.e_sent)


# --------- Event queue ---------
class EventKind(str, Enum):
    EMIT_HELLO = "emit_hello"
    EMIT_TC = "emit_tc"
    CBR_SEND = "cbr_send"
    PACKET_ARRIVAL = "packet_arrival"
    FLOW_END = "flow_end"
    SIM_END = "sim_end"


@dataclass(frozen=True)
class Event:
    time: float
    kind: EventKind
    node: int = -1
    payload: Any = None


class EventQueue:
    """Time-ordered; equal timestamps leave in insertion order, `last` events after all others."""

    def __init__(self):
        self._heap: List[Tuple[float, bool, int, Event]] = []
        self._counter = itertools.count()

    def push(
        self, time: float, kind: EventKind, node: int = -1, payload: Any = None, last: bool = False
    ) -> Event:
        event = Event(time, kind, node, payload)
        heapq.heappush(self._heap, (time, last, next(self._counter), event))
        return event

    def pop(self) -> Event:
        return heapq.heappop(self._heap)[3]

    def __len__(self) -> int:
        return len(self._heap)


# --------- Radio ---------
def neighbors_in_range(trace: MobilityTrace, node: int, t: float, radio_range: float) -> Set[int]:
    positions = trace.positions_at(t)
    distances = np.hypot(*(positions - positions[node]).T)
    return {int(n) for n in np.flatnonzero(distances <= radio_range) if n != node}


@dataclass
class DataPacket:
    flow: int
    source: int
    destination: int
    created: float
    hops: int = 0


@dataclass(frozen=True)
class _ControlDelivery:
    message: olsr.ControlMessage
    receivers: Tuple[int, ...]


@dataclass(frozen=True)
class _DataDelivery:
    packet: DataPacket
    receiver: int


# --------- Kernel ---------
class Simulation:
    def __init__(
        self,
        scenario: Scenario,
        config: Union[schema.OlsrConfig, Dict[str, Any]],
        nic: NicProfile = DEFAULT_NIC,
        seed: int = 0,
        *,
        allow_no_flows: bool = False,
        processing_delay: float = DEFAULT_PROCESSING_DELAY,
    ):
        if not isinstance(config, schema.OlsrConfig):
            config = schema.OlsrConfig.model_validate(config)
        if not scenario.flows and not allow_no_flows:
            raise ConfigurationError("no data flows")
        self.scenario = scenario
        self.config = config
        self.nic = nic
        self.seed = seed
        self.processing_delay = processing_delay
        self.rng = np.random.default_rng(seed)
        self.queue = EventQueue()
        self.now = 0.0

        n = scenario.node_count
        self.nodes = [olsr.OlsrNodeState(node_id=i, willingness=config.willingness) for i in range(n)]
        self.ledger = EnergyLedger(n)
        self._hello_period = olsr.hello_emission_interval(config)
        self._hello_seq = [0] * n
        self._tc_seq = [0] * n

        self.control_tx = 0
        self.data_sent = 0
        self.data_delivered = 0
        self.data_dropped = 0
        self._delays: List[float] = []
        self._hops: List[int] = []

    def _jitter(self, period: float) -> float:
        return float(self.rng.uniform(0.0, period / 4))

    def _schedule(self, time: float, kind: EventKind, node: int = -1, payload: Any = None) -> None:
        if time <= self.scenario.sim_duration:
            self.queue.push(time, kind, node, payload)

    def _schedule_slot(self, kind: EventKind, node: int, period: float, slot: int) -> None:
        self._schedule(slot * period + self._jitter(period), kind, node, slot)

    def run(self) -> schema.SimMetrics:
        for node in range(self.scenario.node_count):
            self._schedule_slot(EventKind.EMIT_HELLO, node, self._hello_period, 0)
            self._schedule_slot(EventKind.EMIT_TC, node, self.config.tc_interval, 0)
        for index, flow in enumerate(self.scenario.flows):
            self._schedule(flow.start, EventKind.CBR_SEND, flow.source, (index, 0))
            self._schedule(flow.end, EventKind.FLOW_END, flow.source, index)
        # events at exactly sim_duration still run
        self.queue.push(self.scenario.sim_duration, EventKind.SIM_END, last=True)

        while self.queue:
            event = self.queue.pop()
            self.now = event.time
            if event.kind == EventKind.SIM_END:
                break
            self._dispatch(event)
        logger.debug(
            f"seed {self.seed}: {self.control_tx} control tx, {self.data_delivered}/{self.data_sent} delivered"
        )
        return self.metrics()

    def _dispatch(self, event: Event) -> None:
        if event.kind == EventKind.EMIT_HELLO:
            state = olsr.expire(self.nodes[event.node], self.now)
            self._hello_seq[event.node] += 1
            self._broadcast(event.node, olsr.make_hello(state, self._hello_seq[event.node]))
            self._schedule_slot(EventKind.EMIT_HELLO, event.node, self._hello_period, event.payload + 1)
        elif event.kind == EventKind.EMIT_TC:
            state = olsr.expire(self.nodes[event.node], self.now)
            if state.mpr_selector_set:
                self._tc_seq[event.node] += 1
                self._broadcast(event.node, olsr.make_tc(state, self._tc_seq[event.node]))
            self._schedule_slot(EventKind.EMIT_TC, event.node, self.config.tc_interval, event.payload + 1)
        elif event.kind == EventKind.CBR_SEND:
            index, k = event.payload
            flow = self.scenario.flows[index]
            self.data_sent += 1
            self._send_data(event.node, DataPacket(index, flow.source, flow.destination, self.now))
            next_time = flow.start + (k + 1) / flow.rate
            if next_time < flow.end:
                self._schedule(next_time, EventKind.CBR_SEND, event.node, (index, k + 1))
        elif event.kind == EventKind.PACKET_ARRIVAL:
            if isinstance(event.payload, _ControlDelivery):
                for receiver in event.payload.receivers:
                    self._receive_control(receiver, event.payload.message)
            else:
                self._receive_data(event.payload.receiver, event.payload.packet)
        elif event.kind == EventKind.FLOW_END:
            logger.debug(f"flow {event.payload} ended at {self.now:.3f}s")

    # --------- medium ---------
    def _transmit(self, sender: int, size_bits: int, control: bool) -> Tuple[np.ndarray, np.ndarray]:
        """Charge one transmission; returns (in-range nodes, their distances)."""
        positions = self.scenario.trace.positions_at(self.now)
        distances = np.hypot(*(positions - positions[sender]).T)
        in_range = np.flatnonzero(distances <= self.scenario.radio_range)
        in_range = in_range[in_range != sender]
        self.ledger.charge(
            sender, in_range, energy_send(self.nic, size_bits), energy_recv(self.nic, size_bits), control
        )
        return in_range, distances[in_range]

    def _lost(self, distance: float) -> bool:
        p = self.scenario.loss_model.loss_probability(distance, self.scenario.radio_range)
        return p > 0 and self.rng.random() < p

    def _broadcast(self, sender: int, message: olsr.ControlMessage) -> None:
        size_bits = message.size * 8
        in_range, distances = self._transmit(sender, size_bits, control=True)
        self.control_tx += 1
        receivers = tuple(int(r) for r, d in zip(in_range, distances) if not self._lost(d))
        if receivers:
            arrival = self.now + packet_airtime(size_bits, self.scenario.bandwidth)
            self.queue.push(arrival, EventKind.PACKET_ARRIVAL, sender, _ControlDelivery(message, receivers))

    def _receive_control(self, receiver: int, message: olsr.ControlMessage) -> None:
        state = olsr.expire(self.nodes[receiver], self.now)
        if message.kind == olsr.MessageKind.HELLO:
            olsr.process_hello(state, message, self.now, self.config)
            return
        link = state.link_set.get(message.sender)
        if link is None or not link.sym or message.originator == receiver:
            return
        if olsr.is_duplicate(state, message.originator, message.seq_no, self.now):
            return
        olsr.process_tc(state, message, self.now, self.config)
        if olsr.should_forward(state, message.originator, message.seq_no, message.sender, self.now, self.config):
            self._broadcast(receiver, replace(message, sender=receiver))

    def _send_data(self, node: int, packet: DataPacket) -> None:
        state = olsr.expire(self.nodes[node], self.now)
        route = olsr.current_routes(state).get(packet.destination)
        if route is None or packet.hops >= MAX_DATA_HOPS:
            self.data_dropped += 1
            return
        size_bits = self.scenario.flows[packet.flow].packet_size * 8
        in_range, distances = self._transmit(node, size_bits, control=False)
        hit = np.flatnonzero(in_range == route.next_hop)
        if not len(hit) or self._lost(distances[hit[0]]):
            self.data_dropped += 1
            return
        arrival = self.now + packet_airtime(size_bits, self.scenario.bandwidth) + self.processing_delay
        self.queue.push(arrival, EventKind.PACKET_ARRIVAL, node, _DataDelivery(packet, route.next_hop))

    def _receive_data(self, node: int, packet: DataPacket) -> None:
        packet.hops += 1
        if node == packet.destination:
            self.data_delivered += 1
            self._delays.append(self.now - packet.created)
            self._hops.append(packet.hops)
            return
        self._send_data(node, packet)

    # --------- results ---------
    def routing_table(self, node: int) -> Dict[int, olsr.Route]:
        state = olsr.expire(self.nodes[node], self.now)
        return olsr.compute_routes(state)

    def metrics(self) -> schema.SimMetrics:
        delivered = self.data_delivered
        return schema.SimMetrics(
            pdr=100.0 * delivered / self.data_sent if self.data_sent else None,
            e2ed_ms=1000.0 * float(np.mean(self._delays)) if delivered else None,
            nrl=100.0 * self.control_tx / delivered if delivered else None,
            hops=float(np.mean(self._hops)) if delivered else None,
            e_sent_mj=self.ledger.total_sent,
            e_recv_mj=self.ledger.total_recv,
            e_control_mj=self.ledger.e_control,
            e_data_mj=self.ledger.e_data,
            node_count=self.scenario.node_count,
            data_sent=self.data_sent,
            data_delivered=delivered,
            control_tx=self.control_tx,
            per_node_energy_mj=(self.ledger.e_sent + self.ledger.e_recv).tolist(),
        )


def run_simulation(
    scenario: Scenario,
    config: Union[schema.OlsrConfig, Dict[str, Any]],
    nic: NicProfile = DEFAULT_NIC,
    seed: int = 0,
    *,
    allow_no_flows: bool = False,
    processing_delay: float = DEFAULT_PROCESSING_DELAY,
) -> schema.SimMetrics:
    return Simulation(
        scenario, config, nic, seed, allow_no_flows=allow_no_flows, processing_delay=processing_delay
    ).run()


@dataclass(frozen=True)
class ReferenceComparison:
    metrics: schema.SimMetrics
    reference: schema.SimMetrics
    gap_energy: float
    gap_pdr: Optional[float]


def compare_against_reference(
    scenario: Scenario,
    config: schema.OlsrConfig,
    nic: NicProfile = DEFAULT_NIC,
    seed: int = 0,
) -> ReferenceComparison:
    """Run `config` and the RFC defaults under the same seed and report both gaps."""
    from analysis import gap_energy, gap_pdr  # analysis depends on this module

    metrics = run_simulation(scenario, config, nic, seed)
    reference = run_simulation(scenario, olsr.rfc_default(), nic, seed)
    pdr_gap = None
    if metrics.pdr is not None and reference.pdr is not None:
        pdr_gap = gap_pdr(metrics.pdr, reference.pdr)
    return ReferenceComparison(
        metrics=metrics,
        reference=reference,
        gap_energy=gap_energy(metrics.e_total_mj, reference.e_total_mj),
        gap_pdr=pdr_gap,
    )
