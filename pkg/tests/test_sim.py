import numpy as np
import pytest
from pydantic import ValidationError
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path
from scipy.spatial.distance import cdist

import schema
from conftest import make_static_scenario
from errors import ConfigurationError
from olsr import rfc_default
from scenario import generate_grid_scenario, preset_grid, static_trace
from sim import (
    DEFAULT_NIC,
    EventKind,
    EventQueue,
    NicProfile,
    Simulation,
    broadcast_energy,
    compare_against_reference,
    energy_recv,
    energy_send,
    neighbors_in_range,
    packet_airtime,
    run_simulation,
)

RFC = rfc_default()
MAX_INTERVALS = schema.OlsrConfig(
    hello_interval=15.0,
    refresh_interval=15.0,
    tc_interval=35.0,
    willingness=3,
    neighb_hold_time=45.0,
    top_hold_time=90.0,
    mid_hold_time=90.0,
    dup_hold_time=90.0,
)


# --------- Energy model ---------
@pytest.mark.parametrize(
    "size, bandwidth, expected",
    [(0, 6e6, 0.0), (6e6, 6e6, 1.0), (4096, 6e6, 6.8267e-4)],
)
def test_packet_airtime(size, bandwidth, expected):
    assert packet_airtime(size, bandwidth) == pytest.approx(expected, rel=1e-4)


def test_energy_send():
    assert energy_send(DEFAULT_NIC, 0) == 0.0
    assert energy_send(DEFAULT_NIC, 6e6) == pytest.approx(2200.0)
    assert energy_send(DEFAULT_NIC, 4096) == pytest.approx(1.501867, rel=1e-6)


def test_energy_recv():
    assert energy_recv(DEFAULT_NIC, 0) == 0.0
    assert energy_recv(DEFAULT_NIC, 6e6) == pytest.approx(1300.0)
    assert energy_recv(DEFAULT_NIC, 4096) == pytest.approx(0.887467, rel=1e-6)


def test_broadcast_energy():
    assert broadcast_energy(DEFAULT_NIC, 4096, 0) == energy_send(DEFAULT_NIC, 4096)
    assert broadcast_energy(DEFAULT_NIC, 4096, 3) == pytest.approx(4.16427, rel=1e-5)
    assert broadcast_energy(DEFAULT_NIC, 1234, 1) == pytest.approx(
        energy_send(DEFAULT_NIC, 1234) + energy_recv(DEFAULT_NIC, 1234)
    )


def test_nic_profile_must_be_positive():
    with pytest.raises(ConfigurationError):
        NicProfile(i_recv=0.0)


# --------- Event queue ---------
def test_event_queue_orders_by_time_then_insertion():
    queue = EventQueue()
    queue.push(5.0, EventKind.EMIT_TC, node=1)
    queue.push(1.0, EventKind.EMIT_HELLO, node=2)
    queue.push(5.0, EventKind.CBR_SEND, node=3)
    queue.push(1.0, EventKind.EMIT_HELLO, node=0)
    popped = [queue.pop() for _ in range(len(queue))]
    assert [(e.time, e.node) for e in popped] == [(1.0, 2), (1.0, 0), (5.0, 1), (5.0, 3)]


def test_last_events_leave_after_same_time_events():
    queue = EventQueue()
    queue.push(5.0, EventKind.SIM_END, last=True)
    queue.push(5.0, EventKind.EMIT_HELLO, node=1)
    queue.push(6.0, EventKind.EMIT_TC, node=2)
    assert [queue.pop().kind for _ in range(3)] == [EventKind.EMIT_HELLO, EventKind.SIM_END, EventKind.EMIT_TC]


class RecordingSimulation(Simulation):
    """Schedules one extra event at the very end of the run, from inside the run."""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.dispatched = []

    def _dispatch(self, event):
        self.dispatched.append(event)
        if event.kind == EventKind.FLOW_END and event.payload == 0:
            self._schedule(self.scenario.sim_duration, EventKind.FLOW_END, event.node, "final")
        super()._dispatch(event)


def test_events_at_sim_duration_are_dispatched(two_node_scenario):
    simulation = RecordingSimulation(two_node_scenario, RFC, seed=1)
    simulation.run()
    final = [e for e in simulation.dispatched if e.payload == "final"]
    assert [e.time for e in final] == [two_node_scenario.sim_duration]
    assert max(e.time for e in simulation.dispatched) <= two_node_scenario.sim_duration


# --------- Radio ---------
def test_neighbors_just_inside_and_outside_range():
    inside = static_trace([(0.0, 0.0), (499.0, 0.0)], 10.0)
    outside = static_trace([(0.0, 0.0), (501.0, 0.0)], 10.0)
    assert neighbors_in_range(inside, 0, 0.0, 500.0) == {1}
    assert neighbors_in_range(inside, 1, 5.0, 500.0) == {0}
    assert neighbors_in_range(outside, 0, 0.0, 500.0) == set()


def test_collinear_neighbors():
    trace = static_trace([(0.0, 0.0), (400.0, 0.0), (800.0, 0.0)], 10.0)
    assert neighbors_in_range(trace, 1, 0.0, 500.0) == {0, 2}
    assert neighbors_in_range(trace, 0, 0.0, 500.0) == {1}
    assert neighbors_in_range(trace, 2, 0.0, 500.0) == {1}


# --------- run_simulation ---------
def test_two_nodes_in_range_deliver_everything(two_node_scenario):
    metrics = run_simulation(two_node_scenario, RFC, seed=1)
    assert metrics.data_sent == 40
    assert metrics.pdr == 100.0
    assert metrics.hops == 1.0
    assert metrics.e2ed_ms == pytest.approx(1000 * (packet_airtime(4096, 6e6) + 0.002))
    assert metrics.nrl == pytest.approx(100.0 * metrics.control_tx / metrics.data_delivered)


def test_two_nodes_out_of_range():
    flow = schema.CbrFlow(source=0, destination=1, start=20.0, duration=10.0, rate=4.0)
    scenario = make_static_scenario([(0.0, 0.0), (800.0, 0.0)], flows=[flow], duration=40.0)
    metrics = run_simulation(scenario, RFC, seed=1)
    assert metrics.pdr == 0.0
    assert metrics.e_data_mj == 0.0
    assert metrics.e_recv_mj == 0.0
    assert metrics.e_control_mj > 0.0
    assert metrics.hops is None
    assert metrics.e2ed_ms is None


def test_total_loss_at_range_edge():
    flow = schema.CbrFlow(source=0, destination=1, start=20.0, duration=10.0, rate=4.0)
    scenario = make_static_scenario(
        [(0.0, 0.0), (500.0, 0.0)],
        flows=[flow],
        duration=40.0,
        loss_model=schema.LossModel(kind=schema.LossKind.BERNOULLI, p_at_max_range=1.0),
    )
    metrics = run_simulation(scenario, RFC, seed=3)
    assert metrics.pdr == 0.0
    # receptions are charged even when the frame is lost
    assert metrics.e_recv_mj > 0.0


def test_chain_delivers_over_three_hops(chain_scenario):
    metrics = run_simulation(chain_scenario, RFC, seed=2)
    assert metrics.pdr == 100.0
    assert metrics.hops == 3.0
    assert metrics.e2ed_ms == pytest.approx(3000 * (packet_airtime(4096, 6e6) + 0.002))


def test_same_seed_same_metrics(chain_scenario):
    assert run_simulation(chain_scenario, RFC, seed=9) == run_simulation(chain_scenario, RFC, seed=9)


def test_no_flows_is_a_configuration_error():
    scenario = make_static_scenario([(0.0, 0.0), (100.0, 0.0)], duration=20.0)
    with pytest.raises(ConfigurationError, match="no data flows"):
        run_simulation(scenario, RFC)


def test_no_flows_mode_reports_control_energy_only():
    scenario = make_static_scenario([(0.0, 0.0), (100.0, 0.0), (200.0, 0.0)], duration=20.0)
    metrics = run_simulation(scenario, RFC, allow_no_flows=True)
    assert metrics.pdr is None
    assert metrics.nrl is None
    assert metrics.e_data_mj == 0.0
    assert metrics.e_total_mj == pytest.approx(metrics.e_control_mj)
    assert metrics.e_total_per_vehicle_mj == pytest.approx(metrics.e_total_mj / 3)


def test_invalid_config_is_rejected(two_node_scenario):
    with pytest.raises(ValidationError):
        run_simulation(two_node_scenario, {**RFC.model_dump(), "willingness": 9})


def test_metrics_csv_row(two_node_scenario):
    metrics = run_simulation(two_node_scenario, RFC, seed=1)
    row = metrics.csv_row("two", "rfc", 1)
    assert list(row) == schema.METRICS_CSV_COLUMNS
    assert row["e_total_mj"] == pytest.approx(metrics.e_sent_mj + metrics.e_recv_mj)
    assert row["control_tx"] == metrics.control_tx


class ShadowSimulation(Simulation):
    """Keeps an independent tally of every transmission."""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.shadow_sent = 0.0
        self.shadow_recv = 0.0

    def _transmit(self, sender, size_bits, control):
        in_range, distances = super()._transmit(sender, size_bits, control)
        self.shadow_sent += energy_send(self.nic, size_bits)
        self.shadow_recv += len(in_range) * energy_recv(self.nic, size_bits)
        return in_range, distances


def test_energy_conservation_on_mobile_scenario():
    spec, _ = preset_grid("U1", duration=60.0)
    flows = schema.FlowTemplate(start=20.0, duration=30.0, rate=4.0)
    scenario = generate_grid_scenario(spec, 5, flows, seed=4)
    simulation = ShadowSimulation(scenario, RFC, seed=4)
    metrics = simulation.run()
    assert metrics.e_sent_mj == pytest.approx(simulation.shadow_sent)
    assert metrics.e_recv_mj == pytest.approx(simulation.shadow_recv)
    assert sum(metrics.per_node_energy_mj) == pytest.approx(metrics.e_total_mj)
    assert metrics.e_control_mj + metrics.e_data_mj == pytest.approx(metrics.e_total_mj)
    assert 0.0 <= metrics.pdr <= 100.0


def test_doubling_intervals_reduces_control_traffic(chain_scenario):
    doubled = schema.OlsrConfig(
        hello_interval=4.0,
        refresh_interval=4.0,
        tc_interval=10.0,
        willingness=3,
        neighb_hold_time=12.0,
        top_hold_time=30.0,
        mid_hold_time=30.0,
        dup_hold_time=60.0,
    )
    base = run_simulation(chain_scenario, RFC, seed=5)
    slow = run_simulation(chain_scenario, doubled, seed=5)
    assert slow.control_tx < base.control_tx
    assert slow.e_control_mj < base.e_control_mj


def test_relabeled_chain_gives_same_delivery_and_data_energy(chain_scenario):
    reversed_flow = schema.CbrFlow(source=3, destination=0, start=30.0, duration=20.0, rate=2.0)
    positions = [(1200.0, 0.0), (800.0, 0.0), (400.0, 0.0), (0.0, 0.0)]
    relabeled = make_static_scenario(positions, flows=[reversed_flow], duration=60.0)
    original = run_simulation(chain_scenario, RFC, seed=6)
    mirrored = run_simulation(relabeled, RFC, seed=6)
    assert mirrored.pdr == original.pdr
    assert mirrored.data_delivered == original.data_delivered
    assert mirrored.e_data_mj == pytest.approx(original.e_data_mj)


def test_static_routes_match_breadth_first_distances():
    rng = np.random.default_rng(31)
    for case in range(200):
        count = int(rng.integers(2, 16))
        positions = rng.uniform(0.0, 1400.0, size=(count, 2))
        scenario = make_static_scenario([tuple(p) for p in positions], duration=18.0, name=f"random-{case}")
        simulation = Simulation(scenario, RFC, seed=case, allow_no_flows=True)
        simulation.run()

        adjacency = (cdist(positions, positions) <= scenario.radio_range).astype(float)
        np.fill_diagonal(adjacency, 0.0)
        distances = shortest_path(csr_matrix(adjacency), unweighted=True, directed=False)
        for node in range(count):
            table = simulation.routing_table(node)
            for dest in range(count):
                if dest == node:
                    continue
                expected = distances[node, dest]
                if np.isfinite(expected):
                    assert dest in table and table[dest].hops == expected, (case, node, dest)
                else:
                    assert dest not in table, (case, node, dest)


# --------- compare_against_reference ---------
def test_self_comparison_has_zero_gaps(two_node_scenario):
    comparison = compare_against_reference(two_node_scenario, RFC, seed=3)
    assert comparison.gap_energy == 0.0
    assert comparison.gap_pdr == 0.0
    assert comparison.metrics == comparison.reference


def test_maximal_intervals_send_fewer_control_messages(chain_scenario):
    comparison = compare_against_reference(chain_scenario, MAX_INTERVALS, seed=3)
    assert comparison.metrics.control_tx < comparison.reference.control_tx


@pytest.mark.slow
def test_energy_aware_config_saves_energy_on_u2():
    from olsr import energy_aware_default

    spec, flows = preset_grid("U2")
    scenario = generate_grid_scenario(spec, flows, schema.FlowTemplate(), seed=17)
    comparison = compare_against_reference(scenario, energy_aware_default(), seed=17)
    assert comparison.gap_energy > 0
