import numpy as np
import pytest

import schema
from errors import ConfigurationError, ScenarioValidationError, TraceParseError, UnknownNodeError
from scenario import (
    MobilityTrace,
    Scenario,
    generate_grid_scenario,
    generate_validation_suite,
    load_scenario,
    load_trace,
    position_at,
    preset_grid,
    save_scenario,
    serialize_trace,
    static_trace,
)


# --------- load_trace ---------
def test_load_minimal_trace():
    trace = load_trace("0,0,10,20\n0,1,50,60\n")
    assert trace.node_count == 2
    assert trace.duration == 0.0
    assert position_at(trace, 1, 0.0) == (50.0, 60.0)


def test_load_trace_with_header_and_unsorted_rows():
    text = "time_s,node_id,x_m,y_m\n10,0,100,0\n0,0,0,0\n"
    trace = load_trace(text)
    assert trace.duration == 10.0
    assert position_at(trace, 0, 5.0) == (50.0, 0.0)


def test_load_trace_rejects_duplicate_sample():
    with pytest.raises(ScenarioValidationError):
        load_trace("0,0,1,1\n0,0,2,2\n")


def test_load_trace_requires_sample_at_zero():
    with pytest.raises(ScenarioValidationError):
        load_trace("0,0,1,1\n5,1,2,2\n")


def test_load_trace_reports_line_of_malformed_row():
    with pytest.raises(TraceParseError) as excinfo:
        load_trace("0,0,1,1\n0,1,abc,2\n")
    assert excinfo.value.line == 2
    assert excinfo.value.exit_code == 2


def test_load_trace_line_numbers_count_physical_lines():
    text = "time_s,node_id,x_m,y_m\n0,0,1,1\n\n0,1,\"2\n\",2\n0,2,x,3\n"
    with pytest.raises(TraceParseError) as excinfo:
        load_trace(text)
    assert excinfo.value.line == 6


def test_load_trace_rejects_wrong_column_count():
    with pytest.raises(TraceParseError) as excinfo:
        load_trace("time_s,node_id,x_m,y_m\n0,0,1\n")
    assert excinfo.value.line == 2


def test_load_trace_accepts_full_sampling_grid():
    rows = [f"{t},{n},{n * 10.0},{t * 1.0}" for t in range(181) for n in range(20)]
    trace = load_trace("\n".join(rows) + "\n")
    assert trace.node_count == 20
    assert len(list(trace.samples())) == 20 * 181


def test_serialized_trace_loads_back_equal():
    spec, _ = preset_grid("U1")
    scenario = generate_grid_scenario(spec, 0, schema.FlowTemplate(), seed=3)
    assert load_trace(serialize_trace(scenario.trace)) == scenario.trace


# --------- position_at ---------
def test_position_at_exact_sample():
    trace = MobilityTrace.from_samples([(0, 0, 0.0, 0.0), (10, 0, 100.0, 50.0)])
    assert position_at(trace, 0, 10.0) == (100.0, 50.0)


def test_position_at_interpolates_linearly():
    trace = MobilityTrace.from_samples([(0, 0, 0.0, 0.0), (10, 0, 100.0, 0.0)])
    x, y = position_at(trace, 0, 4.0)
    assert x == pytest.approx(40.0)
    assert y == 0.0


def test_position_held_after_last_sample():
    trace = MobilityTrace.from_samples([
        (0, 0, 0.0, 0.0), (5, 0, 30.0, 0.0),
        (0, 1, 0.0, 0.0), (20, 1, 0.0, 10.0),
    ])
    assert position_at(trace, 0, 15.0) == (30.0, 0.0)


def test_position_at_unknown_node():
    trace = static_trace([(0.0, 0.0)], 10.0)
    with pytest.raises(UnknownNodeError):
        position_at(trace, 3, 1.0)


def test_positions_at_matches_position_at():
    spec, _ = preset_grid("U1")
    trace = generate_grid_scenario(spec, 0, schema.FlowTemplate(), seed=11).trace
    for t in (0.0, 12.3, 90.5, 180.0):
        positions = trace.positions_at(t)
        for node in range(trace.node_count):
            assert tuple(positions[node]) == pytest.approx(position_at(trace, node, t))


# --------- Scenario ---------
def test_scenario_rejects_flow_to_unknown_node():
    flow = schema.CbrFlow(source=0, destination=5, start=0.0, duration=10.0)
    with pytest.raises(ScenarioValidationError):
        Scenario(area=schema.Area(width=100, height=100), trace=static_trace([(0, 0), (10, 10)], 30), flows=(flow,))


def test_scenario_rejects_flow_past_simulation_end():
    flow = schema.CbrFlow(source=0, destination=1, start=20.0, duration=30.0)
    with pytest.raises(ScenarioValidationError):
        Scenario(
            area=schema.Area(width=100, height=100),
            trace=static_trace([(0, 0), (10, 10)], 30),
            flows=(flow,),
            sim_duration=40.0,
        )


def test_scenario_rejects_trace_outside_area():
    with pytest.raises(ScenarioValidationError):
        Scenario(area=schema.Area(width=100, height=100), trace=static_trace([(0, 0), (150, 10)], 30), flows=())


def test_cbr_flow_endpoints_must_differ():
    with pytest.raises(ValueError):
        schema.CbrFlow(source=2, destination=2)


# --------- generate_grid_scenario ---------
def test_single_vehicle_without_flows():
    spec = schema.GridSpec(area=schema.Area(width=200, height=200), rows=2, cols=2, vehicle_count=1)
    scenario = generate_grid_scenario(spec, 0, schema.FlowTemplate(), seed=0)
    assert scenario.node_count == 1
    assert scenario.flows == ()
    assert scenario.trace.duration == pytest.approx(spec.duration)


def test_generation_is_deterministic():
    spec, flows = preset_grid("U1")
    first = generate_grid_scenario(spec, flows, schema.FlowTemplate(), seed=42)
    second = generate_grid_scenario(spec, flows, schema.FlowTemplate(), seed=42)
    assert serialize_trace(first.trace) == serialize_trace(second.trace)
    assert first.flows == second.flows


def test_u1_shape():
    spec, flows = preset_grid("U1")
    scenario = generate_grid_scenario(spec, flows, schema.FlowTemplate(packet_size=512), seed=1)
    assert scenario.area.surface == 120000
    assert scenario.node_count == 20
    assert len(scenario.flows) == 10
    assert all(flow.packet_size == 512 for flow in scenario.flows)
    pairs = {(flow.source, flow.destination) for flow in scenario.flows}
    assert len(pairs) == 10


def test_too_many_flows():
    spec = schema.GridSpec(area=schema.Area(width=200, height=200), rows=2, cols=2, vehicle_count=2)
    with pytest.raises(ConfigurationError):
        generate_grid_scenario(spec, 3, schema.FlowTemplate(), seed=0)


def test_unknown_preset():
    with pytest.raises(ConfigurationError):
        preset_grid("U9")


@pytest.mark.parametrize("seed", [0, 7, 99])
def test_generated_vehicles_stay_on_streets_and_under_speed_limit(seed):
    spec, flows = preset_grid("U2", speed_min=5.0, speed_max=15.0)
    scenario = generate_grid_scenario(spec, flows, schema.FlowTemplate(), seed=seed)
    street_x = np.linspace(0.0, spec.area.width, spec.cols)
    street_y = np.linspace(0.0, spec.area.height, spec.rows)
    for node in range(scenario.node_count):
        times = scenario.trace.times[node]
        xs, ys = scenario.trace.xs[node], scenario.trace.ys[node]
        on_vertical = np.isclose(xs[:, None], street_x[None, :]).any(axis=1)
        on_horizontal = np.isclose(ys[:, None], street_y[None, :]).any(axis=1)
        assert np.all(on_vertical | on_horizontal)
        step = np.hypot(np.diff(xs), np.diff(ys))
        assert np.all(step <= spec.speed_max * np.diff(times) + 1e-6)


def test_validation_suite_spreads_classes():
    suite = generate_validation_suite(4, seed=5, flow_params=schema.FlowTemplate())
    assert [s.name for s in suite] == ["u2-00", "u3-01", "u2-02", "u3-03"]
    assert [s.node_count for s in suite] == [30, 45, 40, 60]
    assert {s.scenario_class for s in suite} == {"U2", "U3"}


# --------- Scenario files ---------
def test_saved_scenario_loads_back(tmp_path):
    spec, flows = preset_grid("U1")
    scenario = generate_grid_scenario(
        spec, flows, schema.FlowTemplate(), seed=9, scenario_class="U1", name="u1-a",
        loss_model=schema.LossModel(kind=schema.LossKind.BERNOULLI, p_at_max_range=0.2),
    )
    path = save_scenario(scenario, tmp_path)
    assert path.name == "u1-a.json"
    assert (tmp_path / "u1-a.trace.csv").exists()

    loaded = load_scenario(path)
    assert loaded.name == "u1-a"
    assert loaded.trace == scenario.trace
    assert loaded.flows == scenario.flows
    assert loaded.loss_model == scenario.loss_model
    assert loaded.scenario_class == "U1"


def test_load_scenario_missing_file(tmp_path):
    from errors import InputError

    with pytest.raises(InputError):
        load_scenario(tmp_path / "nope.json")
