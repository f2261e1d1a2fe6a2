"""VANET scenarios: vehicle mobility traces, radio parameters and CBR flows.

Traces are stored per node as piecewise-linear sample sequences. Scenarios are
immutable and safe to hand to worker processes by value.
"""
import csv
import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, NamedTuple, Optional, Sequence, TextIO, Tuple, Union

import numpy as np
from pydantic import ValidationError

import schema
from errors import ConfigurationError, InputError, ScenarioValidationError, TraceParseError, UnknownNodeError

logger = logging.getLogger(__name__)

TRACE_HEADER = ("time_s", "node_id", "x_m", "y_m")
_BOUNDS_TOLERANCE = 1e-6


@dataclass(frozen=True, eq=False)
class MobilityTrace:
    node_count: int
    times: Tuple[np.ndarray, ...]
    xs: Tuple[np.ndarray, ...]
    ys: Tuple[np.ndarray, ...]
    _grid: Optional[np.ndarray] = field(default=None, repr=False)
    _grid_xy: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        for arrays in (self.times, self.xs, self.ys):
            for array in arrays:
                array.setflags(write=False)
        # Generated traces share one sampling grid; positions then interpolate in one shot.
        if self.node_count and all(np.array_equal(t, self.times[0]) for t in self.times[1:]):
            object.__setattr__(self, "_grid", self.times[0])
            object.__setattr__(self, "_grid_xy", np.stack([np.stack(self.xs), np.stack(self.ys)], axis=-1))

    @classmethod
    def from_samples(cls, samples: Iterable[Tuple[float, int, float, float]]) -> "MobilityTrace":
        rows = sorted((float(t), int(n), float(x), float(y)) for t, n, x, y in samples)
        if not rows:
            raise ScenarioValidationError("trace has no samples")
        per_node: Dict[int, List[Tuple[float, float, float]]] = {}
        previous = None
        for t, node, x, y in rows:
            if not (np.isfinite(t) and np.isfinite(x) and np.isfinite(y)):
                raise ScenarioValidationError(f"non-finite sample for node {node} at t={t}")
            if t < 0:
                raise ScenarioValidationError(f"negative sample time {t} for node {node}")
            if (t, node) == previous:
                raise ScenarioValidationError(f"duplicate sample for node {node} at t={t}")
            previous = (t, node)
            per_node.setdefault(node, []).append((t, x, y))

        node_count = len(per_node)
        if sorted(per_node) != list(range(node_count)):
            raise ScenarioValidationError("node ids must be contiguous from 0")
        for node, node_rows in per_node.items():
            if node_rows[0][0] != 0.0:
                raise ScenarioValidationError(f"node {node} has no sample at t=0")

        columns = [np.array(per_node[n], dtype=float) for n in range(node_count)]
        return cls(
            node_count=node_count,
            times=tuple(c[:, 0].copy() for c in columns),
            xs=tuple(c[:, 1].copy() for c in columns),
            ys=tuple(c[:, 2].copy() for c in columns),
        )

    @property
    def duration(self) -> float:
        return max(float(t[-1]) for t in self.times)

    def samples(self) -> Iterator[Tuple[float, int, float, float]]:
        """Samples ordered by time, then node id."""
        nodes = np.concatenate([np.full(len(t), n) for n, t in enumerate(self.times)])
        times = np.concatenate(self.times)
        xs, ys = np.concatenate(self.xs), np.concatenate(self.ys)
        for i in np.lexsort((nodes, times)):
            yield float(times[i]), int(nodes[i]), float(xs[i]), float(ys[i])

    def positions_at(self, t: float) -> np.ndarray:
        """(node_count, 2) array of every node's position at time t."""
        if self._grid is not None:
            grid = self._grid
            if t <= grid[0]:
                return self._grid_xy[:, 0, :]
            if t >= grid[-1]:
                return self._grid_xy[:, -1, :]
            i = int(np.searchsorted(grid, t, side="right")) - 1
            frac = (t - grid[i]) / (grid[i + 1] - grid[i])
            return self._grid_xy[:, i, :] + frac * (self._grid_xy[:, i + 1, :] - self._grid_xy[:, i, :])
        return np.array([
            (np.interp(t, self.times[n], self.xs[n]), np.interp(t, self.times[n], self.ys[n]))
            for n in range(self.node_count)
        ])

    def bounding_box(self) -> Tuple[float, float, float, float]:
        xs, ys = np.concatenate(self.xs), np.concatenate(self.ys)
        return float(xs.min()), float(ys.min()), float(xs.max()), float(ys.max())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MobilityTrace):
            return NotImplemented
        return self.node_count == other.node_count and all(
            np.array_equal(a, b)
            for mine, theirs in ((self.times, other.times), (self.xs, other.xs), (self.ys, other.ys))
            for a, b in zip(mine, theirs)
        )

    __hash__ = None


def position_at(trace: MobilityTrace, node: int, t: float) -> Tuple[float, float]:
    """Linear interpolation between bracketing samples; held after the last one."""
    if not 0 <= node < trace.node_count:
        raise UnknownNodeError(node)
    times = trace.times[node]
    return float(np.interp(t, times, trace.xs[node])), float(np.interp(t, times, trace.ys[node]))


def static_trace(positions: Sequence[Tuple[float, float]], duration: float) -> MobilityTrace:
    samples = []
    for node, (x, y) in enumerate(positions):
        samples.append((0.0, node, x, y))
        if duration > 0:
            samples.append((duration, node, x, y))
    return MobilityTrace.from_samples(samples)


# --------- Trace CSV ---------
def serialize_trace(trace: MobilityTrace) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(TRACE_HEADER)
    for t, node, x, y in trace.samples():
        writer.writerow((repr(t), node, repr(x), repr(y)))
    return buffer.getvalue()


def load_trace(text: Union[str, TextIO]) -> MobilityTrace:
    stream = io.StringIO(text) if isinstance(text, str) else text
    samples = []
    reader = csv.reader(stream)
    for row in reader:
        # physical line, so quoted multi-line cells do not shift later rows
        line_no = reader.line_num
        if not row or all(not cell.strip() for cell in row):
            continue
        if line_no == 1 and not _is_number(row[0]):
            continue
        if len(row) != 4:
            raise TraceParseError(f"expected 4 columns, got {len(row)}", line_no)
        try:
            t, x, y = float(row[0]), float(row[2]), float(row[3])
            node = int(row[1].strip())
        except ValueError:
            raise TraceParseError(f"malformed row {','.join(row)!r}", line_no)
        if not all(np.isfinite(v) for v in (t, x, y)):
            raise TraceParseError("non-finite value", line_no)
        samples.append((t, node, x, y))
    return MobilityTrace.from_samples(samples)


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


# --------- Scenario ---------
@dataclass(frozen=True)
class Scenario:
    area: schema.Area
    trace: MobilityTrace
    flows: Tuple[schema.CbrFlow, ...]
    radio_range: float = 500.0
    bandwidth: float = 6e6
    sim_duration: float = 180.0
    loss_model: schema.LossModel = field(default_factory=schema.LossModel)
    scenario_class: str = ""
    name: str = "scenario"

    def __post_init__(self):
        object.__setattr__(self, "flows", tuple(self.flows))
        if self.radio_range <= 0:
            raise ScenarioValidationError("radio_range must be positive")
        if self.bandwidth <= 0:
            raise ScenarioValidationError("bandwidth must be positive")
        if self.sim_duration <= 0:
            raise ScenarioValidationError("sim_duration must be positive")
        for flow in self.flows:
            for node in (flow.source, flow.destination):
                if node >= self.trace.node_count:
                    raise ScenarioValidationError(f"flow references unknown node {node}")
            if flow.end > self.sim_duration + 1e-9:
                raise ScenarioValidationError(
                    f"flow {flow.source}->{flow.destination} ends at {flow.end}s, after the simulation"
                )
        min_x, min_y, max_x, max_y = self.trace.bounding_box()
        if (min_x < -_BOUNDS_TOLERANCE or min_y < -_BOUNDS_TOLERANCE
                or max_x > self.area.width + _BOUNDS_TOLERANCE or max_y > self.area.height + _BOUNDS_TOLERANCE):
            raise ScenarioValidationError("trace leaves the declared area")

    @property
    def node_count(self) -> int:
        return self.trace.node_count


# --------- Grid mobility ---------
class Preset(NamedTuple):
    area: schema.Area
    rows: int
    cols: int
    densities: Tuple[Tuple[int, int], ...]  # (vehicles, flows)


PRESETS: Dict[str, Preset] = {
    "U1": Preset(schema.Area(width=400, height=300), 4, 5, ((20, 10),)),
    "U2": Preset(schema.Area(width=600, height=400), 5, 7, ((30, 15), (40, 20))),
    "U3": Preset(schema.Area(width=600, height=600), 7, 7, ((45, 23), (60, 30))),
}


def preset_grid(name: str, density: int = 0, **overrides) -> Tuple[schema.GridSpec, int]:
    """Grid spec and flow count for a named scenario class."""
    try:
        preset = PRESETS[name]
    except KeyError:
        raise ConfigurationError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    vehicles, flows = preset.densities[density % len(preset.densities)]
    spec = schema.GridSpec(area=preset.area, rows=preset.rows, cols=preset.cols, vehicle_count=vehicles, **overrides)
    return spec, flows


def _grid_walk(spec: schema.GridSpec, rng: np.random.Generator, street_x: np.ndarray, street_y: np.ndarray):
    def neighbors(r: int, c: int) -> List[Tuple[int, int]]:
        return [
            (r + dr, c + dc)
            for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1))
            if 0 <= r + dr < spec.rows and 0 <= c + dc < spec.cols
        ]

    def point(node: Tuple[int, int]) -> np.ndarray:
        return np.array([street_x[node[1]], street_y[node[0]]])

    prev = (int(rng.integers(spec.rows)), int(rng.integers(spec.cols)))
    options = neighbors(*prev)
    target = options[int(rng.integers(len(options)))]
    here = point(prev) + rng.random() * (point(target) - point(prev))

    t = 0.0
    times, points = [0.0], [here]
    while t < spec.duration:
        speed = rng.uniform(spec.speed_min, spec.speed_max)
        if speed <= 0:
            break  # parked for the rest of the run
        t += float(np.linalg.norm(point(target) - here)) / speed
        times.append(t)
        points.append(point(target))
        if spec.pause_time > 0:
            t += spec.pause_time
            times.append(t)
            points.append(point(target))
        options = [n for n in neighbors(*target) if n != prev] or [prev]
        prev, target = target, options[int(rng.integers(len(options)))]
        here = point(prev)
    return np.array(times), np.array(points)


def generate_grid_scenario(
    spec: schema.GridSpec,
    flow_count: int,
    flow_params: schema.FlowTemplate,
    seed: int,
    *,
    radio_range: float = 500.0,
    bandwidth: float = 6e6,
    loss_model: Optional[schema.LossModel] = None,
    sim_duration: Optional[float] = None,
    scenario_class: str = "",
    name: str = "scenario",
) -> Scenario:
    """Manhattan-grid mobility with random turns and intersection pauses, plus random CBR pairs."""
    n = spec.vehicle_count
    pairs = n * (n - 1)
    if flow_count < 0 or flow_count > pairs:
        raise ConfigurationError(f"{flow_count} flows requested but only {pairs} distinct node pairs exist")

    mobility_seq, flow_seq = np.random.SeedSequence(seed).spawn(2)
    mobility_rng = np.random.default_rng(mobility_seq)
    street_x = np.linspace(0.0, spec.area.width, spec.cols)
    street_y = np.linspace(0.0, spec.area.height, spec.rows)

    sample_times = np.arange(0.0, spec.duration + 1e-9, spec.sample_step)
    if sample_times[-1] < spec.duration - 1e-9:
        sample_times = np.append(sample_times, spec.duration)

    xs, ys = [], []
    for _ in range(n):
        times, points = _grid_walk(spec, mobility_rng, street_x, street_y)
        xs.append(np.interp(sample_times, times, points[:, 0]))
        ys.append(np.interp(sample_times, times, points[:, 1]))
    trace = MobilityTrace(
        node_count=n,
        times=tuple(sample_times.copy() for _ in range(n)),
        xs=tuple(xs),
        ys=tuple(ys),
    )

    flow_rng = np.random.default_rng(flow_seq)
    flows = []
    if flow_count:
        for k in flow_rng.choice(pairs, size=flow_count, replace=False):
            source, offset = divmod(int(k), n - 1)
            destination = offset + (offset >= source)
            flows.append(schema.CbrFlow(source=source, destination=destination, **flow_params.model_dump()))

    logger.debug(f"Generated {name}: {n} vehicles, {len(flows)} flows, seed {seed}")
    return Scenario(
        area=spec.area,
        trace=trace,
        flows=tuple(flows),
        radio_range=radio_range,
        bandwidth=bandwidth,
        sim_duration=spec.duration if sim_duration is None else sim_duration,
        loss_model=loss_model or schema.LossModel(),
        scenario_class=scenario_class,
        name=name,
    )


def generate_validation_suite(
    count: int,
    seed: int,
    flow_params: schema.FlowTemplate,
    rates: Sequence[float] = (2.0, 4.0, 8.0),
    classes: Sequence[str] = ("U2", "U3"),
) -> List[Scenario]:
    """Unseen scenarios spread over classes, vehicle densities and CBR rates."""
    suite = []
    for k in range(count):
        scenario_class = classes[k % len(classes)]
        density = (k // len(classes)) % 2
        rate = rates[(k // (2 * len(classes))) % len(rates)]
        spec, flows = preset_grid(scenario_class, density, duration=max(180.0, flow_params.start + flow_params.duration))
        sub_seed = int(np.random.SeedSequence([seed, k]).generate_state(1)[0])
        suite.append(generate_grid_scenario(
            spec, flows, flow_params.model_copy(update={"rate": rate}), sub_seed,
            scenario_class=scenario_class, name=f"{scenario_class.lower()}-{k:02d}",
        ))
    return suite


# --------- Scenario files ---------
def save_scenario(scenario: Scenario, directory: Path) -> Path:
    directory.mkdir(parents=True, exist_ok=True)
    trace_path = directory / f"{scenario.name}.trace.csv"
    trace_path.write_text(serialize_trace(scenario.trace), encoding="utf-8")
    document = schema.ScenarioFile(
        area=scenario.area,
        radio_range_m=scenario.radio_range,
        bandwidth_bps=scenario.bandwidth,
        duration_s=scenario.sim_duration,
        loss_model=scenario.loss_model,
        trace_file=trace_path.name,
        flows=list(scenario.flows),
        scenario_class=scenario.scenario_class,
    )
    path = directory / f"{scenario.name}.json"
    path.write_text(document.model_dump_json(indent=2) + "\n", encoding="utf-8")
    return path


def load_scenario(path: Path) -> Scenario:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise InputError(f"cannot read scenario {path}: {e}")
    except json.JSONDecodeError as e:
        raise InputError(f"scenario {path} is not valid JSON: {e}")
    try:
        document = schema.ScenarioFile.model_validate(raw)
    except ValidationError as e:
        raise ScenarioValidationError(f"invalid scenario {path}: {e}")

    trace_path = Path(path).parent / document.trace_file
    try:
        with trace_path.open(encoding="utf-8", newline="") as stream:
            trace = load_trace(stream)
    except OSError as e:
        raise InputError(f"cannot read trace {trace_path}: {e}")

    return Scenario(
        area=document.area,
        trace=trace,
        flows=tuple(document.flows),
        radio_range=document.radio_range_m,
        bandwidth=document.bandwidth_bps,
        sim_duration=document.duration_s,
        loss_model=document.loss_model,
        scenario_class=document.scenario_class,
        name=Path(path).stem,
    )
