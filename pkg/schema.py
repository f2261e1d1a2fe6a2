import math
from datetime import datetime
from enum import Enum
from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, computed_field, field_validator, model_validator
from pydantic_core.core_schema import ValidationInfo


class LossKind(str, Enum):
    IDEAL = "ideal"
    BERNOULLI = "bernoulli"


# --------- Protocol Schemas ---------
class OlsrConfig(BaseModel):
    """The eight tunable OLSR parameters; also the decoded genome."""

    hello_interval: float = Field(..., ge=2.0, le=15.0, description="HELLO_INTERVAL (s)")
    refresh_interval: float = Field(..., ge=2.0, le=15.0, description="REFRESH_INTERVAL (s)")
    tc_interval: float = Field(..., ge=4.0, le=35.0, description="TC_INTERVAL (s)")
    willingness: int = Field(..., ge=0, le=7, description="WILLINGNESS, 0 = never relay, 7 = always")
    neighb_hold_time: float = Field(..., ge=5.5, le=45.0, description="NEIGHB_HOLD_TIME (s)")
    top_hold_time: float = Field(..., ge=10.5, le=90.0, description="TOP_HOLD_TIME (s)")
    mid_hold_time: float = Field(..., ge=10.5, le=90.0, description="MID_HOLD_TIME (s), inert for single-interface nodes")
    dup_hold_time: float = Field(..., ge=10.5, le=90.0, description="DUP_HOLD_TIME (s)")

    model_config = ConfigDict(frozen=True, extra="forbid")


# --------- Scenario Schemas ---------
class Area(BaseModel):
    width: float = Field(..., gt=0, description="Area width (m)")
    height: float = Field(..., gt=0, description="Area height (m)")

    model_config = ConfigDict(frozen=True)

    @property
    def surface(self) -> float:
        return self.width * self.height


class LossModel(BaseModel):
    kind: LossKind = Field(LossKind.IDEAL, description="ideal medium or distance-scaled Bernoulli loss")
    p_at_max_range: float = Field(0.0, ge=0.0, le=1.0, description="Loss probability at the edge of the radio range")

    model_config = ConfigDict(frozen=True)

    def loss_probability(self, distance: float, radio_range: float) -> float:
        if self.kind == LossKind.IDEAL:
            return 0.0
        return self.p_at_max_range * min(distance / radio_range, 1.0)


class FlowTemplate(BaseModel):
    packet_size: int = Field(512, gt=0, description="CBR packet size (bytes)")
    rate: float = Field(4.0, gt=0, description="Packets per second")
    start: float = Field(60.0, ge=0, description="Flow start time (s)")
    duration: float = Field(60.0, gt=0, description="Flow duration (s)")

    model_config = ConfigDict(frozen=True)


class CbrFlow(FlowTemplate):
    source: int = Field(..., ge=0, description="Source node id")
    destination: int = Field(..., ge=0, description="Destination node id")

    @field_validator("destination")
    def validate_endpoints(cls, value: int, info: ValidationInfo) -> int:
        source = info.data.get("source")
        if source is not None and value == source:
            raise ValueError("Source and destination cannot be the same node")
        return value

    @property
    def end(self) -> float:
        return self.start + self.duration


class GridSpec(BaseModel):
    area: Area
    rows: int = Field(..., ge=2, description="Horizontal streets")
    cols: int = Field(..., ge=2, description="Vertical streets")
    vehicle_count: int = Field(..., ge=1)
    speed_min: float = Field(5.0, ge=0, description="m/s")
    speed_max: float = Field(15.0, ge=0, description="m/s")
    pause_time: float = Field(2.0, ge=0, description="Pause at intersections (s)")
    sample_step: float = Field(1.0, gt=0, description="Trace sampling step (s)")
    duration: float = Field(180.0, gt=0, description="Trace duration (s)")

    model_config = ConfigDict(frozen=True)

    @field_validator("speed_max")
    def validate_speeds(cls, value: float, info: ValidationInfo) -> float:
        speed_min = info.data.get("speed_min")
        if speed_min is not None and value < speed_min:
            raise ValueError("speed_max must not be below speed_min")
        return value


class ScenarioFile(BaseModel):
    """On-disk scenario document; the trace lives in a separate CSV."""

    area: Area
    radio_range_m: float = Field(500.0, gt=0)
    bandwidth_bps: float = Field(6e6, gt=0)
    duration_s: float = Field(180.0, gt=0)
    loss_model: LossModel = Field(default_factory=LossModel)
    trace_file: str = Field(..., min_length=1, description="Trace CSV path, relative to the scenario file")
    flows: List[CbrFlow] = Field(default_factory=list)
    scenario_class: str = Field("", description="Class label used to group validation reports, e.g. U2")

    @model_validator(mode="after")
    def validate_flow_window(self) -> "ScenarioFile":
        for flow in self.flows:
            if flow.end > self.duration_s + 1e-9:
                raise ValueError(f"flow {flow.source}->{flow.destination} ends after the simulation")
        return self


# --------- Optimization Schemas ---------
class FitnessContext(BaseModel):
    e_rfc: float = Field(..., gt=0, description="Reference energy E_RFC (mJ)")
    pdr_rfc: float = Field(..., gt=0, le=100, description="Reference PDR_RFC (%)")
    w1: float = Field(0.9, description="Energy weight")
    w2: float = Field(-0.1, description="PDR weight")
    delta: float = Field(0.1, description="Normalizing offset")
    pdr_max: float = Field(100.0, gt=0)
    admission: float = Field(0.85, gt=0, le=1, description="Fraction of PDR_RFC below which the penalty applies")

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def validate_weights(self) -> "FitnessContext":
        if not math.isclose(self.w1 + abs(self.w2), 1.0):
            raise ValueError("w1 + |w2| must equal 1")
        return self

    @property
    def pdr_floor(self) -> float:
        return self.admission * self.pdr_rfc


class GaSettings(BaseModel):
    pop_size: int = Field(24, ge=2)
    p_c: float = Field(0.7, ge=0, le=1, description="Crossover probability")
    p_m: float = Field(0.25, ge=0, le=1, description="Per-individual mutation probability")
    generations: int = Field(100, ge=0)
    workers: int = Field(1, ge=1)
    master_seed: int = Field(0, ge=0)
    elitism: int = Field(1, ge=0)

    model_config = ConfigDict(frozen=True)

    @field_validator("pop_size")
    def validate_pop_size(cls, value: int) -> int:
        if value % 2:
            raise ValueError("pop_size must be even")
        return value

    @field_validator("elitism")
    def validate_elitism(cls, value: int, info: ValidationInfo) -> int:
        pop_size = info.data.get("pop_size")
        if pop_size is not None and value >= pop_size:
            raise ValueError("elitism must be smaller than pop_size")
        return value


# --------- Result Schemas ---------
METRICS_CSV_COLUMNS = [
    "scenario_id", "config_id", "seed", "pdr", "e2ed_ms", "nrl", "hops",
    "e_sent_mj", "e_recv_mj", "e_total_mj", "e_total_per_vehicle_mj",
    "data_sent", "data_delivered", "control_tx",
]


class SimMetrics(BaseModel):
    pdr: Optional[float] = Field(None, ge=0, le=100, description="Packet delivery ratio (%), absent without data")
    e2ed_ms: Optional[float] = Field(None, description="Mean end-to-end delay of delivered packets (ms)")
    nrl: Optional[float] = Field(None, description="100 x control transmissions / delivered packets")
    hops: Optional[float] = Field(None, description="Mean hop count of delivered packets")
    e_sent_mj: float = Field(..., ge=0)
    e_recv_mj: float = Field(..., ge=0)
    e_control_mj: float = Field(..., ge=0, description="Share of the total spent on control packets")
    e_data_mj: float = Field(..., ge=0, description="Share of the total spent on data packets")
    node_count: int = Field(..., ge=1)
    data_sent: int = Field(0, ge=0)
    data_delivered: int = Field(0, ge=0)
    control_tx: int = Field(0, ge=0)
    per_node_energy_mj: List[float] = Field(default_factory=list)

    model_config = ConfigDict(frozen=True)

    @computed_field
    @property
    def e_total_mj(self) -> float:
        return self.e_sent_mj + self.e_recv_mj

    @computed_field
    @property
    def e_total_per_vehicle_mj(self) -> float:
        return self.e_total_mj / self.node_count

    def csv_row(self, scenario_id: str, config_id: str, seed: int) -> Dict[str, object]:
        row = {"scenario_id": scenario_id, "config_id": config_id, "seed": seed}
        dumped = self.model_dump()
        for column in METRICS_CSV_COLUMNS[3:]:
            row[column] = dumped[column]
        return row


class RunManifest(BaseModel):
    command: str
    argv: List[str] = Field(..., description="Arguments the command was invoked with, replayable")
    snapshot: Dict[str, object] = Field(default_factory=dict, description="Resolved configuration")
    master_seed: Optional[int] = None
    version: str
    input_digests: Dict[str, str] = Field(default_factory=dict)
    started_at: datetime
    finished_at: Optional[datetime] = None
    outputs: List[str] = Field(default_factory=list)
