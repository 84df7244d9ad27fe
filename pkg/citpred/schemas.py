from typing import Annotated, Any, Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, BeforeValidator, ConfigDict, Field, PlainSerializer, field_validator, model_validator

from citpred.core.units import FOOT_IN_METERS

# --- Array field types ---

def _as_points(value: Any) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 1 and arr.size == 0:
        arr = arr.reshape(0, 2)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"expected an (N, 2) array of positions, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("positions must be finite")
    return arr


def _as_point(value: Any) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64).reshape(-1)
    if arr.shape != (2,) or not np.all(np.isfinite(arr)):
        raise ValueError(f"expected a finite 2D point, got {value!r}")
    return arr


def _as_int_array(value: Any) -> np.ndarray:
    arr = np.asarray(value)
    if arr.size and not np.issubdtype(arr.dtype, np.integer):
        if not np.all(np.equal(np.mod(arr, 1), 0)):
            raise ValueError("expected integer values")
    return arr.astype(np.int64).reshape(-1)


def _to_list(arr: np.ndarray) -> list:
    return arr.tolist()


Points = Annotated[np.ndarray, BeforeValidator(_as_points), PlainSerializer(_to_list, return_type=list)]
Point = Annotated[np.ndarray, BeforeValidator(_as_point), PlainSerializer(_to_list, return_type=list)]
IntArray = Annotated[np.ndarray, BeforeValidator(_as_int_array), PlainSerializer(_to_list, return_type=list)]


class ArrayModel(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)


# --- Scene geometry ---

class GridSpec(BaseModel):
    """Agent-centric grid; extents in feet, converted to meters on use."""

    model_config = ConfigDict(frozen=True)

    length: float = Field(200.0, gt=0, description="Longitudinal extent (feet)")
    width: float = Field(35.0, gt=0, description="Lateral extent (feet)")
    rows: int = Field(25, ge=1, description="Cells along the direction of travel")
    cols: int = Field(5, ge=1, description="Cells across lanes")

    @property
    def length_m(self) -> float:
        return self.length * FOOT_IN_METERS

    @property
    def width_m(self) -> float:
        return self.width * FOOT_IN_METERS

    @property
    def cell_length_m(self) -> float:
        return self.length_m / self.rows

    @property
    def cell_width_m(self) -> float:
        return self.width_m / self.cols

    @property
    def center_cell(self) -> Tuple[int, int]:
        return self.rows // 2, self.cols // 2

    def row_edges(self) -> np.ndarray:
        # Grid shifted so the center cell is centered on the grid-center agent.
        start = -(self.center_cell[0] + 0.5) * self.cell_length_m
        return start + self.cell_length_m * np.arange(self.rows + 1)

    def col_edges(self) -> np.ndarray:
        start = -(self.center_cell[1] + 0.5) * self.cell_width_m
        return start + self.cell_width_m * np.arange(self.cols + 1)


LATERAL = ("keep", "left", "right")
LONGITUDINAL = ("normal", "brake")


class ManeuverLabel(BaseModel):
    model_config = ConfigDict(frozen=True)

    lateral: Literal["keep", "left", "right"] = "keep"
    longitudinal: Literal["normal", "brake"] = "normal"

    @property
    def lat_index(self) -> int:
        return LATERAL.index(self.lateral)

    @property
    def lon_index(self) -> int:
        return LONGITUDINAL.index(self.longitudinal)

    @property
    def index(self) -> int:
        """Position in the joint maneuver set, k = lat * 2 + lon."""
        return self.lat_index * len(LONGITUDINAL) + self.lon_index

    @classmethod
    def from_index(cls, k: int) -> "ManeuverLabel":
        if not 0 <= k < len(LATERAL) * len(LONGITUDINAL):
            raise ValueError(f"maneuver index out of range: {k}")
        return cls(lateral=LATERAL[k // len(LONGITUDINAL)], longitudinal=LONGITUDINAL[k % len(LONGITUDINAL)])

    @classmethod
    def all(cls) -> List["ManeuverLabel"]:
        return [cls.from_index(k) for k in range(len(LATERAL) * len(LONGITUDINAL))]

    def __str__(self) -> str:
        return f"{self.lateral}/{self.longitudinal}"


class Trajectory(ArrayModel):
    points: Points
    rate: int = Field(5, gt=0, description="Sampling rate (Hz)")
    t0: int = 0

    @field_validator("points")
    @classmethod
    def _non_empty(cls, v: np.ndarray) -> np.ndarray:
        if len(v) == 0:
            raise ValueError("a trajectory needs at least one point")
        return v

    def __len__(self) -> int:
        return len(self.points)


class EgoPlan(ArrayModel):
    """Ego future positions relative to the ego at the prediction instant."""

    points: Points
    rate: Literal[1, 5] = 5

    @field_validator("points")
    @classmethod
    def _min_length(cls, v: np.ndarray) -> np.ndarray:
        if len(v) < 2:
            raise ValueError("an ego plan needs at least 2 points")
        return v

    def __len__(self) -> int:
        return len(self.points)


# --- Tracks and instances ---

class AgentTrack(ArrayModel):
    agent_id: int
    frames: IntArray
    positions: Points
    lane_ids: IntArray
    source_rate: int = Field(5, gt=0)

    @model_validator(mode="after")
    def _check_lengths(self) -> "AgentTrack":
        if not (len(self.frames) == len(self.positions) == len(self.lane_ids)):
            raise ValueError(f"agent {self.agent_id}: frames/positions/lane_ids lengths differ")
        if len(self.frames) > 1 and np.any(np.diff(self.frames) <= 0):
            raise ValueError(f"agent {self.agent_id}: frames must be strictly increasing")
        return self

    def __len__(self) -> int:
        return len(self.frames)


class NeighborSample(ArrayModel):
    agent_id: int
    history: Points
    position: Point  # at time t, ego frame


class TargetSample(ArrayModel):
    agent_id: int
    history: Points  # T_obs points, ego frame; last point is the position at t
    future: Points  # T_pred points, ego frame
    maneuver: ManeuverLabel
    neighbors: List[NeighborSample] = Field(default_factory=list)

    @property
    def position(self) -> np.ndarray:
        return self.history[-1]


class Instance(ArrayModel):
    """One ego-centric sample; all coordinates in the ego frame at time t."""

    instance_id: str
    ego_id: int
    t: int
    direction: Literal[-1, 1] = 1
    ego_history: Points
    ego_plan: EgoPlan
    targets: List[TargetSample] = Field(default_factory=list)

    def with_plan(self, plan: EgoPlan) -> "Instance":
        return self.model_copy(update={"ego_plan": plan})


class SplitSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    train_frac: float = 0.7
    val_frac: float = 0.1
    test_frac: float = 0.2
    seed: int = 0

    @model_validator(mode="after")
    def _sum_to_one(self) -> "SplitSpec":
        if min(self.train_frac, self.val_frac, self.test_frac) < 0:
            raise ValueError("split fractions must be non-negative")
        if abs(self.train_frac + self.val_frac + self.test_frac - 1.0) > 1e-9:
            raise ValueError("split fractions must sum to 1")
        return self


SCENARIOS = ("cruise", "lane-change", "brake", "car-following-reactive")


class SyntheticConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    lanes: int = 3
    agents: int = 4
    scenes: int = 16
    frames: int = 60
    scenario_mix: Dict[str, float] = Field(default_factory=lambda: {s: 0.25 for s in SCENARIOS})
    lane_width_m: float = 3.66
    speed_min: float = 20.0
    speed_max: float = 30.0
    brake_decel: float = 4.0
    lane_change_s: float = 4.0
    reaction_lag_s: float = 0.6
    reactive_brake_prob: float = 0.5
    follow_gap_m: float = 20.0

    @field_validator("scenario_mix")
    @classmethod
    def _known_scenarios(cls, v: Dict[str, float]) -> Dict[str, float]:
        unknown = set(v) - set(SCENARIOS)
        if unknown:
            raise ValueError(f"unknown scenarios: {sorted(unknown)}")
        if not v or sum(v.values()) <= 0 or min(v.values()) < 0:
            raise ValueError("scenario_mix needs non-negative weights with a positive sum")
        return v


# --- Output records ---

class FrameRecord(BaseModel):
    t: int
    mu: List[float]
    sigma: List[float]
    rho: float


class PredictionRecord(BaseModel):
    """One target under one maneuver; a line of the prediction JSON-lines file."""

    instance_id: str
    target_id: int
    maneuver: str
    p_lat: List[float]
    p_lon: List[float]
    p_joint: float
    beta: Optional[List[float]] = None
    frames: List[FrameRecord]


class CandidatePlans(BaseModel):
    """Candidate ego plans for a what-if query, in the ego frame at time t."""

    rate: Literal[1, 5] = 5
    plans: List[List[List[float]]]

    @field_validator("plans")
    @classmethod
    def _at_least_one(cls, v: List[List[List[float]]]) -> List[List[List[float]]]:
        if not v:
            raise ValueError("at least one candidate plan is required")
        return v

    def to_ego_plans(self) -> List[EgoPlan]:
        return [EgoPlan(points=p, rate=self.rate) for p in self.plans]


class HorizonReport(BaseModel):
    rmse: List[float]
    rmse_avg: float
    nll: List[float]
    nll_avg: float
    horizons_s: List[float]
    instance_count: int
    target_count: int
    conventions: Dict[str, Any] = Field(default_factory=dict)


class AblationRow(BaseModel):
    method: str
    info_c: bool
    info_f: bool
    icd: str
    iie: bool
    fusion: bool
    report: HorizonReport


class PlanRateComparison(BaseModel):
    """The same checkpoint evaluated with full-rate and 1 Hz ego plans."""

    full_rate: HorizonReport
    coarse: HorizonReport
    rmse_diff: List[float]
    nll_diff: List[float]
