"""Scenario data model: entity types, validation, log-column mapping, JSON documents.

A scenario document is UTF-8 JSON with top-level keys ``"environment"`` and
``"config"``.  All positions are 3-vectors ``[x, height, lateral]``; the
simulation kernel works in the ground plane, so component 0 is planar x and
component 2 is planar y (component 1 is stored but inert).  Orientations used
by the kernel (``current_orientation``) are planar headings in radians,
measured counterclockwise from the +x axis.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Any, Optional

import numpy as np

VEHICLE_CONTROLLER_NAMES = frozenset(
    {"void", "path_and_speed_follower", "automated_driving_with_fusion2"}
)
PEDESTRIAN_CONTROLLER_NAMES = frozenset({"void", "pedestrian_control"})

KNOWN_VEHICLE_MODELS = frozenset(
    {
        "AckermannVehicle",
        "ToyotaPrius",
        "CitroenCZero",
        "BmwX5",
        "RangeRoverSportSVR",
        "LincolnMKZ",
        "TeslaModel3",
    }
)


class RoadType(Enum):
    STRAIGHT_ROAD_SEGMENT = "StraightRoadSegment"


class FogType(Enum):
    LINEAR = "LINEAR"


class DisturbanceType(Enum):
    INTERLEAVED = "INTERLEAVED"
    FULL_LANE_LENGTH = "FULL_LANE_LENGTH"
    ONLY_LEFT = "ONLY_LEFT"
    ONLY_RIGHT = "ONLY_RIGHT"


class SensorLocation(Enum):
    FRONT = "FRONT"
    CENTER = "CENTER"
    LEFT = "LEFT"
    RIGHT = "RIGHT"
    TOP = "TOP"


class SyncType(Enum):
    NO_HEART_BEAT = "NO_HEART_BEAT"
    WITHOUT_SYNC = "WITHOUT_SYNC"
    WITH_SYNC = "WITH_SYNC"


class RunMode(Enum):
    REAL_TIME = "REAL_TIME"
    FAST_RUN = "FAST_RUN"
    FAST_NO_GRAPHICS = "FAST_NO_GRAPHICS"


class ItemType(Enum):
    TIME = "TIME"
    VEHICLE = "VEHICLE"
    PEDESTRIAN = "PEDESTRIAN"


class StateId(IntEnum):
    """Loggable per-entity states, in their stable serialization order."""

    POSITION_X = 0
    POSITION_Y = 1
    ORIENTATION = 2
    SPEED = 3
    VELOCITY_X = 4
    VELOCITY_Y = 5


@dataclass
class SensorField:
    field_name: str = ""
    field_val: str = ""


@dataclass
class SensorSpec:
    sensor_type: str = ""
    sensor_location: SensorLocation = SensorLocation.FRONT
    fields: list[SensorField] = field(default_factory=list)


@dataclass
class Road:
    def_name: str = "STRROAD"
    road_type: RoadType = RoadType.STRAIGHT_ROAD_SEGMENT
    rotation: list[float] = field(default_factory=lambda: [0.0, 1.0, 0.0, math.pi / 2])
    position: list[float] = field(default_factory=lambda: [0.0, 0.02, 0.0])
    number_of_lanes: int = 2
    width: Optional[float] = None
    length: float = 1000.0

    def __post_init__(self) -> None:
        if self.width is None:
            self.width = self.number_of_lanes * 3.5


@dataclass
class Vehicle:
    def_name: str = ""
    vhc_id: int = 0
    vehicle_model: str = "AckermannVehicle"
    rotation: list[float] = field(default_factory=lambda: [0.0, 1.0, 0.0, 0.0])
    current_position: list[float] = field(default_factory=lambda: [0.0, 0.3, 0.0])
    current_orientation: float = 0.0
    color: list[float] = field(default_factory=lambda: [1.0, 1.0, 1.0])
    controller: str = "void"
    is_controller_name_absolute: bool = False
    vehicle_parameters: list[str] = field(default_factory=list)
    controller_parameters: list[str] = field(default_factory=list)
    controller_arguments: list[str] = field(default_factory=list)
    sensors: list[SensorSpec] = field(default_factory=list)


@dataclass
class Pedestrian:
    def_name: str = "PEDESTRIAN"
    ped_id: int = 0
    rotation: list[float] = field(default_factory=lambda: [0.0, 1.0, 0.0, math.pi / 2])
    current_position: list[float] = field(default_factory=lambda: [0.0, 0.0, 0.0])
    shirt_color: list[float] = field(default_factory=lambda: [0.25, 0.55, 0.2])
    pants_color: list[float] = field(default_factory=lambda: [0.24, 0.25, 0.5])
    shoes_color: list[float] = field(default_factory=lambda: [0.28, 0.15, 0.06])
    controller: str = "void"
    target_speed: float = 0.0
    trajectory: list[float] = field(default_factory=list)


@dataclass
class Fog:
    def_name: str = "FOG"
    fog_type: FogType = FogType.LINEAR
    color: list[float] = field(default_factory=lambda: [0.93, 0.96, 1.0])
    visibility_range: float = 1000.0


@dataclass
class RoadDisturbance:
    """Repeated bumps on a lane stretch; observable as a lateral log offset."""

    disturbance_id: int = 1
    disturbance_type: DisturbanceType = DisturbanceType.INTERLEAVED
    rotation: list[float] = field(default_factory=lambda: [0.0, 1.0, 0.0, 0.0])
    position: list[float] = field(default_factory=lambda: [0.0, 0.0, 0.0])
    length: float = 100.0
    width: float = 3.5
    height: float = 0.06
    surface_height: float = 0.02  # stored, no observable effect in the 2D kernel
    inter_object_spacing: float = 1.0


@dataclass
class GenericObject:
    def_name: str = ""
    object_name: str = "Tree"
    object_parameters: list[tuple[str, str]] = field(default_factory=list)


@dataclass
class ControllerParameter:
    vehicle_id: Optional[int] = None
    parameter_name: str = ""
    parameter_data: list[float] = field(default_factory=list)


@dataclass
class HeartbeatConfig:
    sync_type: SyncType = SyncType.NO_HEART_BEAT
    period_ms: int = 10


@dataclass
class LogItemDescription:
    """One column of the simulation trace.

    TIME entries ignore ``item_index`` and ``item_state_index``.
    """

    item_type: ItemType = ItemType.TIME
    item_index: int = 0
    item_state_index: StateId = StateId.POSITION_X

    def key(self) -> tuple:
        """Canonical identity used for trace-column lookup."""
        if self.item_type is ItemType.TIME:
            return (ItemType.TIME, 0, None)
        return (self.item_type, self.item_index, self.item_state_index)


@dataclass
class InitialStateConfig:
    item: LogItemDescription = field(default_factory=LogItemDescription)
    value: float = 0.0


@dataclass
class ViewFollowConfig:
    item_type: ItemType = ItemType.VEHICLE
    item_index: int = 0
    position: list[float] = field(default_factory=lambda: [0.0, 0.0, 0.0])
    rotation: list[float] = field(default_factory=lambda: [0.0, 1.0, 0.0, 0.0])


@dataclass
class SimEnvironment:
    fog: Optional[Fog] = None
    heartbeat_config: Optional[HeartbeatConfig] = None
    view_follow_config: Optional[ViewFollowConfig] = None
    ego_vehicles: list[Vehicle] = field(default_factory=list)
    agent_vehicles: list[Vehicle] = field(default_factory=list)
    pedestrians: list[Pedestrian] = field(default_factory=list)
    roads: list[Road] = field(default_factory=list)
    road_disturbances: list[RoadDisturbance] = field(default_factory=list)
    generic_objects: list[GenericObject] = field(default_factory=list)
    controller_params: list[ControllerParameter] = field(default_factory=list)
    initial_state_configs: list[InitialStateConfig] = field(default_factory=list)
    data_log_descriptions: list[LogItemDescription] = field(default_factory=list)
    data_log_period_ms: Optional[int] = None

    def all_vehicles(self) -> list[Vehicle]:
        """Ego vehicles first, then agents; list order defines item_index."""
        return list(self.ego_vehicles) + list(self.agent_vehicles)


@dataclass
class RunConfig:
    run_mode: RunMode = RunMode.FAST_NO_GRAPHICS


@dataclass
class SimulationConfig:
    world_file: str = "../Webots_Projects/worlds/test_world_1.wbt"
    server_port: int = 10021
    server_ip: str = "127.0.0.1"
    sim_duration_ms: int = 50000
    sim_step_size_ms: int = 10
    run_configs: list[RunConfig] = field(default_factory=list)


@dataclass
class Trajectory:
    """Time-indexed log of entity states; column 0 is time in milliseconds."""

    column_labels: list[LogItemDescription]
    rows: np.ndarray

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Trajectory):
            return NotImplemented
        return self.column_labels == other.column_labels and np.array_equal(
            self.rows, other.rows
        )

    @property
    def n_rows(self) -> int:
        return int(self.rows.shape[0])


@dataclass
class Violation:
    """A single invariant violation found by validate_environment."""

    path: str
    message: str

    def __str__(self) -> str:
        return f"{self.path}: {self.message}"


class ScenarioFormatError(ValueError):
    """Raised when a scenario document cannot be parsed; carries a field path."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


# --------------------------------------------------------------------------
# Validation


def _check_rgb(report: list[Violation], path: str, rgb: list[float]) -> None:
    if len(rgb) != 3:
        report.append(Violation(path, "color must have 3 components"))
        return
    if not all(0.0 <= c <= 1.0 for c in rgb):
        report.append(Violation(path, f"color components must lie in [0, 1], got {rgb}"))


def _check_vec(report: list[Violation], path: str, vec: list[float], n: int) -> None:
    if len(vec) != n:
        report.append(Violation(path, f"expected {n} components, got {len(vec)}"))


def validate_environment(env: SimEnvironment) -> list[Violation]:
    """Collect every invariant violation in env; an empty list means valid."""
    report: list[Violation] = []
    vehicles = env.all_vehicles()

    seen_vhc: dict[int, str] = {}
    for i, vhc in enumerate(env.ego_vehicles):
        _validate_vehicle(report, f"ego_vehicles[{i}]", vhc, seen_vhc)
    for i, vhc in enumerate(env.agent_vehicles):
        _validate_vehicle(report, f"agent_vehicles[{i}]", vhc, seen_vhc)

    seen_ped: dict[int, str] = {}
    for i, ped in enumerate(env.pedestrians):
        path = f"pedestrians[{i}]"
        if ped.ped_id in seen_ped:
            report.append(
                Violation(path, f"duplicate pedestrian id {ped.ped_id} (also {seen_ped[ped.ped_id]})")
            )
        else:
            seen_ped[ped.ped_id] = path
        if ped.controller not in PEDESTRIAN_CONTROLLER_NAMES:
            report.append(Violation(path, f"unknown pedestrian controller {ped.controller!r}"))
        if len(ped.trajectory) % 2 != 0:
            report.append(Violation(path, "trajectory must list x,y pairs (even length)"))
        if ped.target_speed < 0:
            report.append(Violation(path, "target_speed must be >= 0"))
        _check_rgb(report, path + ".shirt_color", ped.shirt_color)
        _check_rgb(report, path + ".pants_color", ped.pants_color)
        _check_rgb(report, path + ".shoes_color", ped.shoes_color)
        _check_vec(report, path + ".current_position", ped.current_position, 3)
        _check_vec(report, path + ".rotation", ped.rotation, 4)

    for i, road in enumerate(env.roads):
        path = f"roads[{i}]"
        if road.width is None or road.width <= 0:
            report.append(Violation(path, "width must be > 0"))
        if road.length <= 0:
            report.append(Violation(path, "length must be > 0"))
        if road.number_of_lanes < 1:
            report.append(Violation(path, "number_of_lanes must be >= 1"))
        _check_vec(report, path + ".position", road.position, 3)
        _check_vec(report, path + ".rotation", road.rotation, 4)

    for i, dist in enumerate(env.road_disturbances):
        path = f"road_disturbances[{i}]"
        for attr in ("length", "width", "inter_object_spacing", "height"):
            if getattr(dist, attr) <= 0:
                report.append(Violation(path, f"{attr} must be > 0"))
        _check_vec(report, path + ".position", dist.position, 3)

    if env.fog is not None and env.fog.visibility_range <= 0:
        report.append(Violation("fog", "visibility_range must be > 0"))
    if env.fog is not None:
        _check_rgb(report, "fog.color", env.fog.color)

    if env.heartbeat_config is not None and env.heartbeat_config.period_ms < 1:
        report.append(Violation("heartbeat_config", "period_ms must be >= 1"))

    for i, par in enumerate(env.controller_params):
        if not par.parameter_name:
            report.append(Violation(f"controller_params[{i}]", "parameter_name must be non-empty"))

    n_vhc = len(vehicles)
    n_ped = len(env.pedestrians)

    def check_item(path: str, item: LogItemDescription) -> None:
        if item.item_type is ItemType.VEHICLE and not (0 <= item.item_index < n_vhc):
            report.append(
                Violation(path, f"dangling vehicle index {item.item_index} (have {n_vhc})")
            )
        elif item.item_type is ItemType.PEDESTRIAN and not (0 <= item.item_index < n_ped):
            report.append(
                Violation(path, f"dangling pedestrian index {item.item_index} (have {n_ped})")
            )

    for i, isc in enumerate(env.initial_state_configs):
        path = f"initial_state_configs[{i}]"
        if isc.item.item_type is ItemType.TIME:
            report.append(Violation(path, "initial state cannot target TIME"))
        else:
            check_item(path, isc.item)

    for i, desc in enumerate(env.data_log_descriptions):
        if desc.item_type is not ItemType.TIME:
            check_item(f"data_log_descriptions[{i}]", desc)

    if env.view_follow_config is not None:
        vfc = env.view_follow_config
        if vfc.item_type is ItemType.TIME:
            report.append(Violation("view_follow_config", "cannot follow TIME"))
        else:
            check_item("view_follow_config", LogItemDescription(vfc.item_type, vfc.item_index))

    if env.data_log_period_ms is not None and env.data_log_period_ms < 1:
        report.append(Violation("data_log_period_ms", "must be a positive integer"))

    return report


def _validate_vehicle(
    report: list[Violation], path: str, vhc: Vehicle, seen: dict[int, str]
) -> None:
    if vhc.vhc_id in seen:
        report.append(Violation(path, f"duplicate vehicle id {vhc.vhc_id} (also {seen[vhc.vhc_id]})"))
    else:
        seen[vhc.vhc_id] = path
    _check_rgb(report, path + ".color", vhc.color)
    _check_vec(report, path + ".current_position", vhc.current_position, 3)
    _check_vec(report, path + ".rotation", vhc.rotation, 4)
    if vhc.controller not in VEHICLE_CONTROLLER_NAMES:
        report.append(Violation(path, f"unknown vehicle controller {vhc.controller!r}"))
    for j, sensor in enumerate(vhc.sensors):
        if not sensor.sensor_type:
            report.append(Violation(f"{path}.sensors[{j}]", "sensor_type must be non-empty"))


def validate_config(config: SimulationConfig) -> list[Violation]:
    report: list[Violation] = []
    if config.sim_step_size_ms < 1:
        report.append(Violation("config.sim_step_size", "must be a positive integer"))
    if config.sim_duration_ms < 0:
        report.append(Violation("config.sim_duration_ms", "must be >= 0"))
    elif config.sim_step_size_ms >= 1 and config.sim_duration_ms % config.sim_step_size_ms != 0:
        report.append(
            Violation(
                "config.sim_duration_ms",
                f"duration {config.sim_duration_ms} not a multiple of step {config.sim_step_size_ms}",
            )
        )
    return report


# --------------------------------------------------------------------------
# Trace-column mapping

StateIndexMap = dict  # (ItemType, index, StateId | None) -> column index


def populate_trace_dict(env: SimEnvironment) -> StateIndexMap:
    """Map each log description to its trace column, in list order.

    Raises ValueError on an empty description list or a duplicate entry.
    """
    if not env.data_log_descriptions:
        raise ValueError("data_log_descriptions is empty")
    mapping: StateIndexMap = {}
    for col, desc in enumerate(env.data_log_descriptions):
        key = desc.key()
        if key in mapping:
            raise ValueError(f"duplicate data log description {_key_name(key)}")
        mapping[key] = col
    return mapping


def _key_name(key: tuple) -> str:
    item_type, index, state = key
    if item_type is ItemType.TIME:
        return "time_ms"
    return f"{item_type.value.lower()}{index}_{state.name.lower()}"


def column_names(labels: list[LogItemDescription]) -> list[str]:
    """CSV header names: time_ms, then <entity><index>_<state>."""
    return [_key_name(d.key()) for d in labels]


def parse_column_name(name: str) -> LogItemDescription:
    """Inverse of column_names for a single header cell."""
    if name == "time_ms":
        return LogItemDescription(ItemType.TIME, 0, StateId.POSITION_X)
    for prefix, item_type in (("vehicle", ItemType.VEHICLE), ("pedestrian", ItemType.PEDESTRIAN)):
        if name.startswith(prefix):
            rest = name[len(prefix):]
            idx_str, _, state_str = rest.partition("_")
            try:
                return LogItemDescription(item_type, int(idx_str), StateId[state_str.upper()])
            except (ValueError, KeyError):
                break
    raise ValueError(f"unrecognized trace column name {name!r}")


# --------------------------------------------------------------------------
# JSON document serialization
#
# Each _T_SPEC lists (json_key, attr, kind); kind drives conversion and
# unknown-key rejection works off the json_key set.

_ROAD_SPEC = [
    ("def_name", "def_name", str),
    ("road_type", "road_type", RoadType),
    ("rotation", "rotation", "vec4"),
    ("position", "position", "vec3"),
    ("number_of_lanes", "number_of_lanes", int),
    ("width", "width", float),
    ("length", "length", float),
]

_VEHICLE_SPEC = [
    ("def_name", "def_name", str),
    ("vhc_id", "vhc_id", int),
    ("vehicle_model", "vehicle_model", str),
    ("rotation", "rotation", "vec4"),
    ("current_position", "current_position", "vec3"),
    ("current_orientation", "current_orientation", float),
    ("color", "color", "vec3"),
    ("controller", "controller", str),
    ("is_controller_name_absolute", "is_controller_name_absolute", bool),
    ("vehicle_parameters", "vehicle_parameters", "strlist"),
    ("controller_parameters", "controller_parameters", "strlist"),
    ("controller_arguments", "controller_arguments", "strlist"),
    ("sensor_array", "sensors", "sensors"),
]

_PEDESTRIAN_SPEC = [
    ("def_name", "def_name", str),
    ("ped_id", "ped_id", int),
    ("rotation", "rotation", "vec4"),
    ("current_position", "current_position", "vec3"),
    ("shirt_color", "shirt_color", "vec3"),
    ("pants_color", "pants_color", "vec3"),
    ("shoes_color", "shoes_color", "vec3"),
    ("controller", "controller", str),
    ("target_speed", "target_speed", float),
    ("trajectory", "trajectory", "floatlist"),
]

_FOG_SPEC = [
    ("def_name", "def_name", str),
    ("fog_type", "fog_type", FogType),
    ("color", "color", "vec3"),
    ("visibility_range", "visibility_range", float),
]

_DISTURBANCE_SPEC = [
    ("disturbance_id", "disturbance_id", int),
    ("disturbance_type", "disturbance_type", DisturbanceType),
    ("rotation", "rotation", "vec4"),
    ("position", "position", "vec3"),
    ("length", "length", float),
    ("width", "width", float),
    ("height", "height", float),
    ("surface_height", "surface_height", float),
    ("inter_object_spacing", "inter_object_spacing", float),
]

_CTRL_PARAM_SPEC = [
    ("vehicle_id", "vehicle_id", "optint"),
    ("parameter_name", "parameter_name", str),
    ("parameter_data", "parameter_data", "floatlist"),
]

_HEARTBEAT_SPEC = [
    ("sync_type", "sync_type", SyncType),
    ("period_ms", "period_ms", int),
]

_ITEM_SPEC = [
    ("item_type", "item_type", ItemType),
    ("item_index", "item_index", int),
    ("item_state_index", "item_state_index", StateId),
]

_VIEW_SPEC = [
    ("item_type", "item_type", ItemType),
    ("item_index", "item_index", int),
    ("position", "position", "vec3"),
    ("rotation", "rotation", "vec4"),
]

_CONFIG_SPEC = [
    ("world_file", "world_file", str),
    ("server_port", "server_port", int),
    ("server_ip", "server_ip", str),
    ("sim_duration_ms", "sim_duration_ms", int),
    ("sim_step_size", "sim_step_size_ms", int),
    ("run_config_arr", "run_configs", "runconfigs"),
]


def _value_to_json(value: Any, kind: Any) -> Any:
    if kind in (str, int, float, bool, "optint"):
        return value
    if kind in ("vec3", "vec4", "floatlist"):
        return [float(v) for v in value]
    if kind == "strlist":
        return list(value)
    if isinstance(kind, type) and issubclass(kind, (Enum, IntEnum)):
        return value.name
    if kind == "sensors":
        return [_sensor_to_json(s) for s in value]
    if kind == "runconfigs":
        return [{"simulation_run_mode": rc.run_mode.name} for rc in value]
    raise AssertionError(f"unhandled kind {kind!r}")


def _obj_to_json(obj: Any, spec: list) -> dict:
    return {key: _value_to_json(getattr(obj, attr), kind) for key, attr, kind in spec}


def _sensor_to_json(sensor: SensorSpec) -> dict:
    return {
        "sensor_type": sensor.sensor_type,
        "sensor_location": sensor.sensor_location.name,
        "sensor_fields": [
            {"field_name": f.field_name, "field_val": f.field_val} for f in sensor.fields
        ],
    }


def environment_to_json(env: SimEnvironment) -> dict:
    return {
        "fog": None if env.fog is None else _obj_to_json(env.fog, _FOG_SPEC),
        "heart_beat_config": (
            None
            if env.heartbeat_config is None
            else _obj_to_json(env.heartbeat_config, _HEARTBEAT_SPEC)
        ),
        "view_follow_config": (
            None
            if env.view_follow_config is None
            else _obj_to_json(env.view_follow_config, _VIEW_SPEC)
        ),
        "ego_vehicles_list": [_obj_to_json(v, _VEHICLE_SPEC) for v in env.ego_vehicles],
        "agent_vehicles_list": [_obj_to_json(v, _VEHICLE_SPEC) for v in env.agent_vehicles],
        "pedestrians_list": [_obj_to_json(p, _PEDESTRIAN_SPEC) for p in env.pedestrians],
        "road_list": [_obj_to_json(r, _ROAD_SPEC) for r in env.roads],
        "road_disturbances_list": [
            _obj_to_json(d, _DISTURBANCE_SPEC) for d in env.road_disturbances
        ],
        "generic_sim_objects_list": [
            {
                "def_name": g.def_name,
                "object_name": g.object_name,
                "object_parameters": [[n, v] for n, v in g.object_parameters],
            }
            for g in env.generic_objects
        ],
        "control_params_list": [_obj_to_json(c, _CTRL_PARAM_SPEC) for c in env.controller_params],
        "initial_state_config_list": [
            {"item": _obj_to_json(i.item, _ITEM_SPEC), "value": float(i.value)}
            for i in env.initial_state_configs
        ],
        "data_log_description_list": [
            _obj_to_json(d, _ITEM_SPEC) for d in env.data_log_descriptions
        ],
        "data_log_period_ms": env.data_log_period_ms,
    }


def config_to_json(config: SimulationConfig) -> dict:
    return _obj_to_json(config, _CONFIG_SPEC)


def trajectory_to_json(traj: Trajectory) -> dict:
    return {
        "column_labels": [_obj_to_json(d, _ITEM_SPEC) for d in traj.column_labels],
        "rows": [[float(v) for v in row] for row in traj.rows],
    }


def serialize_scenario(env: SimEnvironment, config: SimulationConfig) -> str:
    """Render the scenario document with every default made explicit."""
    doc = {"environment": environment_to_json(env), "config": config_to_json(config)}
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


# ---- parsing -------------------------------------------------------------


def _require_keys(data: dict, spec_keys: set[str], path: str) -> None:
    unknown = [k for k in data if k not in spec_keys]
    if unknown:
        raise ScenarioFormatError(path, f"unknown field {unknown[0]!r}")


def _value_from_json(raw: Any, kind: Any, path: str) -> Any:
    if kind is str:
        if not isinstance(raw, str):
            raise ScenarioFormatError(path, f"expected string, got {type(raw).__name__}")
        return raw
    if kind is bool:
        if not isinstance(raw, bool):
            raise ScenarioFormatError(path, f"expected boolean, got {type(raw).__name__}")
        return raw
    if kind is int:
        if not isinstance(raw, int) or isinstance(raw, bool):
            raise ScenarioFormatError(path, f"expected integer, got {type(raw).__name__}")
        return raw
    if kind == "optint":
        if raw is None:
            return None
        return _value_from_json(raw, int, path)
    if kind is float:
        if isinstance(raw, bool) or not isinstance(raw, (int, float)):
            raise ScenarioFormatError(path, f"expected number, got {type(raw).__name__}")
        return float(raw)
    if kind in ("vec3", "vec4"):
        n = 3 if kind == "vec3" else 4
        if not isinstance(raw, list) or len(raw) != n:
            raise ScenarioFormatError(path, f"expected a {n}-element number array")
        return [_value_from_json(v, float, f"{path}[{i}]") for i, v in enumerate(raw)]
    if kind == "floatlist":
        if not isinstance(raw, list):
            raise ScenarioFormatError(path, "expected a number array")
        return [_value_from_json(v, float, f"{path}[{i}]") for i, v in enumerate(raw)]
    if kind == "strlist":
        if not isinstance(raw, list):
            raise ScenarioFormatError(path, "expected a string array")
        return [_value_from_json(v, str, f"{path}[{i}]") for i, v in enumerate(raw)]
    if isinstance(kind, type) and issubclass(kind, (Enum, IntEnum)):
        if not isinstance(raw, str):
            raise ScenarioFormatError(path, "expected an enum name string")
        try:
            return kind[raw]
        except KeyError:
            valid = ", ".join(m.name for m in kind)
            raise ScenarioFormatError(path, f"unknown value {raw!r} (expected one of {valid})")
    if kind == "sensors":
        if not isinstance(raw, list):
            raise ScenarioFormatError(path, "expected an array of sensors")
        return [_sensor_from_json(s, f"{path}[{i}]") for i, s in enumerate(raw)]
    if kind == "runconfigs":
        if not isinstance(raw, list):
            raise ScenarioFormatError(path, "expected an array of run configs")
        out = []
        for i, rc in enumerate(raw):
            rc_path = f"{path}[{i}]"
            if not isinstance(rc, dict):
                raise ScenarioFormatError(rc_path, "expected an object")
            _require_keys(rc, {"simulation_run_mode"}, rc_path)
            mode = _value_from_json(
                rc.get("simulation_run_mode", RunMode.FAST_NO_GRAPHICS.name),
                RunMode,
                rc_path + ".simulation_run_mode",
            )
            out.append(RunConfig(run_mode=mode))
        return out
    raise AssertionError(f"unhandled kind {kind!r}")


def _obj_from_json(data: Any, spec: list, cls: type, path: str) -> Any:
    if not isinstance(data, dict):
        raise ScenarioFormatError(path, f"expected an object, got {type(data).__name__}")
    _require_keys(data, {key for key, _, _ in spec}, path)
    kwargs = {}
    for key, attr, kind in spec:
        if key in data:
            kwargs[attr] = _value_from_json(data[key], kind, f"{path}.{key}")
    return cls(**kwargs)


def _sensor_from_json(data: Any, path: str) -> SensorSpec:
    if not isinstance(data, dict):
        raise ScenarioFormatError(path, "expected an object")
    _require_keys(data, {"sensor_type", "sensor_location", "sensor_fields"}, path)
    fields = []
    for i, f in enumerate(data.get("sensor_fields", [])):
        f_path = f"{path}.sensor_fields[{i}]"
        if not isinstance(f, dict):
            raise ScenarioFormatError(f_path, "expected an object")
        _require_keys(f, {"field_name", "field_val"}, f_path)
        fields.append(
            SensorField(
                field_name=_value_from_json(f.get("field_name", ""), str, f_path + ".field_name"),
                field_val=_value_from_json(f.get("field_val", ""), str, f_path + ".field_val"),
            )
        )
    return SensorSpec(
        sensor_type=_value_from_json(data.get("sensor_type", ""), str, path + ".sensor_type"),
        sensor_location=_value_from_json(
            data.get("sensor_location", SensorLocation.FRONT.name),
            SensorLocation,
            path + ".sensor_location",
        ),
        fields=fields,
    )


_ENV_KEYS = {
    "fog",
    "heart_beat_config",
    "view_follow_config",
    "ego_vehicles_list",
    "agent_vehicles_list",
    "pedestrians_list",
    "road_list",
    "road_disturbances_list",
    "generic_sim_objects_list",
    "control_params_list",
    "initial_state_config_list",
    "data_log_description_list",
    "data_log_period_ms",
}


def _obj_list(data: dict, key: str, spec: list, cls: type, path: str) -> list:
    raw = data.get(key, [])
    if not isinstance(raw, list):
        raise ScenarioFormatError(f"{path}.{key}", "expected an array")
    return [_obj_from_json(item, spec, cls, f"{path}.{key}[{i}]") for i, item in enumerate(raw)]


def environment_from_json(data: Any, path: str = "environment") -> SimEnvironment:
    if not isinstance(data, dict):
        raise ScenarioFormatError(path, "expected an object")
    _require_keys(data, _ENV_KEYS, path)

    env = SimEnvironment()
    if data.get("fog") is not None:
        env.fog = _obj_from_json(data["fog"], _FOG_SPEC, Fog, f"{path}.fog")
    if data.get("heart_beat_config") is not None:
        env.heartbeat_config = _obj_from_json(
            data["heart_beat_config"], _HEARTBEAT_SPEC, HeartbeatConfig, f"{path}.heart_beat_config"
        )
    if data.get("view_follow_config") is not None:
        env.view_follow_config = _obj_from_json(
            data["view_follow_config"], _VIEW_SPEC, ViewFollowConfig, f"{path}.view_follow_config"
        )
    env.ego_vehicles = _obj_list(data, "ego_vehicles_list", _VEHICLE_SPEC, Vehicle, path)
    env.agent_vehicles = _obj_list(data, "agent_vehicles_list", _VEHICLE_SPEC, Vehicle, path)
    env.pedestrians = _obj_list(data, "pedestrians_list", _PEDESTRIAN_SPEC, Pedestrian, path)
    env.roads = _obj_list(data, "road_list", _ROAD_SPEC, Road, path)
    env.road_disturbances = _obj_list(
        data, "road_disturbances_list", _DISTURBANCE_SPEC, RoadDisturbance, path
    )

    generic = []
    for i, g in enumerate(data.get("generic_sim_objects_list", [])):
        g_path = f"{path}.generic_sim_objects_list[{i}]"
        if not isinstance(g, dict):
            raise ScenarioFormatError(g_path, "expected an object")
        _require_keys(g, {"def_name", "object_name", "object_parameters"}, g_path)
        params = []
        for j, pair in enumerate(g.get("object_parameters", [])):
            if not (isinstance(pair, list) and len(pair) == 2 and all(isinstance(s, str) for s in pair)):
                raise ScenarioFormatError(
                    f"{g_path}.object_parameters[{j}]", "expected a [name, value] string pair"
                )
            params.append((pair[0], pair[1]))
        generic.append(
            GenericObject(
                def_name=_value_from_json(g.get("def_name", ""), str, g_path + ".def_name"),
                object_name=_value_from_json(g.get("object_name", "Tree"), str, g_path + ".object_name"),
                object_parameters=params,
            )
        )
    env.generic_objects = generic

    env.controller_params = _obj_list(
        data, "control_params_list", _CTRL_PARAM_SPEC, ControllerParameter, path
    )

    initial = []
    for i, isc in enumerate(data.get("initial_state_config_list", [])):
        isc_path = f"{path}.initial_state_config_list[{i}]"
        if not isinstance(isc, dict):
            raise ScenarioFormatError(isc_path, "expected an object")
        _require_keys(isc, {"item", "value"}, isc_path)
        if "item" not in isc or "value" not in isc:
            raise ScenarioFormatError(isc_path, "requires 'item' and 'value'")
        initial.append(
            InitialStateConfig(
                item=_obj_from_json(isc["item"], _ITEM_SPEC, LogItemDescription, isc_path + ".item"),
                value=_value_from_json(isc["value"], float, isc_path + ".value"),
            )
        )
    env.initial_state_configs = initial

    env.data_log_descriptions = _obj_list(
        data, "data_log_description_list", _ITEM_SPEC, LogItemDescription, path
    )
    if data.get("data_log_period_ms") is not None:
        env.data_log_period_ms = _value_from_json(
            data["data_log_period_ms"], int, f"{path}.data_log_period_ms"
        )
    return env


def config_from_json(data: Any, path: str = "config") -> SimulationConfig:
    config = _obj_from_json(data, _CONFIG_SPEC, SimulationConfig, path)
    problems = validate_config(config)
    if problems:
        raise ScenarioFormatError(problems[0].path, problems[0].message)
    return config


def trajectory_from_json(data: Any, path: str = "trajectory") -> Trajectory:
    if not isinstance(data, dict):
        raise ScenarioFormatError(path, "expected an object")
    _require_keys(data, {"column_labels", "rows"}, path)
    labels = [
        _obj_from_json(d, _ITEM_SPEC, LogItemDescription, f"{path}.column_labels[{i}]")
        for i, d in enumerate(data.get("column_labels", []))
    ]
    raw_rows = data.get("rows", [])
    if not isinstance(raw_rows, list):
        raise ScenarioFormatError(f"{path}.rows", "expected an array of rows")
    n_cols = len(labels)
    for i, row in enumerate(raw_rows):
        if not isinstance(row, list) or len(row) != n_cols:
            raise ScenarioFormatError(f"{path}.rows[{i}]", f"expected {n_cols} numbers")
    rows = np.array(raw_rows, dtype=np.float64).reshape(len(raw_rows), n_cols)
    return Trajectory(column_labels=labels, rows=rows)


def parse_scenario(text: str) -> tuple[SimEnvironment, SimulationConfig]:
    """Parse a scenario document; inverse of serialize_scenario on valid input."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioFormatError(f"line {exc.lineno}, column {exc.colno}", exc.msg) from None
    if not isinstance(data, dict):
        raise ScenarioFormatError("document", "top level must be an object")
    _require_keys(data, {"environment", "config"}, "document")
    env = environment_from_json(data.get("environment", {}), "environment")
    config = config_from_json(data.get("config", {}), "config")
    return env, config


def load_scenario(path: str) -> tuple[SimEnvironment, SimulationConfig]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_scenario(fh.read())


def save_scenario(env: SimEnvironment, config: SimulationConfig, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_scenario(env, config))
