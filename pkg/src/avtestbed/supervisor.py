"""Deterministic 2D simulation kernel and the TCP supervisor serving it.

The kernel advances vehicle states with a kinematic bicycle model at a fixed
step, walks pedestrians along their waypoint lists, samples the configured
data log rows, emits heartbeats, and detects contacts between entity
footprints.  Runs are pure functions of (environment, config, seed): repeated
runs produce bit-identical trajectories.
"""

from __future__ import annotations

import csv
import io
import math
import socket
import threading
import time
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from . import controllers, geometry, wire
from .controllers import ControllerConfigError, VehicleController, saturate
from .scenario import (
    Fog,
    GenericObject,
    ItemType,
    KNOWN_VEHICLE_MODELS,
    LogItemDescription,
    Road,
    RoadDisturbance,
    RunMode,
    SimEnvironment,
    SimulationConfig,
    StateId,
    SyncType,
    Trajectory,
    column_names,
    parse_column_name,
    validate_config,
    validate_environment,
)

VEHICLE_LENGTH_M = 4.8
VEHICLE_WIDTH_M = 1.8
PEDESTRIAN_RADIUS_M = 0.25


class ContactKind(Enum):
    VEHICLE_VEHICLE = "VEHICLE_VEHICLE"
    VEHICLE_PEDESTRIAN = "VEHICLE_PEDESTRIAN"


@dataclass
class Contact:
    kind: ContactKind
    ids: tuple[int, int]
    time_ms: int
    penetration: float


@dataclass
class VehicleState:
    id: int
    x: float
    y: float
    heading: float
    speed: float
    controller: VehicleController
    memory: dict = field(default_factory=dict)

    def footprint(self) -> tuple[float, float, float, float, float]:
        return (self.x, self.y, self.heading, VEHICLE_LENGTH_M, VEHICLE_WIDTH_M)


@dataclass
class PedestrianState:
    id: int
    x: float
    y: float
    target_speed: float
    waypoints: list[tuple[float, float]]
    waypoint_index: int = 0
    walking: bool = False

    def heading(self) -> float:
        if self.walking and self.waypoint_index < len(self.waypoints):
            wx, wy = self.waypoints[self.waypoint_index]
            if (wx, wy) != (self.x, self.y):
                return math.atan2(wy - self.y, wx - self.x)
        return 0.0

    def speed(self) -> float:
        if self.walking and self.waypoint_index < len(self.waypoints):
            return self.target_speed
        return 0.0

    def velocity(self) -> tuple[float, float]:
        v, h = self.speed(), self.heading()
        return (v * math.cos(h), v * math.sin(h))


@dataclass
class WorldState:
    sim_time_ms: int = 0
    vehicles: list[VehicleState] = field(default_factory=list)
    pedestrians: list[PedestrianState] = field(default_factory=list)
    roads: list[Road] = field(default_factory=list)
    disturbances: list[RoadDisturbance] = field(default_factory=list)
    generic_objects: list[GenericObject] = field(default_factory=list)
    # oriented rectangles (cx, cy, heading, length, width) declared by generic
    # objects via a "collision_box" parameter; inert to the built-in dynamics
    static_obstacles: list[tuple[float, float, float, float, float]] = field(
        default_factory=list
    )
    fog: Optional[Fog] = None
    fog_limits_radar: bool = False
    rng_seed: int = 0
    contacts: list[Contact] = field(default_factory=list)
    min_vehicle_gap: float = math.inf

    @property
    def fog_visibility_range(self) -> Optional[float]:
        return None if self.fog is None else self.fog.visibility_range

    def vehicle_by_id(self, vhc_id: int) -> Optional[VehicleState]:
        for vhc in self.vehicles:
            if vhc.id == vhc_id:
                return vhc
        return None


class SetupError(RuntimeError):
    """World construction failed; surfaced to clients as protocol error 100."""


class SyncTimeoutError(RuntimeError):
    """No continue message arrived in time; protocol error 101."""


def _wrap_angle(a: float) -> float:
    a = math.fmod(a + math.pi, 2.0 * math.pi)
    if a <= 0.0:
        a += 2.0 * math.pi
    return a - math.pi


# --------------------------------------------------------------------------
# World construction


def _collision_boxes(objects) -> list[tuple[float, float, float, float, float]]:
    """Oriented rectangles from "collision_box" parameters.

    The value is "cx cy heading length width" in planar coordinates.  Generic
    object parameters carry no validity guarantees, so anything that does not
    parse is treated as absent and the object stays inert.
    """
    boxes = []
    for obj in objects:
        for name, value in obj.object_parameters:
            if name != "collision_box":
                continue
            parts = value.split()
            if len(parts) != 5:
                continue
            try:
                boxes.append(tuple(float(p) for p in parts))
            except ValueError:
                continue
    return boxes


def build_world(
    env: SimEnvironment,
    config: SimulationConfig,
    seed: int = 0,
    fog_limits_radar: bool = False,
) -> WorldState:
    """Instantiate world state and controllers from a validated environment."""
    violations = validate_environment(env) + validate_config(config)
    if violations:
        listing = "; ".join(str(v) for v in violations[:5])
        raise SetupError(f"invalid scenario: {listing}")

    world = WorldState(
        roads=list(env.roads),
        disturbances=list(env.road_disturbances),
        generic_objects=list(env.generic_objects),
        static_obstacles=_collision_boxes(env.generic_objects),
        fog=env.fog,
        fog_limits_radar=fog_limits_radar,
        rng_seed=seed,
    )

    for vhc in env.all_vehicles():
        if vhc.vehicle_model not in KNOWN_VEHICLE_MODELS:
            warnings.warn(
                f"unknown vehicle model {vhc.vehicle_model!r}; using the default dynamics profile",
                stacklevel=2,
            )
        path: list[tuple[float, float]] = []
        extra_params: dict[str, list[list[float]]] = {}
        for par in env.controller_params:
            if par.vehicle_id is not None and par.vehicle_id != vhc.vhc_id:
                continue
            if par.parameter_name == "target_position" and len(par.parameter_data) >= 2:
                path.append((par.parameter_data[0], par.parameter_data[1]))
            else:
                extra_params.setdefault(par.parameter_name, []).append(list(par.parameter_data))
        try:
            controller = controllers.make_vehicle_controller(
                vhc.controller, list(vhc.controller_arguments), path
            )
        except ControllerConfigError as exc:
            raise SetupError(str(exc)) from None
        state = VehicleState(
            id=vhc.vhc_id,
            x=vhc.current_position[0],
            y=vhc.current_position[2],
            heading=vhc.current_orientation,
            speed=0.0,
            controller=controller,
        )
        if extra_params:
            state.memory["params"] = extra_params
        world.vehicles.append(state)

    for ped in env.pedestrians:
        waypoints = [
            (ped.trajectory[i], ped.trajectory[i + 1]) for i in range(0, len(ped.trajectory), 2)
        ]
        world.pedestrians.append(
            PedestrianState(
                id=ped.ped_id,
                x=ped.current_position[0],
                y=ped.current_position[2],
                target_speed=ped.target_speed,
                waypoints=waypoints,
                walking=(ped.controller == "pedestrian_control"),
            )
        )
    return world


def apply_initial_states(world: WorldState, configs) -> WorldState:
    """Overwrite the named entity states; VELOCITY_* set speed to |value|."""
    for isc in configs:
        item, value = isc.item, isc.value
        if item.item_type is ItemType.VEHICLE:
            vhc = world.vehicles[item.item_index]
            if item.item_state_index is StateId.POSITION_X:
                vhc.x = value
            elif item.item_state_index is StateId.POSITION_Y:
                vhc.y = value
            elif item.item_state_index is StateId.ORIENTATION:
                vhc.heading = value
            elif item.item_state_index in (StateId.SPEED, StateId.VELOCITY_X, StateId.VELOCITY_Y):
                vhc.speed = abs(value)
        elif item.item_type is ItemType.PEDESTRIAN:
            ped = world.pedestrians[item.item_index]
            if item.item_state_index is StateId.POSITION_X:
                ped.x = value
            elif item.item_state_index is StateId.POSITION_Y:
                ped.y = value
            elif item.item_state_index in (StateId.SPEED, StateId.VELOCITY_X, StateId.VELOCITY_Y):
                ped.target_speed = abs(value)
    return world


# --------------------------------------------------------------------------
# Stepping


def step(world: WorldState, dt_ms: int) -> WorldState:
    """Advance every entity by one fixed step.

    Control commands are computed from the pre-step snapshot for all vehicles
    before any state is integrated, so in-step ordering cannot leak.
    """
    dt = dt_ms / 1000.0

    commands = []
    for vhc in world.vehicles:
        radar = (
            controllers.radar_sense(world, vhc.id) if vhc.controller.uses_radar else []
        )
        commands.append(saturate(vhc.controller.control(vhc, radar, dt)))

    for vhc, cmd in zip(world.vehicles, commands):
        vhc.x += vhc.speed * math.cos(vhc.heading) * dt
        vhc.y += vhc.speed * math.sin(vhc.heading) * dt
        vhc.heading += (vhc.speed / controllers.WHEELBASE_M) * math.tan(cmd.steering) * dt
        vhc.speed += cmd.acceleration * dt
        if vhc.speed < 0.0:
            vhc.speed = 0.0

    for ped in world.pedestrians:
        if ped.walking:
            ped.x, ped.y, ped.waypoint_index = controllers.pedestrian_step(
                ped.x, ped.y, ped.waypoint_index, ped.target_speed, ped.waypoints, dt
            )

    world.sim_time_ms += dt_ms
    return world


def detect_collisions(world: WorldState) -> list[Contact]:
    """Footprint overlaps among vehicle pairs and vehicle-pedestrian pairs."""
    contacts: list[Contact] = []
    vehicles = world.vehicles
    for i in range(len(vehicles)):
        for j in range(i + 1, len(vehicles)):
            pen = geometry.rect_rect_penetration(vehicles[i].footprint(), vehicles[j].footprint())
            if pen is not None and pen > 0.0:
                contacts.append(
                    Contact(
                        ContactKind.VEHICLE_VEHICLE,
                        (vehicles[i].id, vehicles[j].id),
                        world.sim_time_ms,
                        pen,
                    )
                )
    for vhc in vehicles:
        for ped in world.pedestrians:
            pen = geometry.rect_disc_penetration(
                vhc.footprint(), ped.x, ped.y, PEDESTRIAN_RADIUS_M
            )
            if pen is not None and pen > 0.0:
                contacts.append(
                    Contact(
                        ContactKind.VEHICLE_PEDESTRIAN,
                        (vhc.id, ped.id),
                        world.sim_time_ms,
                        pen,
                    )
                )
    return contacts


# --------------------------------------------------------------------------
# Sampling


def _disturbance_lateral_offset(world: WorldState, x: float, y: float) -> float:
    """Logged bump offset while inside a disturbance region; dynamics untouched."""
    offset = 0.0
    for dist in world.disturbances:
        x0, y0 = dist.position[0], dist.position[2]
        if x0 <= x <= x0 + dist.length and abs(y - y0) <= dist.width / 2.0:
            offset += dist.height * math.sin(2.0 * math.pi * x / dist.inter_object_spacing)
    return offset


def sample_log_row(world: WorldState, descriptions: list[LogItemDescription]) -> list[float]:
    row: list[float] = []
    for desc in descriptions:
        if desc.item_type is ItemType.TIME:
            row.append(float(world.sim_time_ms))
            continue
        if desc.item_type is ItemType.VEHICLE:
            vhc = world.vehicles[desc.item_index]
            x, y, heading, speed = vhc.x, vhc.y, vhc.heading, vhc.speed
            bump = _disturbance_lateral_offset(world, x, y)
        else:
            ped = world.pedestrians[desc.item_index]
            x, y, heading, speed = ped.x, ped.y, ped.heading(), ped.speed()
            bump = 0.0
        state = desc.item_state_index
        if state is StateId.POSITION_X:
            row.append(x)
        elif state is StateId.POSITION_Y:
            row.append(y + bump)
        elif state is StateId.ORIENTATION:
            row.append(_wrap_angle(heading))
        elif state is StateId.SPEED:
            row.append(speed)
        elif state is StateId.VELOCITY_X:
            row.append(speed * math.cos(heading))
        else:
            row.append(speed * math.sin(heading))
    return row


# --------------------------------------------------------------------------
# Run loop


class HeartbeatChannel:
    """Receives heartbeat emissions; the embedded default ignores them."""

    def beat(self, sim_time_ms: int, finished: bool) -> None:
        pass


def _track_contacts(world: WorldState, seen_pairs: set) -> None:
    for contact in detect_collisions(world):
        key = (contact.kind, contact.ids)
        if key not in seen_pairs:
            seen_pairs.add(key)
            world.contacts.append(contact)
    for i in range(len(world.vehicles)):
        for j in range(i + 1, len(world.vehicles)):
            a, b = world.vehicles[i], world.vehicles[j]
            gap = math.hypot(a.x - b.x, a.y - b.y)
            if gap < world.min_vehicle_gap:
                world.min_vehicle_gap = gap


def run(
    world: WorldState,
    env: SimEnvironment,
    config: SimulationConfig,
    channel: Optional[HeartbeatChannel] = None,
    run_index: int = 0,
) -> Trajectory:
    """Execute the simulation and return the sampled trajectory.

    A log row is taken at t=0 and every data_log_period_ms through the end of
    the run.  Heartbeats fire at every multiple of the heartbeat period after
    t=0 when heartbeats are enabled; the channel is responsible for any
    synchronization semantics.
    """
    problems = validate_config(config)
    if problems:
        raise SetupError(f"invalid config: {problems[0]}")
    if not config.run_configs:
        raise SetupError("config.run_config_arr must contain at least one entry")
    if not 0 <= run_index < len(config.run_configs):
        raise SetupError(f"run index {run_index} out of range")
    mode = config.run_configs[run_index].run_mode

    descriptions = list(env.data_log_descriptions)
    period_ms = env.data_log_period_ms
    if descriptions:
        if period_ms is None:
            raise SetupError("data_log_period_ms must be set when log items are declared")
        if period_ms % config.sim_step_size_ms != 0:
            raise SetupError(
                f"data_log_period_ms {period_ms} is not a multiple of the "
                f"step size {config.sim_step_size_ms}"
            )

    heartbeat = env.heartbeat_config
    beat_enabled = heartbeat is not None and heartbeat.sync_type is not SyncType.NO_HEART_BEAT
    if channel is None:
        channel = HeartbeatChannel()

    duration_ms = config.sim_duration_ms
    step_ms = config.sim_step_size_ms
    rows: list[list[float]] = []
    seen_pairs: set = set()

    _track_contacts(world, seen_pairs)
    if descriptions:
        rows.append(sample_log_row(world, descriptions))

    while world.sim_time_ms < duration_ms:
        if mode is RunMode.REAL_TIME:
            time.sleep(step_ms / 1000.0)
        step(world, step_ms)
        _track_contacts(world, seen_pairs)
        if descriptions and world.sim_time_ms % period_ms == 0:
            rows.append(sample_log_row(world, descriptions))
        if beat_enabled and world.sim_time_ms % heartbeat.period_ms == 0:
            channel.beat(world.sim_time_ms, finished=world.sim_time_ms >= duration_ms)

    matrix = np.array(rows, dtype=np.float64).reshape(len(rows), len(descriptions))
    return Trajectory(column_labels=descriptions, rows=matrix)


@dataclass
class SimulationResult:
    trajectory: Trajectory
    contacts: list[Contact]
    min_vehicle_gap: float


def run_embedded(
    env: SimEnvironment,
    config: SimulationConfig,
    run_index: int = 0,
    seed: int = 0,
) -> SimulationResult:
    """Build, initialize, and run a scenario in-process (no sockets)."""
    world = build_world(env, config, seed=seed)
    apply_initial_states(world, env.initial_state_configs)
    trajectory = run(world, env, config, run_index=run_index)
    return SimulationResult(
        trajectory=trajectory,
        contacts=list(world.contacts),
        min_vehicle_gap=world.min_vehicle_gap,
    )


# --------------------------------------------------------------------------
# Trace CSV


def trajectory_to_csv(traj: Trajectory) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(column_names(traj.column_labels))
    for row in traj.rows:
        writer.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def trajectory_from_csv(text: str) -> Trajectory:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ValueError("empty trace CSV") from None
    labels = [parse_column_name(name) for name in header]
    rows = []
    for line_no, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(labels):
            raise ValueError(f"line {line_no}: expected {len(labels)} cells, got {len(row)}")
        rows.append([float(cell) for cell in row])
    matrix = np.array(rows, dtype=np.float64).reshape(len(rows), len(labels))
    return Trajectory(column_labels=labels, rows=matrix)


# --------------------------------------------------------------------------
# TCP server


class _SocketChannel(HeartbeatChannel):
    """Sends heartbeats over the session socket, blocking for continues in
    WITH_SYNC mode."""

    def __init__(self, sock: socket.socket, sync: SyncType, timeout_s: float):
        self.sock = sock
        self.sync = sync
        self.timeout_s = timeout_s

    def beat(self, sim_time_ms: int, finished: bool) -> None:
        status = wire.HeartbeatStatus.FINISHED if finished else wire.HeartbeatStatus.RUNNING
        wire.send_message(self.sock, wire.Heartbeat(sim_time_ms, status))
        if self.sync is SyncType.WITH_SYNC:
            self.sock.settimeout(self.timeout_s)
            try:
                msg = wire.recv_message(self.sock)
            except socket.timeout:
                raise SyncTimeoutError(
                    f"no continue received within {self.timeout_s} s"
                ) from None
            if not isinstance(msg, wire.Continue):
                raise SyncTimeoutError(f"expected continue, got {type(msg).__name__}")


class SupervisorServer:
    """Accepts configurator connections; one independent simulation each."""

    def __init__(
        self,
        host: str = "127.0.0.1",
        port: int = 10021,
        seed: int = 0,
        sync_timeout_s: float = 120.0,
    ):
        self.host = host
        self.seed = seed
        self.sync_timeout_s = sync_timeout_s
        self._listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._listener.bind((host, port))
        self.port = self._listener.getsockname()[1]
        self._stopping = threading.Event()
        self._accept_thread: Optional[threading.Thread] = None

    def start(self) -> None:
        self._listener.listen()
        # poll so stop() can interrupt a blocked accept()
        self._listener.settimeout(0.2)
        self._accept_thread = threading.Thread(target=self._accept_loop, daemon=True)
        self._accept_thread.start()

    def stop(self) -> None:
        self._stopping.set()
        try:
            self._listener.close()
        except OSError:
            pass
        if self._accept_thread is not None:
            self._accept_thread.join(timeout=5.0)

    def serve_forever(self) -> None:
        self.start()
        try:
            while not self._stopping.is_set():
                time.sleep(0.2)
        except KeyboardInterrupt:
            pass
        finally:
            self.stop()

    def _accept_loop(self) -> None:
        while not self._stopping.is_set():
            try:
                conn, _ = self._listener.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            conn.settimeout(None)
            thread = threading.Thread(target=self._handle, args=(conn,), daemon=True)
            thread.start()

    def _handle(self, conn: socket.socket) -> None:
        try:
            with conn:
                self._session(conn)
        except Exception:
            pass  # a broken session must not take the server down

    def _session(self, conn: socket.socket) -> None:
        conn.settimeout(self.sync_timeout_s)

        def fail(code: int, message: str) -> None:
            try:
                wire.send_message(conn, wire.ProtocolErrorMsg(code, message))
            except OSError:
                pass

        try:
            msg = wire.recv_message(conn)
        except wire.WireFormatError as exc:
            fail(wire.ERR_MALFORMED, str(exc))
            return
        if not isinstance(msg, wire.Hello):
            fail(wire.ERR_UNEXPECTED_MESSAGE, f"expected hello, got {type(msg).__name__}")
            return
        wire.send_message(conn, wire.Ack())

        try:
            msg = wire.recv_message(conn)
        except wire.WireFormatError as exc:
            fail(wire.ERR_MALFORMED, str(exc))
            return
        if not isinstance(msg, wire.SetupEnvironment):
            fail(wire.ERR_UNEXPECTED_MESSAGE, f"expected setup, got {type(msg).__name__}")
            return
        env = msg.env
        violations = validate_environment(env)
        if violations:
            fail(wire.ERR_SETUP, f"invalid environment: {violations[0]}")
            return
        wire.send_message(conn, wire.Ack())

        try:
            msg = wire.recv_message(conn)
        except wire.WireFormatError as exc:
            fail(wire.ERR_MALFORMED, str(exc))
            return
        if not isinstance(msg, wire.StartSim):
            fail(wire.ERR_UNEXPECTED_MESSAGE, f"expected start, got {type(msg).__name__}")
            return

        sync = (
            env.heartbeat_config.sync_type
            if env.heartbeat_config is not None
            else SyncType.NO_HEART_BEAT
        )
        channel = _SocketChannel(conn, sync, self.sync_timeout_s)
        try:
            world = build_world(env, msg.config, seed=self.seed)
            apply_initial_states(world, env.initial_state_configs)
            trajectory = run(world, env, msg.config, channel=channel, run_index=msg.run_index)
        except SetupError as exc:
            fail(wire.ERR_SETUP, str(exc))
            return
        except SyncTimeoutError as exc:
            fail(wire.ERR_SYNC_TIMEOUT, str(exc))
            return
        except wire.WireFormatError as exc:
            fail(wire.ERR_MALFORMED, str(exc))
            return
        wire.send_message(conn, wire.TraceData(trajectory))
