"""Entity controllers and the ground-truth radar model.

Controllers are constructed once per vehicle from the scenario's controller
name, argument strings, and any runtime parameters delivered before t=0
(waypoints arrive as repeated "target_position" parameters).  A control step
is a pure function of the pre-step vehicle state, the radar detections, and
dt; any controller memory lives in the vehicle state's explicit memory dict.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

# command saturation applied by the kernel (controllers also pre-clamp)
STEERING_LIMIT_RAD = 0.6
ACCEL_MIN = -8.0
ACCEL_MAX = 3.0

WHEELBASE_M = 2.8

RADAR_RANGE_M = 80.0
RADAR_FOV_RAD = math.pi / 4
BRAKE_TTC_S = 2.0
BRAKE_BEARING_RAD = 0.35

LOOKAHEAD_MIN_M = 5.0
LOOKAHEAD_TIME_S = 1.5
SPEED_GAIN = 1.0


@dataclass
class ControlOutput:
    steering: float = 0.0
    acceleration: float = 0.0


@dataclass
class RadarDetection:
    """A target in the sensing vehicle's frame.

    relative_speed is the closing speed (positive while the range shrinks).
    """

    relative_range: float
    relative_bearing: float
    relative_speed: float


class ControllerConfigError(ValueError):
    """Bad controller name or malformed argument, raised at world build time."""


def saturate(out: ControlOutput) -> ControlOutput:
    return ControlOutput(
        steering=max(-STEERING_LIMIT_RAD, min(STEERING_LIMIT_RAD, out.steering)),
        acceleration=max(ACCEL_MIN, min(ACCEL_MAX, out.acceleration)),
    )


def _wrap_angle(a: float) -> float:
    """Normalize to (-pi, pi]."""
    a = math.fmod(a + math.pi, 2.0 * math.pi)
    if a <= 0.0:
        a += 2.0 * math.pi
    return a - math.pi


# --------------------------------------------------------------------------
# Pure pursuit path tracking


def _project_onto_path(path: list[tuple[float, float]], x: float, y: float) -> float:
    """Arc-length position of the closest path point (earliest segment wins ties)."""
    best_dist = math.inf
    best_arc = 0.0
    arc = 0.0
    for i in range(len(path) - 1):
        ax, ay = path[i]
        bx, by = path[i + 1]
        vx, vy = bx - ax, by - ay
        seg_len = math.hypot(vx, vy)
        if seg_len == 0.0:
            continue
        t = ((x - ax) * vx + (y - ay) * vy) / (seg_len * seg_len)
        t = max(0.0, min(1.0, t))
        dist = math.hypot(x - (ax + t * vx), y - (ay + t * vy))
        if dist < best_dist - 1e-12:
            best_dist = dist
            best_arc = arc + t * seg_len
        arc += seg_len
    return best_arc


def _point_at_arc(path: list[tuple[float, float]], s: float) -> tuple[float, float]:
    """Point at arc length s, clamped to the path ends."""
    if s <= 0.0:
        return path[0]
    arc = 0.0
    for i in range(len(path) - 1):
        ax, ay = path[i]
        bx, by = path[i + 1]
        seg_len = math.hypot(bx - ax, by - ay)
        if seg_len > 0.0 and s <= arc + seg_len:
            t = (s - arc) / seg_len
            return (ax + t * (bx - ax), ay + t * (by - ay))
        arc += seg_len
    return path[-1]


def pure_pursuit_steering(
    x: float, y: float, heading: float, speed: float, path: list[tuple[float, float]]
) -> float:
    """Steering angle toward a lookahead point on the path (0 if no path)."""
    if len(path) < 2:
        return 0.0
    lookahead = max(LOOKAHEAD_MIN_M, LOOKAHEAD_TIME_S * speed)
    s = _project_onto_path(path, x, y)
    tx, ty = _point_at_arc(path, s + lookahead)
    dx, dy = tx - x, ty - y
    if dx == 0.0 and dy == 0.0:
        return 0.0
    alpha = _wrap_angle(math.atan2(dy, dx) - heading)
    return math.atan2(2.0 * WHEELBASE_M * math.sin(alpha), lookahead)


# --------------------------------------------------------------------------
# Controller implementations


class VehicleController:
    """Base controller: no actuation."""

    uses_radar = False

    def control(self, state, radar: list[RadarDetection], dt: float) -> ControlOutput:
        return ControlOutput(0.0, 0.0)


class VoidController(VehicleController):
    pass


class PathSpeedFollower(VehicleController):
    """Tracks delivered waypoints with pure pursuit at a fixed target speed (m/s)."""

    def __init__(self, args: list[str], path: list[tuple[float, float]]):
        if not args:
            raise ControllerConfigError("path_and_speed_follower requires a target speed argument")
        try:
            self.target_speed = float(args[0])
        except ValueError:
            raise ControllerConfigError(
                f"path_and_speed_follower target speed {args[0]!r} is not numeric"
            ) from None
        self.path = list(path)

    def control(self, state, radar, dt):
        steering = pure_pursuit_steering(state.x, state.y, state.heading, state.speed, self.path)
        accel = SPEED_GAIN * (self.target_speed - state.speed)
        return saturate(ControlOutput(steering, accel))


class FusionDrivingController(VehicleController):
    """Lane-keeping driver with radar emergency braking.

    Arguments mirror the scripted driver: car model, target speed in km/h,
    target lateral position, own vehicle id, slow-at-intersection flag, gpu
    flag, processor id.  Only the speed, lateral target, and id are used; the
    perception-related arguments are parsed and ignored.
    """

    uses_radar = True

    def __init__(self, args: list[str], path: list[tuple[float, float]]):
        if len(args) < 3:
            raise ControllerConfigError(
                "automated_driving_with_fusion2 requires car_model, target_speed_kmh, target_lat_pos"
            )
        try:
            self.target_speed = float(args[1]) / 3.6
            self.target_lat_pos = float(args[2])
        except ValueError:
            raise ControllerConfigError(
                f"automated_driving_with_fusion2 numeric argument is malformed: {args[1:3]!r}"
            ) from None
        self.self_vhc_id = None
        if len(args) > 3:
            try:
                self.self_vhc_id = int(args[3])
            except ValueError:
                raise ControllerConfigError(
                    f"automated_driving_with_fusion2 vehicle id {args[3]!r} is not an integer"
                ) from None
        # fallback path keeps the vehicle on the target lateral line
        self.path = list(path) if path else [
            (-1.0e6, self.target_lat_pos),
            (1.0e6, self.target_lat_pos),
        ]

    def control(self, state, radar, dt):
        steering = pure_pursuit_steering(state.x, state.y, state.heading, state.speed, self.path)
        accel = SPEED_GAIN * (self.target_speed - state.speed)
        for det in radar:
            if abs(det.relative_bearing) >= BRAKE_BEARING_RAD:
                continue
            if det.relative_speed > 0.0 and det.relative_range / det.relative_speed < BRAKE_TTC_S:
                accel = ACCEL_MIN
                break
        return saturate(ControlOutput(steering, accel))


def pedestrian_step(
    x: float, y: float, waypoint_index: int, target_speed: float,
    waypoints: list[tuple[float, float]], dt: float,
) -> tuple[float, float, int]:
    """Advance along the waypoint list at target_speed; stop at the last point.

    Returns the new position and waypoint index.  Motion covers at most
    target_speed*dt per call and never skips past a waypoint within a step.
    """
    if waypoint_index >= len(waypoints) or target_speed <= 0.0 or dt <= 0.0:
        return x, y, waypoint_index
    # consume waypoints we are already standing on
    while waypoint_index < len(waypoints):
        wx, wy = waypoints[waypoint_index]
        remaining = math.hypot(wx - x, wy - y)
        if remaining > 0.0:
            break
        waypoint_index += 1
    else:
        return x, y, waypoint_index
    step_len = min(target_speed * dt, remaining)
    x += (wx - x) / remaining * step_len
    y += (wy - y) / remaining * step_len
    if step_len == remaining:
        waypoint_index += 1
    return x, y, waypoint_index


# --------------------------------------------------------------------------
# Radar


def radar_sense(world, self_id: int, max_range: float = RADAR_RANGE_M) -> list[RadarDetection]:
    """Ground-truth detections of other vehicles and pedestrians, nearest first.

    Targets beyond max_range (fog-limited when the world enables it) or
    outside the +-45 degree field of view are dropped.
    """
    me = world.vehicle_by_id(self_id)
    if me is None:
        raise ValueError(f"no vehicle with id {self_id}")
    if world.fog_limits_radar and world.fog_visibility_range is not None:
        max_range = min(max_range, world.fog_visibility_range)

    mvx = me.speed * math.cos(me.heading)
    mvy = me.speed * math.sin(me.heading)
    detections: list[tuple[tuple, RadarDetection]] = []

    def consider(kind_rank: int, ident: int, tx, ty, tvx, tvy):
        dx, dy = tx - me.x, ty - me.y
        rng = math.hypot(dx, dy)
        if rng == 0.0 or rng > max_range:
            return
        bearing = _wrap_angle(math.atan2(dy, dx) - me.heading)
        if abs(bearing) > RADAR_FOV_RAD:
            return
        # closing speed: negative range rate
        closing = -((dx * (tvx - mvx) + dy * (tvy - mvy)) / rng)
        detections.append(
            ((rng, kind_rank, ident), RadarDetection(rng, bearing, closing))
        )

    for vhc in world.vehicles:
        if vhc.id == self_id:
            continue
        consider(0, vhc.id, vhc.x, vhc.y, vhc.speed * math.cos(vhc.heading),
                 vhc.speed * math.sin(vhc.heading))
    for ped in world.pedestrians:
        pvx, pvy = ped.velocity()
        consider(1, ped.id, ped.x, ped.y, pvx, pvy)

    detections.sort(key=lambda item: item[0])
    return [det for _, det in detections]


# --------------------------------------------------------------------------
# Registry

_VEHICLE_FACTORIES = {
    "void": lambda args, path: VoidController(),
    "path_and_speed_follower": PathSpeedFollower,
    "automated_driving_with_fusion2": FusionDrivingController,
}

PEDESTRIAN_CONTROLLERS = frozenset({"void", "pedestrian_control"})


def registered_vehicle_controllers() -> frozenset[str]:
    return frozenset(_VEHICLE_FACTORIES)


def make_vehicle_controller(
    name: str, args: list[str], path: list[tuple[float, float]]
) -> VehicleController:
    factory = _VEHICLE_FACTORIES.get(name)
    if factory is None:
        raise ControllerConfigError(f"unknown vehicle controller {name!r}")
    return factory(args, path)
