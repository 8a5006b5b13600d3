"""Deterministic point-gripper world used by every task.

The model is deliberately small: a position-controlled gripper point with
two fingers whose closed pads push with a 2 cm square footprint,
axis-aligned cubes and pucks, a table plane at z = 0, gravity,
Coulomb-style sliding friction, quasi-static pushing and a proximity grasp.

One control step (:func:`advance`) runs 20 substeps of 2 ms with
semi-implicit Euler integration.  The inner loop works on plain Python
floats: per-object arrays are tiny and numpy call overhead would dominate.
"""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

SUBSTEP_DT = 0.002
N_SUBSTEPS = 20
CONTROL_DT = SUBSTEP_DT * N_SUBSTEPS  # 0.04 s, 25 Hz

GRAVITY = 9.81
FRICTION_COEF = 0.1
MAX_OPENING = 0.08

CUBE_EDGE = 0.04
PUCK_RADIUS = 0.03
PUCK_HEIGHT = 0.02

NEUTRAL_POS = (0.0, 0.0, 0.10)
WORKSPACE_LOW = (-0.30, -0.30, 0.0)
WORKSPACE_HIGH = (0.30, 0.30, 0.30)

# closed finger pads give the gripper a 2 cm square footprint when pushing
FINGER_PAD = 0.01
GRASP_XY_TOL = 0.01
GRASP_Z_TOL = 0.015
STACK_OFFSET_TOL = 0.02

_EPS = 1e-12


class InvalidCommandError(ValueError):
    """Raised when a command contains NaN/inf or has the wrong shape."""


@dataclass
class ObjectState:
    """Pose and velocity of one rigid object.

    ``shape`` is ``"cube"`` (edge 0.04 m) or ``"puck"`` (radius 0.03 m,
    height 0.02 m).  Orientation is XYZ Euler angles in radians.
    """

    pos: np.ndarray
    orient: np.ndarray = field(default_factory=lambda: np.zeros(3))
    lin_vel: np.ndarray = field(default_factory=lambda: np.zeros(3))
    ang_vel: np.ndarray = field(default_factory=lambda: np.zeros(3))
    shape: str = "cube"
    color: str = "red"

    def __post_init__(self):
        if self.shape not in ("cube", "puck"):
            raise ValueError(f"unknown shape {self.shape!r}")
        self.pos = np.asarray(self.pos, dtype=np.float64).copy()
        self.orient = np.asarray(self.orient, dtype=np.float64).copy()
        self.lin_vel = np.asarray(self.lin_vel, dtype=np.float64).copy()
        self.ang_vel = np.asarray(self.ang_vel, dtype=np.float64).copy()

    @property
    def half_height(self) -> float:
        return CUBE_EDGE / 2 if self.shape == "cube" else PUCK_HEIGHT / 2

    @property
    def half_width(self) -> float:
        return CUBE_EDGE / 2 if self.shape == "cube" else PUCK_RADIUS

    @property
    def width(self) -> float:
        """Extent the fingers have to close around."""
        return 2.0 * self.half_width

    def coordinates(self) -> np.ndarray:
        """The 12 observed coordinates: pos, orient, lin_vel, ang_vel."""
        return np.concatenate([self.pos, self.orient, self.lin_vel, self.ang_vel])


@dataclass
class WorldState:
    """Complete simulator state.  Treated as a value: :func:`advance` never
    mutates its input.

    ``grasp_offset`` is the object-minus-gripper position captured at grasp
    time; ``touched`` lists the objects the gripper pushed, held or released
    during the last control step.
    """

    time: float = 0.0
    gripper_pos: np.ndarray = field(default_factory=lambda: np.array(NEUTRAL_POS))
    gripper_vel: np.ndarray = field(default_factory=lambda: np.zeros(3))
    finger_opening: float = 0.0
    objects: List[ObjectState] = field(default_factory=list)
    attached: Optional[int] = None
    grasp_offset: np.ndarray = field(default_factory=lambda: np.zeros(3))
    touched: Tuple[int, ...] = ()
    table_height: float = 0.0
    gravity: float = GRAVITY

    def __post_init__(self):
        self.gripper_pos = np.asarray(self.gripper_pos, dtype=np.float64).copy()
        self.gripper_vel = np.asarray(self.gripper_vel, dtype=np.float64).copy()
        self.grasp_offset = np.asarray(self.grasp_offset, dtype=np.float64).copy()

    def copy(self) -> "WorldState":
        return copy.deepcopy(self)


def distance(a: Sequence[float], b: Sequence[float]) -> float:
    """Euclidean distance between two points."""
    d = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    return float(np.sqrt(np.dot(d, d)))


def clip_to_workspace(p: Sequence[float]) -> np.ndarray:
    return np.clip(np.asarray(p, dtype=np.float64), WORKSPACE_LOW, WORKSPACE_HIGH)


class _Body:
    """Mutable float mirror of an ObjectState for the substep loop."""

    __slots__ = ("p", "v", "hh", "hw", "w", "cube")

    def __init__(self, obj: ObjectState):
        self.p = [float(c) for c in obj.pos]
        self.v = [float(c) for c in obj.lin_vel]
        self.hh = obj.half_height
        self.hw = obj.half_width
        self.w = obj.width
        self.cube = obj.shape == "cube"

    def contains_xy(self, x: float, y: float, pad: float = 0.0) -> bool:
        """Whether point (x, y) lies in the footprint grown by ``pad``."""
        dx = x - self.p[0]
        dy = y - self.p[1]
        reach = self.hw + pad
        if self.cube:
            return abs(dx) < reach and abs(dy) < reach
        return dx * dx + dy * dy < reach * reach

    def exit_distance(self, x: float, y: float, dx: float, dy: float, pad: float = 0.0) -> float:
        """Shift along unit (dx, dy) that moves the grown footprint off
        point (x, y)."""
        rx = x - self.p[0]
        ry = y - self.p[1]
        reach = self.hw + pad
        if self.cube:
            s = math.inf
            for r, d in ((rx, dx), (ry, dy)):
                if abs(d) > _EPS:
                    s = min(s, (r + math.copysign(reach, d)) / d)
            return max(s, 0.0)
        proj = rx * dx + ry * dy
        disc = proj * proj - (rx * rx + ry * ry) + reach * reach
        return max(proj + math.sqrt(max(disc, 0.0)), 0.0)


def _overlap_xy(a: _Body, b: _Body) -> bool:
    reach = a.hw + b.hw
    return abs(a.p[0] - b.p[0]) < reach and abs(a.p[1] - b.p[1]) < reach


def _resting_height(i: int, bodies: List[_Body], attached: Optional[int], table: float,
                    shift: bool) -> float:
    """Height of body ``i``'s centre when resting on whatever is below it.

    A cube sits on another cube whose centre is within 2 cm horizontally.
    Any other overlap from above makes the body slide off: with ``shift``
    it is displaced sideways until the footprints separate, otherwise the
    lower body just blocks it (used for a held object).
    """
    b = bodies[i]
    rest = table + b.hh
    bottom = b.p[2] - b.hh
    for j, o in enumerate(bodies):
        if j == i or j == attached:
            continue
        top = o.p[2] + o.hh
        if top > bottom + 1e-9 or not _overlap_xy(b, o):
            continue
        dx = b.p[0] - o.p[0]
        dy = b.p[1] - o.p[1]
        if b.cube and o.cube and math.hypot(dx, dy) < STACK_OFFSET_TOL:
            rest = max(rest, top + b.hh)
        elif shift:
            reach = b.hw + o.hw
            if abs(dx) >= abs(dy):
                b.p[0] = o.p[0] + math.copysign(reach, dx if dx != 0.0 else 1.0)
            else:
                b.p[1] = o.p[1] + math.copysign(reach, dy)
        else:
            rest = max(rest, top + b.hh)
    return rest


def advance(world: WorldState, gripper_cmd: Sequence[float], finger_cmd: float) -> WorldState:
    """Run one 40 ms control step (20 substeps of 2 ms).

    ``gripper_cmd`` is the physical displacement in meters requested for the
    whole step and ``finger_cmd`` the change of finger opening in meters.
    Returns a new state; ``world`` is left untouched.
    """
    cmd = np.asarray(gripper_cmd, dtype=np.float64)
    if cmd.shape != (3,):
        raise InvalidCommandError(f"gripper command must have shape (3,), got {cmd.shape}")
    if not np.all(np.isfinite(cmd)) or not math.isfinite(float(finger_cmd)):
        raise InvalidCommandError("non-finite command component")

    dt = SUBSTEP_DT
    g = world.gravity
    table = world.table_height
    decel = FRICTION_COEF * g * dt

    lo_x, lo_y, lo_z = WORKSPACE_LOW
    hi_x, hi_y, hi_z = WORKSPACE_HIGH
    sx, sy, sz = (float(c) for c in world.gripper_pos)
    tx, ty, tz = (float(c) for c in clip_to_workspace(world.gripper_pos + cmd))
    gx, gy, gz = sx, sy, sz
    vx, vy, vz = (float(c) for c in world.gripper_vel)
    opening = float(world.finger_opening)
    finger_step = float(finger_cmd) / N_SUBSTEPS
    bodies = [_Body(o) for o in world.objects]
    attached = world.attached
    ox, oy, oz = (float(c) for c in world.grasp_offset)
    touched = set()

    for k in range(1, N_SUBSTEPS + 1):
        # fingers and grasp
        prev_open = opening
        opening += finger_step
        opening = 0.0 if opening < 0.0 else MAX_OPENING if opening > MAX_OPENING else opening
        if attached is None:
            for i, b in enumerate(bodies):
                p = b.p
                if (prev_open > b.w >= opening
                        and math.hypot(gx - p[0], gy - p[1]) < GRASP_XY_TOL
                        and abs(gz - p[2]) < GRASP_Z_TOL):
                    attached = i
                    ox, oy, oz = p[0] - gx, p[1] - gy, p[2] - gz
                    opening = b.w
                    touched.add(i)
                    break
        else:
            held = bodies[attached]
            if opening > held.w:
                held.v = [vx, vy, vz]
                touched.add(attached)
                attached = None
            else:
                opening = held.w

        # gripper kinematics: interpolate, clip, then stop on object tops
        frac = k / N_SUBSTEPS
        dx_ = sx + (tx - sx) * frac
        dy_ = sy + (ty - sy) * frac
        dz_ = sz + (tz - sz) * frac
        dx_ = lo_x if dx_ < lo_x else hi_x if dx_ > hi_x else dx_
        dy_ = lo_y if dy_ < lo_y else hi_y if dy_ > hi_y else dy_
        dz_ = lo_z if dz_ < lo_z else hi_z if dz_ > hi_z else dz_
        for i, b in enumerate(bodies):
            if i == attached or opening > b.w:
                continue
            top = b.p[2] + b.hh
            if gz >= top - 1e-9 and dz_ < top and b.contains_xy(dx_, dy_, FINGER_PAD):
                dz_ = top
        if attached is not None:
            held = bodies[attached]
            held.p = [dx_ + ox, dy_ + oy, dz_ + oz]
            floor = _resting_height(attached, bodies, attached, table, shift=False)
            if held.p[2] < floor:
                dz_ += floor - held.p[2]
        mx, my = dx_ - gx, dy_ - gy
        vx, vy, vz = mx / dt, my / dt, (dz_ - gz) / dt
        gx, gy, gz = dx_, dy_, dz_

        # objects
        for i, b in enumerate(bodies):
            p, v = b.p, b.v
            if i == attached:
                b.p = [gx + ox, gy + oy, gz + oz]
                b.v = [vx, vy, vz]
                continue
            pushed = False
            if (opening <= b.w and p[2] - b.hh <= gz < p[2] + b.hh
                    and b.contains_xy(gx, gy, FINGER_PAD)):
                ux, uy = mx, my
                norm = math.hypot(ux, uy)
                if norm < _EPS:
                    ux, uy = p[0] - gx, p[1] - gy
                    norm = math.hypot(ux, uy)
                    if norm < _EPS:
                        ux, uy, norm = 1.0, 0.0, 1.0
                ux /= norm
                uy /= norm
                shift = b.exit_distance(gx, gy, ux, uy, FINGER_PAD)
                p[0] += shift * ux
                p[1] += shift * uy
                # a puck takes the gripper's speed and can be slid; a cube
                # is pushed quasi-statically and stops when contact ends
                if b.cube:
                    v[0] = v[1] = 0.0
                else:
                    v[0], v[1] = vx, vy
                pushed = True
                touched.add(i)

            rest = _resting_height(i, bodies, attached, table, shift=True)
            if p[2] > rest + 1e-9 or v[2] != 0.0:
                v[2] -= g * dt
                if not pushed:
                    p[0] += v[0] * dt
                    p[1] += v[1] * dt
                p[2] += v[2] * dt
                if p[2] <= rest:
                    p[2] = rest
                    v[2] = 0.0
            else:
                p[2] = rest
                if not pushed and (v[0] != 0.0 or v[1] != 0.0):
                    speed = math.hypot(v[0], v[1])
                    if speed <= decel:
                        v[0] = v[1] = 0.0
                    else:
                        scale = (speed - decel) / speed
                        v[0] *= scale
                        v[1] *= scale
                    p[0] += v[0] * dt
                    p[1] += v[1] * dt

    objects = []
    for obj, b in zip(world.objects, bodies):
        objects.append(ObjectState(pos=b.p, orient=obj.orient, lin_vel=b.v,
                                   ang_vel=np.zeros(3), shape=obj.shape, color=obj.color))
    return WorldState(
        time=world.time + CONTROL_DT,
        gripper_pos=[gx, gy, gz],
        gripper_vel=[vx, vy, vz],
        finger_opening=opening,
        objects=objects,
        attached=attached,
        grasp_offset=[ox, oy, oz] if attached is not None else np.zeros(3),
        touched=tuple(sorted(touched)),
        table_height=world.table_height,
        gravity=world.gravity,
    )
