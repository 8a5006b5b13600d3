"""The five manipulation tasks: goal sampling, achieved goals, rewards.

Reward and success functions broadcast over leading batch dimensions so the
replay buffer can recompute rewards for relabelled goals in one call.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .simcore import CUBE_EDGE, PUCK_HEIGHT, ObjectState, WorldState

SUCCESS_THRESHOLD = 0.05
SPAWN_HALF = 0.15
MIN_STACK_SEPARATION = 0.05


class GoalDimensionError(ValueError):
    pass


@dataclass(frozen=True)
class TaskSpec:
    name: str
    n_objects: int
    block_gripper: bool
    goal_dim: int
    episode_length: int
    # one (low, high) box per target point
    goal_volume: Tuple[Tuple[Tuple[float, ...], Tuple[float, ...]], ...]
    object_shape: str = "cube"
    reward_mode: str = "sparse"

    def with_reward(self, mode: str) -> "TaskSpec":
        if mode not in ("sparse", "dense"):
            raise ValueError(f"unknown reward mode {mode!r}")
        return dataclasses.replace(self, reward_mode=mode)


_CUBE_Z = CUBE_EDGE / 2
_PUCK_Z = PUCK_HEIGHT / 2

TASKS = {
    "Reach": TaskSpec("Reach", 0, True, 3, 50,
                      (((-0.15, -0.15, 0.05), (0.15, 0.15, 0.35)),)),
    "Push": TaskSpec("Push", 1, True, 3, 50,
                     (((-0.15, -0.15, _CUBE_Z), (0.15, 0.15, _CUBE_Z)),)),
    "Slide": TaskSpec("Slide", 1, True, 3, 50,
                      (((0.35, -0.25, _PUCK_Z), (0.85, 0.25, _PUCK_Z)),),
                      object_shape="puck"),
    "PickAndPlace": TaskSpec("PickAndPlace", 1, False, 3, 50,
                             (((-0.15, -0.15, 0.02), (0.15, 0.15, 0.22)),)),
    "Stack": TaskSpec("Stack", 2, False, 6, 100,
                      (((-0.15, -0.15, _CUBE_Z), (0.15, 0.15, _CUBE_Z)),
                       ((-0.15, -0.15, _CUBE_Z + CUBE_EDGE), (0.15, 0.15, _CUBE_Z + CUBE_EDGE)))),
}

OBJECT_COLORS = ("red", "green")


def sample_goal(spec: TaskSpec, rng: np.random.Generator) -> np.ndarray:
    low, high = spec.goal_volume[0]
    goal = rng.uniform(low, high)
    if spec.name == "Stack":
        # second target sits exactly one cube edge above the first
        goal = np.concatenate([goal, goal + np.array([0.0, 0.0, CUBE_EDGE])])
    return goal


def reset_task(spec: TaskSpec, world: WorldState, rng: np.random.Generator) -> WorldState:
    world = world.copy()
    shape = spec.object_shape
    half_h = _PUCK_Z if shape == "puck" else _CUBE_Z
    positions = []
    while len(positions) < spec.n_objects:
        xy = rng.uniform(-SPAWN_HALF, SPAWN_HALF, size=2)
        if all(np.hypot(*(xy - p)) >= MIN_STACK_SEPARATION for p in positions):
            positions.append(xy)
    world.objects = [
        ObjectState(pos=[xy[0], xy[1], world.table_height + half_h], shape=shape,
                    color=OBJECT_COLORS[i])
        for i, xy in enumerate(positions)
    ]
    world.attached = None
    world.grasp_offset = np.zeros(3)
    return world


def achieved_goal(spec: TaskSpec, world: WorldState) -> np.ndarray:
    if spec.n_objects == 0:
        return world.gripper_pos.copy()
    return np.concatenate([o.pos for o in world.objects[:spec.goal_dim // 3]])


def _point_distances(spec: TaskSpec, achieved, desired) -> np.ndarray:
    achieved = np.asarray(achieved, dtype=np.float64)
    desired = np.asarray(desired, dtype=np.float64)
    if achieved.shape != desired.shape or achieved.shape[-1] != spec.goal_dim:
        raise GoalDimensionError(
            f"{spec.name} expects goals of size {spec.goal_dim}, "
            f"got {achieved.shape} and {desired.shape}")
    diff = (achieved - desired).reshape(achieved.shape[:-1] + (spec.goal_dim // 3, 3))
    return np.sqrt(np.sum(diff * diff, axis=-1))


def is_success(spec: TaskSpec, achieved, desired):
    ok = np.all(_point_distances(spec, achieved, desired) < SUCCESS_THRESHOLD, axis=-1)
    return bool(ok) if np.ndim(ok) == 0 else ok


def compute_reward(spec: TaskSpec, achieved, desired):
    """Sparse: 0 on success, -1 otherwise.  Dense: minus the distance, or
    minus the root of the summed squared distances for two targets."""
    if spec.reward_mode == "sparse":
        r = is_success(spec, achieved, desired)
        r = np.asarray(r, dtype=np.float64) - 1.0
    else:
        d = _point_distances(spec, achieved, desired)
        r = -d[..., 0] if d.shape[-1] == 1 else -np.sqrt(np.sum(d * d, axis=-1))
    return float(r) if np.ndim(r) == 0 else r


def task_observation(spec: TaskSpec, world: WorldState) -> np.ndarray:
    if not world.objects:
        return np.zeros(0)
    return np.concatenate([o.coordinates() for o in world.objects])


class Task:
    """Bundles a :class:`TaskSpec` with the task functions."""

    def __init__(self, spec: TaskSpec):
        self.spec = spec

    @property
    def obs_dim(self) -> int:
        return 12 * self.spec.n_objects

    def reset(self, world: WorldState, rng: np.random.Generator) -> WorldState:
        return reset_task(self.spec, world, rng)

    def sample_goal(self, rng: np.random.Generator) -> np.ndarray:
        return sample_goal(self.spec, rng)

    def achieved_goal(self, world: WorldState) -> np.ndarray:
        return achieved_goal(self.spec, world)

    def observation(self, world: WorldState) -> np.ndarray:
        return task_observation(self.spec, world)

    def is_success(self, achieved, desired):
        return is_success(self.spec, achieved, desired)

    def compute_reward(self, achieved, desired):
        return compute_reward(self.spec, achieved, desired)
