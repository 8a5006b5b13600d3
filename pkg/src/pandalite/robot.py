"""Panda robot: maps normalized actions to gripper commands.

The robot knows nothing about tasks.  Anything with ``action_dim``,
``reset``, ``apply_action`` and ``observation`` can stand in for it inside
:class:`pandalite.envapi.RobotTaskEnv`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .simcore import MAX_OPENING, NEUTRAL_POS, WorldState, advance


class ActionDimensionError(ValueError):
    pass


@dataclass(frozen=True)
class RobotConfig:
    block_gripper: bool = False
    displacement_scale: float = 0.05  # m per control step at |action| = 1
    finger_scale: float = 0.02
    neutral_pos: tuple = NEUTRAL_POS

    @property
    def action_dim(self) -> int:
        return 3 if self.block_gripper else 4


def apply_action(world: WorldState, cfg: RobotConfig, action) -> WorldState:
    action = np.asarray(action, dtype=np.float64)
    if action.shape != (cfg.action_dim,):
        raise ActionDimensionError(
            f"expected action of shape ({cfg.action_dim},), got {action.shape}")
    action = np.clip(action, -1.0, 1.0)
    gripper_cmd = action[:3] * cfg.displacement_scale
    if cfg.block_gripper:
        finger_cmd = 0.0
        if world.finger_opening != 0.0:
            world = world.copy()
            world.finger_opening = 0.0
    else:
        finger_cmd = float(action[3]) * cfg.finger_scale
    return advance(world, gripper_cmd, finger_cmd)


def robot_observation(world: WorldState, cfg: RobotConfig) -> np.ndarray:
    """Gripper position and velocity, plus the finger opening when the
    gripper is free to move."""
    parts = [world.gripper_pos, world.gripper_vel]
    if not cfg.block_gripper:
        parts.append([world.finger_opening])
    return np.concatenate(parts).astype(np.float64)


def reset_robot(world: WorldState, cfg: RobotConfig) -> WorldState:
    world = world.copy()
    world.gripper_pos = np.array(cfg.neutral_pos, dtype=np.float64)
    world.gripper_vel = np.zeros(3)
    world.finger_opening = 0.0 if cfg.block_gripper else MAX_OPENING
    world.attached = None
    world.grasp_offset = np.zeros(3)
    world.touched = ()
    return world


class Panda:
    """Object wrapper around the robot functions, one per environment."""

    def __init__(self, block_gripper: bool = False, **kwargs):
        self.config = RobotConfig(block_gripper=block_gripper, **kwargs)

    @property
    def action_dim(self) -> int:
        return self.config.action_dim

    @property
    def obs_dim(self) -> int:
        return 6 if self.config.block_gripper else 7

    def reset(self, world: WorldState) -> WorldState:
        return reset_robot(world, self.config)

    def apply_action(self, world: WorldState, action) -> WorldState:
        return apply_action(world, self.config, action)

    def observation(self, world: WorldState) -> np.ndarray:
        return robot_observation(world, self.config)
