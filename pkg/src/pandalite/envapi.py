"""Goal-conditioned environment composed of one robot and one task."""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .robot import Panda
from .simcore import WorldState
from .tasks import TASKS, Task


class EpisodeError(RuntimeError):
    """Stepping an environment that was never reset or already terminated."""


@dataclass
class GoalObservation:
    observation: np.ndarray
    achieved_goal: np.ndarray
    desired_goal: np.ndarray


@dataclass
class StepResult:
    obs: GoalObservation
    reward: float
    terminated: bool
    info_is_success: bool


@dataclass(frozen=True)
class EnvSpec:
    obs_dim: int
    goal_dim: int
    action_dim: int
    episode_length: int


class RobotTaskEnv:
    """Owns a robot, a task and the world they act on.

    Actions go to the robot; the observation is the robot slice followed by
    the task slice; goals and rewards come from the task.  Episodes have a
    fixed length and never end early on success.
    """

    def __init__(self, robot, task: Task, seed: Optional[int] = None):
        self.robot = robot
        self.task = task
        self.rng = np.random.default_rng(seed)
        self.world: Optional[WorldState] = None
        self.goal: Optional[np.ndarray] = None
        self.elapsed = 0
        self._done = True

    @property
    def spec(self) -> EnvSpec:
        return env_spec(self)

    @property
    def episode_length(self) -> int:
        return self.task.spec.episode_length

    def compute_reward(self, achieved, desired):
        return self.task.compute_reward(achieved, desired)

    def _observe(self) -> GoalObservation:
        obs = np.concatenate([self.robot.observation(self.world), self.task.observation(self.world)])
        return GoalObservation(obs, self.task.achieved_goal(self.world), self.goal.copy())

    def reset(self, seed: Optional[int] = None) -> GoalObservation:
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        world = self.robot.reset(WorldState())
        world = self.task.reset(world, self.rng)
        self.world = world
        self.goal = self.task.sample_goal(self.rng)
        self.elapsed = 0
        self._done = False
        return self._observe()

    def step(self, action) -> StepResult:
        if self._done:
            raise EpisodeError("call reset() before step()")
        action = np.clip(np.asarray(action, dtype=np.float64), -1.0, 1.0)
        self.world = self.robot.apply_action(self.world, action)
        self.elapsed += 1
        obs = self._observe()
        reward = self.task.compute_reward(obs.achieved_goal, obs.desired_goal)
        success = self.task.is_success(obs.achieved_goal, obs.desired_goal)
        terminated = self.elapsed >= self.episode_length
        self._done = terminated
        return StepResult(obs, reward, terminated, success)


def env_spec(env: RobotTaskEnv) -> EnvSpec:
    return EnvSpec(
        obs_dim=env.robot.obs_dim + env.task.obs_dim,
        goal_dim=env.task.spec.goal_dim,
        action_dim=env.robot.action_dim,
        episode_length=env.task.spec.episode_length,
    )


ENV_IDS = tuple(f"Panda{name}-v1" for name in TASKS)
_ID_RE = re.compile(r"^Panda(Reach|Push|Slide|PickAndPlace|Stack)(Dense)?-v1$")


def make(env_id: str, dense: bool = False, seed: Optional[int] = None) -> RobotTaskEnv:
    """Build an environment from its id, e.g. ``PandaPush-v1``.

    ``PandaPushDense-v1`` and ``make("PandaPush-v1", dense=True)`` are the
    same dense-reward variant.
    """
    m = _ID_RE.match(env_id)
    if m is None:
        raise KeyError(f"unknown environment {env_id!r}; expected one of {ENV_IDS}")
    spec = TASKS[m.group(1)]
    if dense or m.group(2):
        spec = spec.with_reward("dense")
    return RobotTaskEnv(Panda(block_gripper=spec.block_gripper), Task(spec), seed=seed)
