"""Goal-conditioned manipulation tasks for a simulated Panda gripper,
with DDPG, TD3 and SAC learners and hindsight experience replay, in numpy."""
from .agents import Agent, AgentConfig, ddpg_target, sac_target, td3_target
from .envapi import ENV_IDS, RobotTaskEnv, env_spec, make
from .harness import RunConfig, aggregate, evaluate, plot_data, train
from .her import ReplayBuffer
from .simcore import WorldState, advance, distance
from .tasks import TASKS, compute_reward, is_success

__version__ = "0.1.0"

__all__ = [
    "Agent", "AgentConfig", "ddpg_target", "sac_target", "td3_target",
    "ENV_IDS", "RobotTaskEnv", "env_spec", "make",
    "RunConfig", "aggregate", "evaluate", "plot_data", "train",
    "ReplayBuffer", "WorldState", "advance", "distance",
    "TASKS", "compute_reward", "is_success",
]
