"""Training, evaluation and multi-seed aggregation.

Rollout workers run in lockstep inside one process: each owns an
environment, an exploration RNG and a read-only policy snapshot taken at
the start of the round.  Finished episodes are handed to the shared replay
buffer in worker order, each followed by the learner's update batches.  This
keeps single- and multi-worker runs bit-reproducible.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .agents import Agent, AgentConfig, Policy
from .envapi import RobotTaskEnv, make
from .her import BufferNotReadyError, ReplayBuffer
from .nn import NonFiniteError

log = logging.getLogger(__name__)

METRICS_HEADER = ("total_env_steps", "success_rate", "wall_time_s")
DIAGNOSTICS_HEADER = METRICS_HEADER + ("critic_loss", "actor_loss", "buffer_size", "n_updates")
EVAL_SEED_OFFSET = 1_000_003


class AlignmentError(ValueError):
    """Runs being aggregated were evaluated at different step counts."""


@dataclass
class RunConfig:
    env: str = "PandaReach-v1"
    dense: bool = False
    algo: str = "ddpg"
    agent_overrides: dict = field(default_factory=dict)
    her: bool = True
    clipped_double_q: Optional[bool] = None
    n_workers: int = 8
    total_steps: int = 50_000
    eval_every: int = 80  # training episodes, counted across workers
    eval_episodes: int = 80
    n_batches: int = 40  # updates after every worker episode
    replay_k: int = 4
    buffer_size: int = 10**6
    seed: int = 0
    out_dir: Optional[str] = None
    # False writes simulated time (steps x 40 ms) in the wall_time_s column
    # so the metrics file is a pure function of the seed
    wall_clock: bool = True
    # stop after the first evaluation at or above this success rate
    stop_at: Optional[float] = None

    def __post_init__(self):
        for name in ("n_workers", "total_steps", "eval_every", "eval_episodes"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.n_batches < 0 or self.replay_k < 0:
            raise ValueError("n_batches and replay_k must be non-negative")

    def agent_config(self) -> AgentConfig:
        kwargs = dict(self.agent_overrides)
        kwargs["algorithm"] = self.algo
        if self.clipped_double_q is not None:
            kwargs["clipped_double_q"] = self.clipped_double_q
        return AgentConfig(**kwargs)


@dataclass
class MetricsRow:
    total_env_steps: int
    success_rate: float
    wall_time: float
    diagnostics: Dict[str, float] = field(default_factory=dict)


@dataclass
class TrainResult:
    agent: Agent
    metrics: List[MetricsRow]
    out_dir: Optional[Path]


def run_episode(env: RobotTaskEnv, policy: Policy, explore: bool, rng: np.random.Generator,
                seed: Optional[int] = None):
    """Play one full episode.  Returns stacked transition arrays and
    whether the final state is a success."""
    o = env.reset(seed)
    T = env.episode_length
    obs, ag = [o.observation], [o.achieved_goal]
    actions, rewards = [], []
    success = False
    for _ in range(T):
        a = policy.act(o.observation, o.desired_goal, explore, rng)
        res = env.step(a)
        o = res.obs
        actions.append(a)
        rewards.append(res.reward)
        obs.append(o.observation)
        ag.append(o.achieved_goal)
        success = res.info_is_success
    obs, ag = np.array(obs), np.array(ag)
    episode = {
        "obs": obs[:-1],
        "action": np.array(actions),
        "reward": np.array(rewards),
        "next_obs": obs[1:],
        "done": np.zeros(T),
        "achieved_goal": ag[:-1],
        "next_achieved_goal": ag[1:],
        "desired_goal": np.repeat(o.desired_goal[None, :], T, axis=0),
    }
    return episode, success


def evaluate(agent, env: RobotTaskEnv, n: int = 80, seed: Optional[int] = None) -> float:
    """Success rate of the deterministic policy over ``n`` episodes.

    Success is judged on the final step of each episode.  Nothing is
    written to any buffer or normaliser.
    """
    policy = agent.policy() if isinstance(agent, Agent) else agent
    rng = np.random.default_rng(0)  # unused by the deterministic policy
    successes = 0
    for i in range(n):
        _, ok = run_episode(env, policy, False, rng, seed if i == 0 else None)
        successes += bool(ok)
    return successes / n


class _Writer:
    def __init__(self, out_dir: Optional[Path]):
        self.out_dir = out_dir
        if out_dir is None:
            return
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "metrics.csv", "w", newline="") as f:
            csv.writer(f).writerow(METRICS_HEADER)
        with open(out_dir / "diagnostics.csv", "w", newline="") as f:
            csv.writer(f).writerow(DIAGNOSTICS_HEADER)

    def append(self, row: MetricsRow, reported_time: float) -> None:
        if self.out_dir is None:
            return
        with open(self.out_dir / "metrics.csv", "a", newline="") as f:
            csv.writer(f).writerow([row.total_env_steps, repr(row.success_rate),
                                    f"{reported_time:.3f}"])
        d = row.diagnostics
        with open(self.out_dir / "diagnostics.csv", "a", newline="") as f:
            csv.writer(f).writerow([row.total_env_steps, repr(row.success_rate),
                                    f"{row.wall_time:.3f}", d.get("critic_loss", ""),
                                    d.get("actor_loss", ""), d.get("buffer_size", ""),
                                    d.get("n_updates", "")])


def _manifest(config: RunConfig, agent_cfg: AgentConfig, status: str, **extra) -> dict:
    return {
        "run": dataclasses.asdict(config),
        "agent": agent_cfg.to_dict(),
        "schedule": {
            "rollout": "lockstep workers, one episode each per round, handed to the "
                       "buffer in worker order",
            "updates_per_worker_episode": config.n_batches,
            "warmup": "no updates until the buffer holds batch_size transitions",
            "eval": f"every {config.eval_every} training episodes (all workers), "
                    f"{config.eval_episodes} deterministic episodes, plus one at the end",
            "worker_seeds": "environment and exploration RNG of worker i use seed + i",
        },
        "status": status,
        **extra,
    }


def train(config: RunConfig) -> TrainResult:
    """Run one training job and return the trained agent and its metrics.

    With ``out_dir`` set, writes ``metrics.csv``, ``diagnostics.csv``,
    ``manifest.json`` and ``checkpoint.plnn``.
    """
    t0 = time.perf_counter()
    out_dir = Path(config.out_dir) if config.out_dir else None
    agent_cfg = config.agent_config()
    envs = [make(config.env, config.dense, seed=config.seed + i) for i in range(config.n_workers)]
    worker_rngs = [np.random.default_rng(config.seed + i) for i in range(config.n_workers)]
    eval_env = make(config.env, config.dense)
    spec = envs[0].spec
    agent = Agent(spec.obs_dim, spec.goal_dim, spec.action_dim, agent_cfg, seed=config.seed)
    buffer = ReplayBuffer(envs[0].compute_reward, capacity=config.buffer_size,
                          k=config.replay_k, her_enabled=config.her,
                          rng=np.random.default_rng(config.seed + 7919))
    batch_rng = np.random.default_rng(config.seed + 104729)
    writer = _Writer(out_dir)
    if out_dir is not None:
        (out_dir / "manifest.json").write_text(
            json.dumps(_manifest(config, agent_cfg, "running"), indent=2))

    metrics: List[MetricsRow] = []
    steps = episodes = n_updates = 0
    last_eval = 0
    losses: Dict[str, List[float]] = {}

    def record():
        rate = evaluate(agent, eval_env, config.eval_episodes, seed=config.seed + EVAL_SEED_OFFSET)
        wall = time.perf_counter() - t0
        diag = {k: float(np.mean(v)) for k, v in losses.items()}
        diag = {"critic_loss": diag.get("critic1_loss", float("nan")),
                "actor_loss": diag.get("actor_loss", float("nan")),
                "buffer_size": len(buffer), "n_updates": n_updates}
        row = MetricsRow(steps, rate, wall, diag)
        metrics.append(row)
        writer.append(row, wall if config.wall_clock else steps * 0.04)
        losses.clear()
        log.info("%s %s seed=%d steps=%d success=%.3f", config.env, config.algo,
                 config.seed, steps, rate)

    status = "finished"
    try:
        while steps < config.total_steps:
            policy = agent.policy(snapshot=True)
            episodes_round = [run_episode(env, policy, True, rng)[0]
                              for env, rng in zip(envs, worker_rngs)]
            for ep in episodes_round:
                agent.observe(np.concatenate([ep["obs"], ep["next_obs"][-1:]]),
                              np.concatenate([ep["desired_goal"], ep["achieved_goal"],
                                              ep["next_achieved_goal"][-1:]]))
                buffer.store_episode(ep)
                steps += len(ep["reward"])
                episodes += 1
                for _ in range(config.n_batches):
                    try:
                        batch = buffer.sample_batch(agent_cfg.batch_size, batch_rng)
                    except BufferNotReadyError:
                        break
                    for k, v in agent.update(batch).items():
                        losses.setdefault(k, []).append(v)
                    n_updates += 1
            if episodes // config.eval_every > last_eval:
                last_eval = episodes // config.eval_every
                record()
                if config.stop_at is not None and metrics[-1].success_rate >= config.stop_at:
                    break
        if not metrics or metrics[-1].total_env_steps != steps:
            record()
    except NonFiniteError as exc:
        status = f"aborted: {exc}"
        log.error("run aborted after %d steps: %s", steps, exc)
        raise
    finally:
        if out_dir is not None:
            agent.save(out_dir / "checkpoint.plnn",
                       extra={"env": config.env, "dense": config.dense})
            (out_dir / "manifest.json").write_text(json.dumps(
                _manifest(config, agent_cfg, status, total_env_steps=steps,
                          episodes=episodes, n_updates=n_updates,
                          n_critics=len(agent.critics)), indent=2))
    return TrainResult(agent, metrics, out_dir)


# --- aggregation -----------------------------------------------------------------

def read_metrics(path) -> Dict[str, np.ndarray]:
    path = Path(path)
    if path.is_dir():
        path = path / "metrics.csv"
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    return {
        "total_env_steps": np.array([int(r["total_env_steps"]) for r in rows], dtype=np.int64),
        "success_rate": np.array([float(r["success_rate"]) for r in rows]),
    }


def aggregate_rates(steps: Sequence[np.ndarray], rates: Sequence[np.ndarray]) -> Dict[str, np.ndarray]:
    """Median and quartiles across runs at every shared checkpoint."""
    if len(rates) == 0:
        raise ValueError("nothing to aggregate")
    ref = np.asarray(steps[0])
    for s in steps[1:]:
        if len(s) != len(ref) or np.any(np.asarray(s) != ref):
            raise AlignmentError("runs do not share evaluation checkpoints")
    table = np.vstack([np.asarray(r, dtype=np.float64) for r in rates])
    return {
        "total_env_steps": ref.copy(),
        "median": np.percentile(table, 50, axis=0),
        "lowq": np.percentile(table, 25, axis=0),
        "highq": np.percentile(table, 75, axis=0),
        "n_runs": len(rates),
    }


def aggregate(run_dirs: Sequence) -> Dict[str, np.ndarray]:
    """Aggregate the ``metrics.csv`` of several runs (one per seed)."""
    data = [read_metrics(d) for d in run_dirs]
    return aggregate_rates([d["total_env_steps"] for d in data], [d["success_rate"] for d in data])


def write_curve(path, agg: Dict[str, np.ndarray]) -> None:
    """Whitespace-separated curve file with columns ``timestep med lowq highq``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        f.write("timestep med lowq highq\n")
        for s, m, lo, hi in zip(agg["total_env_steps"], agg["median"], agg["lowq"], agg["highq"]):
            f.write(f"{s} {m:.6g} {lo:.6g} {hi:.6g}\n")


def _run_label(manifest: dict) -> tuple:
    run = manifest["run"]
    algo = run["algo"].upper()
    tags = []
    if not run["her"]:
        tags.append("noHER")
    if run.get("clipped_double_q") is False:
        tags.append("noCDQ")
    if run["dense"]:
        tags.append("Dense")
    label = "_".join([algo] + tags)
    task = run["env"].replace("Panda", "").replace("Dense", "").replace("-v1", "")
    return label, task


def plot_data(run_dirs: Sequence, out_dir) -> List[Path]:
    """Group runs by algorithm variant and task, write one curve file per
    group as ``<out_dir>/<VARIANT>/<Task>.dat``."""
    groups: Dict[tuple, list] = {}
    for d in run_dirs:
        manifest = json.loads((Path(d) / "manifest.json").read_text())
        groups.setdefault(_run_label(manifest), []).append(d)
    written = []
    for (label, task), dirs in sorted(groups.items()):
        path = Path(out_dir) / label / f"{task}.dat"
        write_curve(path, aggregate(dirs))
        written.append(path)
    return written
