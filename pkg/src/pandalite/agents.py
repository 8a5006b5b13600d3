"""DDPG, TD3 and SAC learners for goal-conditioned tasks.

All three share one :class:`Agent` class; the algorithm changes the actor
head, the exploration rule, the bootstrap target and the actor loss.
Setting ``clipped_double_q=False`` on TD3/SAC drops the second critic
altogether.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .nn import HIDDEN_SIZES, MLP, Adam, NonFiniteError, load_arrays, polyak_update, save_arrays

ALGORITHMS = ("ddpg", "td3", "sac")
LOG_STD_MIN, LOG_STD_MAX = -20.0, 2.0
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass
class AgentConfig:
    algorithm: str = "ddpg"
    gamma: float = 0.98
    polyak: float = 0.95
    lr_actor: float = 1e-3
    lr_critic: float = 1e-3
    random_action_prob: float = 0.3
    noise_scale: float = 0.2
    policy_delay: int = 2
    policy_noise: float = 0.2
    noise_clip: float = 0.5
    alpha: float = 0.2
    action_l2: float = 1.0
    obs_clip: float = 200.0
    norm_clip: float = 5.0
    normalize: bool = True
    # None means the algorithm default: on for TD3/SAC, meaningless for DDPG
    clipped_double_q: Optional[bool] = None
    batch_size: int = 256
    hidden_sizes: tuple = HIDDEN_SIZES
    dtype: str = "float32"

    def __post_init__(self):
        self.algorithm = self.algorithm.lower()
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if not 0.0 < self.gamma < 1.0 or not 0.0 < self.polyak < 1.0:
            raise ValueError("gamma and polyak must lie in (0, 1)")
        if min(self.noise_scale, self.policy_noise, self.noise_clip, self.alpha) < 0:
            raise ValueError("noise scales and alpha must be non-negative")
        if not 0.0 <= self.random_action_prob <= 1.0:
            raise ValueError("random_action_prob must be a probability")
        if self.clipped_double_q is None:
            self.clipped_double_q = self.algorithm != "ddpg"
        elif self.algorithm == "ddpg" and self.clipped_double_q:
            raise ValueError("DDPG has a single critic; clipped double-Q does not apply")
        self.hidden_sizes = tuple(self.hidden_sizes)

    @property
    def n_critics(self) -> int:
        return 2 if self.clipped_double_q else 1

    @property
    def actor_delay(self) -> int:
        return self.policy_delay if self.algorithm == "td3" else 1

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["hidden_sizes"] = list(self.hidden_sizes)
        return d


class Normalizer:
    """Running mean/std normaliser with raw and normalised clipping.

    Inputs are clipped to ``[-obs_clip, obs_clip]``, standardised with the
    running statistics (std floored at ``eps``), then clipped to
    ``[-norm_clip, norm_clip]``.
    """

    def __init__(self, size: int, eps: float = 1e-2, obs_clip: float = 200.0,
                 norm_clip: float = 5.0, enabled: bool = True):
        self.size = size
        self.eps = eps
        self.obs_clip = obs_clip
        self.norm_clip = norm_clip
        self.enabled = enabled
        self.count = 0
        self.mean = np.zeros(size)
        self.m2 = np.zeros(size)

    @property
    def var(self) -> np.ndarray:
        if self.count == 0:
            return np.ones(self.size)
        return np.maximum(self.m2 / self.count, self.eps ** 2)

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.var)

    def observe(self, x) -> "Normalizer":
        x = np.clip(np.asarray(x, dtype=np.float64).reshape(-1, self.size),
                    -self.obs_clip, self.obs_clip)
        n = len(x)
        if n == 0:
            return self
        batch_mean = x.mean(axis=0)
        batch_m2 = ((x - batch_mean) ** 2).sum(axis=0)
        total = self.count + n
        delta = batch_mean - self.mean
        self.mean = self.mean + delta * n / total
        self.m2 = self.m2 + batch_m2 + delta ** 2 * self.count * n / total
        self.count = total
        return self

    def normalize(self, x) -> np.ndarray:
        x = np.clip(np.asarray(x, dtype=np.float64), -self.obs_clip, self.obs_clip)
        if not self.enabled:
            return x
        return np.clip((x - self.mean) / self.std, -self.norm_clip, self.norm_clip)

    def copy(self) -> "Normalizer":
        twin = Normalizer(self.size, self.eps, self.obs_clip, self.norm_clip, self.enabled)
        twin.count, twin.mean, twin.m2 = self.count, self.mean.copy(), self.m2.copy()
        return twin


# --- bootstrap targets ---------------------------------------------------------

def bootstrap_target(reward, done, q_next: Sequence[np.ndarray], gamma: float,
                     clipped_double_q: bool, entropy=0.0) -> np.ndarray:
    """``r + gamma (1 - d) (Q' - entropy)``.

    ``Q'`` is the minimum over the target critics when ``clipped_double_q``
    is set and the first target critic otherwise.  ``entropy`` is
    ``alpha * log pi`` for SAC and zero for DDPG/TD3.
    """
    reward = np.asarray(reward, dtype=np.float64)
    done = np.asarray(done, dtype=np.float64)
    q = np.asarray(q_next[0], dtype=np.float64)
    if clipped_double_q:
        q = np.minimum(q, np.asarray(q_next[1], dtype=np.float64))
    return reward + gamma * (1.0 - done) * (q - entropy)


def squashed_gaussian(mu, log_std, noise):
    """Sample ``tanh(mu + std * noise)`` and its log-density."""
    log_std = np.clip(log_std, LOG_STD_MIN, LOG_STD_MAX)
    u = mu + np.exp(log_std) * noise
    a = np.tanh(u)
    # log(1 - tanh(u)^2) written to stay finite for large |u|
    log_det = 2.0 * (math.log(2.0) - u - np.logaddexp(0.0, -2.0 * u))
    logp = np.sum(-0.5 * noise ** 2 - log_std - _HALF_LOG_2PI - log_det, axis=-1)
    return a, logp


class Policy:
    """Read-only actor snapshot handed to rollout workers."""

    def __init__(self, algorithm: str, actor: MLP, o_norm: Normalizer, g_norm: Normalizer,
                 action_dim: int, config: AgentConfig):
        self.algorithm = algorithm
        self.actor = actor
        self.o_norm = o_norm
        self.g_norm = g_norm
        self.action_dim = action_dim
        self.config = config

    def features(self, obs, goal) -> np.ndarray:
        return np.concatenate([self.o_norm.normalize(obs), self.g_norm.normalize(goal)], axis=-1)

    def act(self, obs, goal, explore: bool, rng: np.random.Generator) -> np.ndarray:
        """Batched action selection; ``obs``/``goal`` may be 1-D or 2-D."""
        single = np.ndim(obs) == 1
        x = np.atleast_2d(self.features(obs, goal))
        out = np.asarray(self.actor.forward(x), dtype=np.float64)
        n, dim = len(x), self.action_dim
        cfg = self.config
        if self.algorithm == "sac":
            mu, log_std = out[:, :dim], out[:, dim:]
            if explore:
                a, _ = squashed_gaussian(mu, log_std, rng.standard_normal((n, dim)))
            else:
                a = np.tanh(mu)
        else:
            a = out
            if explore:
                a = a + cfg.noise_scale * rng.standard_normal((n, dim))
                a = np.clip(a, -1.0, 1.0)
                uniform = rng.uniform(-1.0, 1.0, (n, dim))
                pick = rng.random(n) < cfg.random_action_prob
                a = np.where(pick[:, None], uniform, a)
        a = np.clip(a, -1.0, 1.0)
        return a[0] if single else a


class Agent:
    """Off-policy actor-critic learner.

    Critics see ``[obs, goal, action]`` and actors ``[obs, goal]``, both
    after normalisation.  DDPG/TD3 actors end in tanh; the SAC actor
    outputs the mean and log-std of a tanh-squashed Gaussian.
    """

    def __init__(self, obs_dim: int, goal_dim: int, action_dim: int,
                 config: Optional[AgentConfig] = None, seed: int = 0):
        self.config = cfg = config or AgentConfig()
        self.obs_dim, self.goal_dim, self.action_dim = obs_dim, goal_dim, action_dim
        self.rng = np.random.default_rng(seed)
        dtype = np.dtype(cfg.dtype)
        init_rng = np.random.default_rng(seed)
        x_dim = obs_dim + goal_dim
        hidden = list(cfg.hidden_sizes)

        if cfg.algorithm == "sac":
            self.actor = MLP([x_dim] + hidden + [2 * action_dim], "linear", init_rng, dtype)
            self.actor_target = None
        else:
            self.actor = MLP([x_dim] + hidden + [action_dim], "tanh", init_rng, dtype)
            self.actor_target = self.actor.copy()
        self.critics = [MLP([x_dim + action_dim] + hidden + [1], "linear", init_rng, dtype)
                        for _ in range(cfg.n_critics)]
        self.critic_targets = [c.copy() for c in self.critics]
        self.actor_opt = Adam(self.actor.params, lr=cfg.lr_actor)
        self.critic_opts = [Adam(c.params, lr=cfg.lr_critic) for c in self.critics]
        self.o_norm = Normalizer(obs_dim, obs_clip=cfg.obs_clip, norm_clip=cfg.norm_clip,
                                 enabled=cfg.normalize)
        self.g_norm = Normalizer(goal_dim, obs_clip=cfg.obs_clip, norm_clip=cfg.norm_clip,
                                 enabled=cfg.normalize)
        self.n_critic_updates = 0
        self.n_actor_updates = 0

    @property
    def algorithm(self) -> str:
        return self.config.algorithm

    @property
    def dtype(self):
        return self.actor.dtype

    # --- acting -------------------------------------------------------------

    def policy(self, snapshot: bool = False) -> Policy:
        actor = self.actor.copy() if snapshot else self.actor
        o_norm = self.o_norm.copy() if snapshot else self.o_norm
        g_norm = self.g_norm.copy() if snapshot else self.g_norm
        return Policy(self.algorithm, actor, o_norm, g_norm, self.action_dim, self.config)

    def select_action(self, obs, explore: bool = False,
                      rng: Optional[np.random.Generator] = None) -> np.ndarray:
        """Action for a :class:`GoalObservation` (or anything with
        ``observation`` and ``desired_goal``)."""
        rng = self.rng if rng is None else rng
        return self.policy().act(obs.observation, obs.desired_goal, explore, rng)

    def observe(self, obs, goals) -> None:
        """Feed rollout observations and goals into the normalisers."""
        self.o_norm.observe(obs)
        self.g_norm.observe(goals)

    # --- learning -----------------------------------------------------------

    def _inputs(self, batch: Dict[str, np.ndarray]):
        g = self.g_norm.normalize(batch["desired_goal"])
        x = np.concatenate([self.o_norm.normalize(batch["obs"]), g], axis=-1)
        x2 = np.concatenate([self.o_norm.normalize(batch["next_obs"]), g], axis=-1)
        return x.astype(self.dtype), x2.astype(self.dtype)

    def _q(self, critic: MLP, x, a) -> np.ndarray:
        return critic.forward(np.concatenate([x, a.astype(x.dtype)], axis=-1))[:, 0]

    def _sac_sample(self, x, rng):
        out = self.actor.forward(x)
        n = self.action_dim
        mu, log_std = out[:, :n], out[:, n:]
        noise = rng.standard_normal(mu.shape).astype(out.dtype)
        a, logp = squashed_gaussian(mu, log_std, noise)
        return a, logp, mu, log_std, noise

    def compute_target(self, batch: Dict[str, np.ndarray], x2=None) -> np.ndarray:
        """Bootstrap target ``y`` for every row of ``batch``."""
        cfg = self.config
        if x2 is None:
            _, x2 = self._inputs(batch)
        reward, done = batch["reward"], batch["done"]
        entropy = 0.0
        if cfg.algorithm == "sac":
            a2, logp, *_ = self._sac_sample(x2, self.rng)
            entropy = cfg.alpha * np.asarray(logp, dtype=np.float64)
        else:
            a2 = self.actor_target.forward(x2)
            if cfg.algorithm == "td3":
                eps = cfg.policy_noise * self.rng.standard_normal(a2.shape)
                eps = np.clip(eps, -cfg.noise_clip, cfg.noise_clip)
                a2 = np.clip(a2 + eps, -1.0, 1.0)
        q_next = [self._q(c, x2, a2) for c in self.critic_targets]
        return bootstrap_target(reward, done, q_next, cfg.gamma, cfg.clipped_double_q, entropy)

    def update(self, batch: Dict[str, np.ndarray]) -> Dict[str, float]:
        """One gradient step on the critics and, when due, the actor and
        the target networks.  Returns loss diagnostics."""
        cfg = self.config
        x, x2 = self._inputs(batch)
        y = self.compute_target(batch, x2).astype(self.dtype)
        B = len(y)
        act = batch["action"].astype(self.dtype)
        info = {}

        for i, (critic, opt) in enumerate(zip(self.critics, self.critic_opts)):
            q = self._q(critic, x, act)
            err = q - y
            loss = float(np.mean(err.astype(np.float64) ** 2))
            if not math.isfinite(loss):
                raise NonFiniteError(f"critic {i + 1} loss is {loss} after "
                                     f"{self.n_critic_updates} updates")
            grads, _ = critic.backward((2.0 / B) * err[:, None])
            opt.step(grads)
            info[f"critic{i + 1}_loss"] = loss
        self.n_critic_updates += 1

        if self.n_critic_updates % cfg.actor_delay == 0:
            info["actor_loss"] = self._update_actor(x)
            self.n_actor_updates += 1
            for t, c in zip(self.critic_targets, self.critics):
                polyak_update(t, c, cfg.polyak)
            if self.actor_target is not None:
                polyak_update(self.actor_target, self.actor, cfg.polyak)
        return info

    def _critic_action_grad(self, x, a):
        """Per-row ``dQ/da`` of the critic the actor maximises: Q1 for
        DDPG/TD3, the row-wise minimum critic for SAC."""
        n = self.action_dim
        if self.algorithm == "sac" and len(self.critics) == 2:
            q1 = self._q(self.critics[0], x, a)
            _, d1 = self.critics[0].backward(np.ones((len(x), 1), x.dtype), param_grads=False)
            q2 = self._q(self.critics[1], x, a)
            _, d2 = self.critics[1].backward(np.ones((len(x), 1), x.dtype), param_grads=False)
            first = (q1 <= q2)[:, None]
            return np.minimum(q1, q2), np.where(first, d1[:, -n:], d2[:, -n:])
        q = self._q(self.critics[0], x, a)
        _, d = self.critics[0].backward(np.ones((len(x), 1), x.dtype), param_grads=False)
        return q, d[:, -n:]

    def _update_actor(self, x) -> float:
        cfg = self.config
        B, n = len(x), self.action_dim
        if self.algorithm == "sac":
            a, logp, mu, log_std, noise = self._sac_sample(x, self.rng)
            a = a.astype(x.dtype)
            q, dq_da = self._critic_action_grad(x, a)
            loss = float(np.mean(cfg.alpha * logp - q))
            g_u = -dq_da * (1.0 - a * a) / B + (2.0 * cfg.alpha / B) * a
            std = np.exp(np.clip(log_std, LOG_STD_MIN, LOG_STD_MAX))
            g_log_std = g_u * std * noise - cfg.alpha / B
            g_log_std = g_log_std * ((log_std > LOG_STD_MIN) & (log_std < LOG_STD_MAX))
            grad_out = np.concatenate([g_u, g_log_std], axis=-1)
        else:
            a = self.actor.forward(x)
            q, dq_da = self._critic_action_grad(x, a)
            loss = float(-np.mean(q) + cfg.action_l2 * np.mean(a * a))
            grad_out = -dq_da / B + (2.0 * cfg.action_l2 / (B * n)) * a
        if not math.isfinite(loss):
            raise NonFiniteError(f"actor loss is {loss} after {self.n_actor_updates} updates")
        # the actor's cached forward pass is still the one above
        grads, _ = self.actor.backward(grad_out.astype(x.dtype))
        self.actor_opt.step(grads)
        return loss

    # --- persistence --------------------------------------------------------

    def networks(self) -> Dict[str, MLP]:
        nets = {"actor": self.actor}
        if self.actor_target is not None:
            nets["actor_target"] = self.actor_target
        for i, (c, t) in enumerate(zip(self.critics, self.critic_targets)):
            nets[f"critic{i + 1}"] = c
            nets[f"critic{i + 1}_target"] = t
        return nets

    def save(self, path, extra: Optional[dict] = None) -> None:
        arrays = {}
        for name, net in self.networks().items():
            for j, p in enumerate(net.params):
                kind = "W" if j % 2 == 0 else "b"
                arrays[f"{name}/{kind}{j // 2}"] = p
        for name, norm in (("o_norm", self.o_norm), ("g_norm", self.g_norm)):
            arrays[f"{name}/mean"] = norm.mean
            arrays[f"{name}/m2"] = norm.m2
        meta = {
            "algorithm": self.algorithm,
            "config": self.config.to_dict(),
            "dims": [self.obs_dim, self.goal_dim, self.action_dim],
            "n_critics": len(self.critics),
            "normalizer_count": [self.o_norm.count, self.g_norm.count],
            "updates": [self.n_critic_updates, self.n_actor_updates],
        }
        if extra:
            meta["extra"] = extra
        save_arrays(path, arrays, meta)

    @classmethod
    def load(cls, path) -> "Agent":
        arrays, meta = load_arrays(path)
        cfg = dict(meta["config"])
        cfg["hidden_sizes"] = tuple(cfg["hidden_sizes"])
        agent = cls(*meta["dims"], config=AgentConfig(**cfg))
        for name, net in agent.networks().items():
            for j in range(len(net.params)):
                kind = "W" if j % 2 == 0 else "b"
                net.params[j][...] = arrays[f"{name}/{kind}{j // 2}"]
        for name, norm, count in (("o_norm", agent.o_norm, meta["normalizer_count"][0]),
                                  ("g_norm", agent.g_norm, meta["normalizer_count"][1])):
            norm.mean = arrays[f"{name}/mean"].copy()
            norm.m2 = arrays[f"{name}/m2"].copy()
            norm.count = count
        agent.n_critic_updates, agent.n_actor_updates = meta["updates"]
        return agent


def td3_target(batch, agent: Agent) -> np.ndarray:
    if agent.algorithm != "td3":
        raise ValueError("td3_target needs a TD3 agent")
    return agent.compute_target(batch)


def sac_target(batch, agent: Agent) -> np.ndarray:
    if agent.algorithm != "sac":
        raise ValueError("sac_target needs a SAC agent")
    return agent.compute_target(batch)


def ddpg_target(batch, agent: Agent) -> np.ndarray:
    if agent.algorithm != "ddpg":
        raise ValueError("ddpg_target needs a DDPG agent")
    return agent.compute_target(batch)
