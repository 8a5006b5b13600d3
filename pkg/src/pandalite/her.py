"""Ring replay buffer with hindsight relabelling (future strategy).

Relabelled copies are written at store time: for every transition ``t`` of
an episode, ``k`` extra copies get the achieved goal of a step
``t' ~ U{t, ..., T-1}`` as desired goal and a recomputed reward.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Sequence

import numpy as np

FIELDS = ("obs", "action", "reward", "next_obs", "done", "achieved_goal",
          "next_achieved_goal", "desired_goal")


class BufferNotReadyError(RuntimeError):
    """Fewer stored transitions than the requested batch size."""


@dataclass
class Transition:
    obs: np.ndarray
    action: np.ndarray
    reward: float
    next_obs: np.ndarray
    done: bool
    achieved_goal: np.ndarray
    next_achieved_goal: np.ndarray
    desired_goal: np.ndarray


def stack_episode(episode: Sequence[Transition]) -> Dict[str, np.ndarray]:
    if len(episode) == 0:
        raise ValueError("cannot store an empty episode")
    out = {name: np.array([getattr(tr, name) for tr in episode], dtype=np.float64)
           for name in FIELDS}
    out["reward"] = out["reward"].reshape(-1)
    out["done"] = out["done"].reshape(-1)
    return out


def future_indices(T: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """``(T, k)`` relabel indices, row ``t`` drawn uniformly from ``t..T-1``."""
    t = np.arange(T)[:, None]
    return t + np.floor(rng.random((T, k)) * (T - t)).astype(np.int64)


class ReplayBuffer:
    """FIFO ring of transitions.

    ``reward_fn(achieved, desired)`` must be the task's vectorised reward.
    ``source_t`` records, per stored row, the step whose achieved goal was
    used as desired goal (-1 for original transitions); ``episode_id`` and
    ``step`` locate the row inside its episode.
    """

    def __init__(self, reward_fn: Callable, capacity: int = 10**6, k: int = 4,
                 her_enabled: bool = True, rng: Optional[np.random.Generator] = None):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.reward_fn = reward_fn
        self.capacity = int(capacity)
        self.k = int(k)
        self.her_enabled = her_enabled
        self.rng = np.random.default_rng(0) if rng is None else rng
        self.size = 0
        self.ptr = 0
        self.n_episodes = 0
        self.n_inserted = 0
        self.data: Optional[Dict[str, np.ndarray]] = None
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return self.size

    def _allocate(self, ep: Dict[str, np.ndarray]) -> None:
        self.data = {}
        for name, arr in ep.items():
            self.data[name] = np.zeros((self.capacity,) + arr.shape[1:], dtype=arr.dtype)
        for name in ("episode_id", "step", "source_t"):
            self.data[name] = np.zeros(self.capacity, dtype=np.int64)

    def _write(self, rows: Dict[str, np.ndarray]) -> None:
        n = len(rows["reward"])
        if n > self.capacity:
            rows = {k: v[-self.capacity:] for k, v in rows.items()}
            n = self.capacity
        idx = (self.ptr + np.arange(n)) % self.capacity
        for name, arr in rows.items():
            self.data[name][idx] = arr
        self.ptr = int((self.ptr + n) % self.capacity)
        self.size = min(self.size + n, self.capacity)
        self.n_inserted += n

    def store_episode(self, episode, k: Optional[int] = None,
                      her_enabled: Optional[bool] = None) -> int:
        """Store one complete episode and its relabelled copies.

        ``episode`` is a list of :class:`Transition` or a dict of stacked
        arrays keyed like :data:`FIELDS`.  Returns the number of rows added.
        """
        k = self.k if k is None else k
        her_enabled = self.her_enabled if her_enabled is None else her_enabled
        ep = episode if isinstance(episode, dict) else stack_episode(episode)
        T = len(ep["reward"])
        if T == 0:
            raise ValueError("cannot store an empty episode")
        ep = {name: np.asarray(ep[name], dtype=np.float64) for name in FIELDS}
        ep["reward"] = np.asarray(self.reward_fn(ep["next_achieved_goal"], ep["desired_goal"]),
                                  dtype=np.float64).reshape(T)
        steps = np.arange(T)
        rows = dict(ep, step=steps, source_t=np.full(T, -1))

        if her_enabled and k > 0:
            fut = future_indices(T, k, self.rng).reshape(-1)
            src = np.repeat(steps, k)
            rel = {name: ep[name][src] for name in FIELDS}
            rel["desired_goal"] = ep["next_achieved_goal"][fut]
            rel["reward"] = np.asarray(
                self.reward_fn(rel["next_achieved_goal"], rel["desired_goal"]),
                dtype=np.float64).reshape(-1)
            rel["step"] = src
            rel["source_t"] = fut
            rows = {name: np.concatenate([rows[name], rel[name]]) for name in rows}

        rows["episode_id"] = np.full(len(rows["reward"]), self.n_episodes)
        with self._lock:
            if self.data is None:
                self._allocate(rows)
            self._write(rows)
            self.n_episodes += 1
        return len(rows["reward"])

    def sample_batch(self, n: int = 256, rng: Optional[np.random.Generator] = None
                     ) -> Dict[str, np.ndarray]:
        """Uniform draws with replacement over the stored transitions."""
        rng = self.rng if rng is None else rng
        with self._lock:
            if self.size < n:
                raise BufferNotReadyError(f"buffer holds {self.size} transitions, need {n}")
            idx = rng.integers(0, self.size, size=n)
            return {name: arr[idx] for name, arr in self.data.items()}

    def transitions(self) -> Dict[str, np.ndarray]:
        """Every stored row, oldest first (copies)."""
        with self._lock:
            if self.data is None:
                return {}
            if self.size < self.capacity:
                order = np.arange(self.size)
            else:
                order = (self.ptr + np.arange(self.capacity)) % self.capacity
            return {name: arr[order] for name, arr in self.data.items()}


def store_episode(buffer: ReplayBuffer, episode, k: int = 4, her_enabled: bool = True) -> ReplayBuffer:
    buffer.store_episode(episode, k=k, her_enabled=her_enabled)
    return buffer


def sample_batch(buffer: ReplayBuffer, n: int = 256, rng: Optional[np.random.Generator] = None):
    return buffer.sample_batch(n, rng)
