"""
Hindsight relabelling on a failed push
======================================

A random policy almost never pushes the cube onto the goal.  Storing the
episode with the "future" strategy adds four relabelled copies of every
step whose goals were actually reached later on.
"""
import numpy as np

from pandalite import make
from pandalite.her import ReplayBuffer

env = make("PandaPush-v1")
rng = np.random.default_rng(0)
o = env.reset(seed=0)
episode = {k: [] for k in ("obs", "action", "reward", "next_obs", "done",
                           "achieved_goal", "next_achieved_goal", "desired_goal")}
for t in range(env.episode_length):
    a = rng.uniform(-1, 1, 3)
    r = env.step(a)
    for key, value in (("obs", o.observation), ("action", a), ("reward", r.reward),
                       ("next_obs", r.obs.observation), ("done", 0.0),
                       ("achieved_goal", o.achieved_goal),
                       ("next_achieved_goal", r.obs.achieved_goal),
                       ("desired_goal", o.desired_goal)):
        episode[key].append(value)
    o = r.obs
episode = {k: np.array(v) for k, v in episode.items()}
print("reward collected with the real goal:", episode["reward"].sum())

buffer = ReplayBuffer(env.compute_reward, k=4, rng=np.random.default_rng(1))
print("rows stored:", buffer.store_episode(episode))

rows = buffer.transitions()
relabelled = rows["source_t"] >= 0
print("relabelled rows:", relabelled.sum())
print("fraction of relabelled rows with reward 0:", (rows["reward"][relabelled] == 0).mean())

# the cube rarely moves under random actions, so most relabelled goals sit
# where it already is: the learner first sees what "success" looks like
# before it can produce it
moved = np.abs(episode["next_achieved_goal"] - episode["achieved_goal"]).max()
print(f"largest cube displacement in one step: {moved:.4f} m")
