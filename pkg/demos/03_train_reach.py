"""
Learning to reach with DDPG and HER
===================================

Eight lockstep workers share one replay buffer; after each worker episode
the learner takes 40 gradient steps.  Reach is usually solved well within
50 000 environment steps.  Expect a few minutes per evaluation on one core.
"""
import logging

from pandalite import RunConfig, train

logging.basicConfig(level=logging.INFO, format="%(message)s")

result = train(RunConfig(env="PandaReach-v1", algo="ddpg", total_steps=50_000, seed=0,
                         out_dir="runs/reach-ddpg-0", stop_at=0.9))
for m in result.metrics:
    print(f"{m.total_env_steps:6d} steps  success {m.success_rate:.3f}")
