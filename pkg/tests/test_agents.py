import numpy as np
import pytest

from pandalite.agents import (Agent, AgentConfig, Normalizer, bootstrap_target, ddpg_target,
                              sac_target, squashed_gaussian, td3_target)
from pandalite.nn import read_manifest

OBS, GOAL, ACT = 6, 3, 3


def make_agent(algo, **kw):
    kw.setdefault("dtype", "float64")
    kw.setdefault("hidden_sizes", (16, 16))
    return Agent(OBS, GOAL, ACT, AgentConfig(algorithm=algo, **kw), seed=0)


def set_constant(net, value):
    # zero last layer so the network outputs its bias everywhere
    net.params[-2][...] = 0.0
    net.params[-1][...] = value


def batch_of(n=4, reward=-1.0, done=0.0, seed=0):
    rng = np.random.default_rng(seed)
    return {
        "obs": rng.normal(size=(n, OBS)),
        "next_obs": rng.normal(size=(n, OBS)),
        "desired_goal": rng.normal(size=(n, GOAL)),
        "action": rng.uniform(-1, 1, (n, ACT)),
        "reward": np.full(n, reward),
        "done": np.full(n, done),
    }


def with_targets(agent, *values):
    for net, v in zip(agent.critic_targets, values):
        set_constant(net, v)
    return agent


# --- bootstrap targets ---------------------------------------------------------

def test_td3_target_min_of_critics():
    agent = with_targets(make_agent("td3"), -5.0, -4.0)
    np.testing.assert_allclose(td3_target(batch_of(), agent), -5.9, rtol=0, atol=1e-12)


def test_td3_target_ablated_uses_first_critic():
    agent = with_targets(make_agent("td3", clipped_double_q=False), -4.0)
    assert len(agent.critics) == 1
    np.testing.assert_allclose(td3_target(batch_of(), agent), -4.92, rtol=0, atol=1e-12)
    # the same numbers through the bare formula, second critic ignored
    y = bootstrap_target([-1.0], [0.0], [np.array([-4.0]), np.array([-10.0])], 0.98, False)
    np.testing.assert_allclose(y, -4.92, rtol=0, atol=1e-12)


def test_sac_target_entropy_term(monkeypatch):
    agent = with_targets(make_agent("sac"), -2.0, -1.5)
    monkeypatch.setattr(agent, "_sac_sample",
                        lambda x, rng: (np.zeros((len(x), ACT)), np.full(len(x), -1.0), None, None, None))
    np.testing.assert_allclose(sac_target(batch_of(), agent), -2.764, rtol=0, atol=1e-12)


def test_sac_target_alpha_zero_is_plain_min():
    agent = with_targets(make_agent("sac", alpha=0.0), -2.0, -3.0)
    np.testing.assert_allclose(sac_target(batch_of(), agent), -1 + 0.98 * -3.0, rtol=0, atol=1e-12)


def test_ddpg_target_examples():
    agent = with_targets(make_agent("ddpg"), -10.0)
    np.testing.assert_allclose(ddpg_target(batch_of(), agent), -10.8, rtol=0, atol=1e-12)
    with_targets(agent, 0.0)
    np.testing.assert_allclose(ddpg_target(batch_of(reward=0.0), agent), 0.0, atol=1e-12)


@pytest.mark.parametrize("algo", ["ddpg", "td3", "sac"])
def test_terminal_masking(algo):
    agent = make_agent(algo)
    y = agent.compute_target(batch_of(reward=-1.0, done=1.0))
    np.testing.assert_array_equal(y, -1.0)


def test_ddpg_equals_ablated_td3_without_smoothing():
    td3 = make_agent("td3", clipped_double_q=False, policy_noise=0.0)
    ddpg = make_agent("ddpg")
    # identical seeds give identical initial networks
    b = batch_of()
    np.testing.assert_array_equal(ddpg_target(b, ddpg), td3_target(b, td3))


def test_clipped_target_never_exceeds_ablated():
    rng = np.random.default_rng(1)
    q1, q2 = rng.normal(size=100), rng.normal(size=100)
    r, d = -np.ones(100), np.zeros(100)
    assert np.all(bootstrap_target(r, d, [q1, q2], 0.98, True)
                  <= bootstrap_target(r, d, [q1, q2], 0.98, False))


def test_wrong_algorithm_rejected():
    with pytest.raises(ValueError):
        td3_target(batch_of(), make_agent("ddpg"))


# --- ablation switch -------------------------------------------------------------

@pytest.mark.parametrize("algo", ["td3", "sac"])
def test_ablation_removes_second_critic_from_checkpoint(tmp_path, algo):
    full, ablated = make_agent(algo), make_agent(algo, clipped_double_q=False)
    full.save(tmp_path / "full.plnn")
    ablated.save(tmp_path / "ablated.plnn")
    names_full = {e["name"] for e in read_manifest(tmp_path / "full.plnn")["arrays"]}
    names_abl = {e["name"] for e in read_manifest(tmp_path / "ablated.plnn")["arrays"]}
    assert any(n.startswith("critic2/") for n in names_full)
    assert not any(n.startswith("critic2") for n in names_abl)
    assert read_manifest(tmp_path / "ablated.plnn")["meta"]["n_critics"] == 1


def test_ddpg_rejects_clipped_double_q():
    with pytest.raises(ValueError):
        AgentConfig(algorithm="ddpg", clipped_double_q=True)
    assert AgentConfig(algorithm="ddpg").n_critics == 1
    assert AgentConfig(algorithm="td3").n_critics == 2


def test_checkpoint_roundtrip(tmp_path):
    agent = make_agent("td3")
    agent.observe(np.ones((5, OBS)), np.zeros((5, GOAL)))
    agent.update(batch_of(n=8))
    agent.save(tmp_path / "a.plnn", extra={"env": "PandaReach-v1"})
    twin = Agent.load(tmp_path / "a.plnn")
    for name, net in agent.networks().items():
        np.testing.assert_array_equal(twin.networks()[name].flat, net.flat)
    np.testing.assert_array_equal(twin.o_norm.mean, agent.o_norm.mean)
    assert twin.o_norm.count == agent.o_norm.count
    assert twin.n_critic_updates == 1


# --- acting ------------------------------------------------------------------------

class Obs:
    def __init__(self, o, g):
        self.observation, self.desired_goal = o, g


@pytest.mark.parametrize("algo", ["ddpg", "td3", "sac"])
def test_actions_in_bounds(algo):
    agent = make_agent(algo)
    set_constant(agent.actor, 30.0)
    rng = np.random.default_rng(0)
    o = Obs(rng.normal(size=(500, OBS)) * 100, rng.normal(size=(500, GOAL)))
    for explore in (False, True):
        a = agent.policy().act(o.observation, o.desired_goal, explore, rng)
        assert a.shape == (500, ACT)
        assert np.all(np.abs(a) <= 1.0)


def test_random_probability_one_is_uniform():
    agent = make_agent("ddpg", random_action_prob=1.0)
    rng = np.random.default_rng(2)
    a = agent.policy().act(np.zeros((10_000, OBS)), np.zeros((10_000, GOAL)), True, rng)
    assert a.min() < -0.99 and a.max() > 0.99
    assert abs(a.mean()) < 0.02
    assert a.std() == pytest.approx(1 / np.sqrt(3), abs=0.01)


def test_noiseless_exploration_equals_greedy():
    agent = make_agent("td3", random_action_prob=0.0, noise_scale=0.0)
    o = Obs(np.arange(OBS, dtype=float), np.ones(GOAL))
    greedy = agent.select_action(o, explore=False)
    noisy = agent.select_action(o, explore=True, rng=np.random.default_rng(3))
    np.testing.assert_array_equal(greedy, noisy)


def test_sac_greedy_is_tanh_mean():
    agent = make_agent("sac")
    agent.actor.params[-2][...] = 0.0
    agent.actor.params[-1][...] = [0.5, -0.2, 3.0, 0.0, 0.0, 0.0]
    a = agent.select_action(Obs(np.zeros(OBS), np.zeros(GOAL)))
    np.testing.assert_allclose(a, np.tanh([0.5, -0.2, 3.0]))


def test_squashed_gaussian_log_density():
    # compare against a change of variables done by hand
    mu, log_std, noise = np.array([[0.3]]), np.array([[-0.5]]), np.array([[0.7]])
    a, logp = squashed_gaussian(mu, log_std, noise)
    u = 0.3 + np.exp(-0.5) * 0.7
    expected = -0.5 * 0.7 ** 2 - (-0.5) - 0.5 * np.log(2 * np.pi) - np.log(1 - np.tanh(u) ** 2)
    assert a[0, 0] == pytest.approx(np.tanh(u), abs=1e-15)
    assert logp[0] == pytest.approx(expected, abs=1e-12)


# --- updates -----------------------------------------------------------------------

def test_td3_delays_actor_updates():
    agent = make_agent("td3")
    b = batch_of(n=16)
    for _ in range(10):
        agent.update(b)
    assert agent.n_critic_updates == 10
    assert agent.n_actor_updates == 5


def test_critic_loss_zero_at_target():
    agent = make_agent("ddpg")
    set_constant(agent.critics[0], -1.0)
    with_targets(agent, 0.0)
    info = agent.update(batch_of())
    assert info["critic1_loss"] == 0.0


def test_l2_penalty_vanishes_for_zero_action():
    agent = make_agent("ddpg")
    set_constant(agent.actor, 0.0)
    set_constant(agent.critics[0], -2.0)
    # targets chosen so y = Q and the critic does not move before the actor step
    with_targets(agent, -1.0 / 0.98)
    info = agent.update(batch_of())
    assert info["critic1_loss"] == pytest.approx(0.0, abs=1e-24)
    assert info["actor_loss"] == pytest.approx(2.0, abs=1e-12)


@pytest.mark.parametrize("algo", ["ddpg", "sac"])
def test_target_drift_is_one_minus_tau(algo):
    agent = make_agent(algo)
    old = {n: agent.networks()[n].flat.copy() for n in agent.networks() if n.endswith("target")}
    agent.update(batch_of(n=16))
    for name, before in old.items():
        online = agent.networks()[name[:-len("_target")]].flat
        moved = agent.networks()[name].flat - before
        np.testing.assert_allclose(moved, 0.05 * (online - before), rtol=0, atol=1e-13)


def test_update_is_deterministic():
    a, b = make_agent("sac"), make_agent("sac")
    for _ in range(3):
        a.update(batch_of(n=32))
        b.update(batch_of(n=32))
    assert a.actor.flat.tobytes() == b.actor.flat.tobytes()


def test_float32_agent_trains():
    agent = make_agent("td3", dtype="float32")
    for _ in range(4):
        info = agent.update(batch_of(n=32))
    assert agent.actor.flat.dtype == np.float32
    assert np.isfinite(info["critic1_loss"])


# --- normaliser --------------------------------------------------------------------

def test_normalizer_raw_clip():
    n = Normalizer(1)
    n.observe(np.array([[0.0], [400.0]]))
    # both samples clip to [0, 200]: mean 100, std 100
    assert n.mean[0] == 100.0
    assert n.normalize(np.array([1000.0]))[0] == pytest.approx(1.0)


def test_normalizer_identity_and_clip():
    n = Normalizer(2)
    n.count, n.mean, n.m2 = 10, np.zeros(2), np.full(2, 10.0)
    np.testing.assert_allclose(n.normalize([0.5, -3.0]), [0.5, -3.0])
    np.testing.assert_allclose(n.normalize([7.0, -9.0]), [5.0, -5.0])


def test_normalizer_variance_floor():
    n = Normalizer(3)
    n.observe(np.full((100, 3), 0.25))
    assert np.all(n.std == pytest.approx(1e-2))
    out = n.normalize(np.full(3, 0.26))
    assert np.all(np.isfinite(out))
    np.testing.assert_allclose(out, 1.0)


def test_normalizer_matches_batch_statistics():
    rng = np.random.default_rng(5)
    data = rng.normal(2.0, 3.0, size=(1000, 4))
    n = Normalizer(4)
    for chunk in np.array_split(data, 7):
        n.observe(chunk)
    np.testing.assert_allclose(n.mean, data.mean(axis=0), rtol=1e-12)
    np.testing.assert_allclose(n.std, data.std(axis=0), rtol=1e-12)
