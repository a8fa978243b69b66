"""Agent updates: targets, descent behaviour, variant dispatch, checkpoints."""

import numpy as np
import pytest

from acssil import nn
from acssil.agent import (
    Agent,
    AgentConfig,
    actor_update,
    compute_critic_target,
    critic_update,
    load_agent,
    save_agent,
    select_action,
    std_bonus,
    std_shaped_reward,
    train_step,
)
from acssil.buffers import ExpertBuffer, ReplayBuffer, Transition, TransitionBatch
from acssil.envs import (
    env_reset,
    env_spec,
    env_step,
    flat_state,
    generate_demos,
    goal_reward_fn,
    state_dim,
)
from acssil.errors import ConfigError, NumericError, ShapeError
from acssil.ssil import pseudo_action_batch

SPEC = env_spec("pick_place2d")
SD, AD, GD = state_dim(SPEC), SPEC.action_dim, SPEC.goal_dim


def make_cfg(**kw):
    kw.setdefault("hidden_dims", (16, 16))
    kw.setdefault("batch_size", 8)
    return AgentConfig(SD, AD, **kw)


def make_expert(seed=0, n_eps=10, with_actions=False, tmp=None):
    path = (tmp or "/tmp") / f"demo_{seed}_{with_actions}.txt" if tmp else None
    rng = np.random.default_rng(seed)
    eps, acts = [], []
    for _ in range(n_eps):
        n = int(rng.integers(3, 8))
        eps.append(rng.uniform(0, 1, (n, SD)))
        acts.append(rng.uniform(-1, 1, (n - 1, AD)))
    return ExpertBuffer.from_episodes(eps, SD, actions=acts if with_actions else None)


def fill_replay(seed, n=400, capacity=5000):
    buf = ReplayBuffer(capacity, SD, AD, GD, goal_reward_fn(SPEC))
    rng = np.random.default_rng(seed)
    eid = 0
    while buf.size < n:
        s = env_reset(SPEC, int(rng.integers(2**31)))
        done, step = False, 0
        while not done:
            a = rng.uniform(-1, 1, AD)
            s2, r, done, succ = env_step(s, a)
            buf.push(Transition(flat_state(s), a, r, flat_state(s2), succ, eid, step))
            s, step = s2, step + 1
        eid += 1
    return buf


def random_batch(seed, b=8, all_done=False):
    rng = np.random.default_rng(seed)
    return TransitionBatch(
        states=rng.uniform(0, 1, (b, SD)),
        actions=rng.uniform(-1, 1, (b, AD)),
        rewards=np.where(rng.random(b) < 0.2, 0.0, -1.0),
        next_states=rng.uniform(0, 1, (b, SD)),
        dones=np.ones(b, bool) if all_done else rng.random(b) < 0.2,
    )


def params_snapshot(params):
    return [a.copy() for a in params.arrays()]


def params_equal(params, snapshot):
    return all(np.array_equal(a, b) for a, b in zip(params.arrays(), snapshot))


class TestConfig:
    def test_defaults(self):
        cfg = AgentConfig(SD, AD)
        assert cfg.gamma == 0.99 and cfg.tau == 0.005
        assert cfg.alpha == 5.0 and cfg.k == 5
        assert cfg.actor_lr == 1e-3 and cfg.critic_lr == 1e-3

    def test_invalid(self):
        for kw in (dict(gamma=1.0), dict(gamma=-0.1), dict(tau=0.0),
                   dict(tau=1.5), dict(alpha=-1.0), dict(variant="ddpg"),
                   dict(batch_size=0), dict(k=0), dict(actor_lr=0.0),
                   dict(update_to_step=0.0)):
            with pytest.raises(ConfigError):
                AgentConfig(SD, AD, **kw)


class TestAgentInit:
    def test_targets_start_equal_but_independent(self):
        agent = Agent(make_cfg(), seed=4)
        assert params_equal(agent.target_actor, params_snapshot(agent.actor))
        assert params_equal(agent.target_critic, params_snapshot(agent.critic))
        agent.actor.weights[0][0, 0] += 1.0
        assert not params_equal(agent.target_actor, params_snapshot(agent.actor))

    def test_actor_bounded(self):
        agent = Agent(make_cfg(), seed=4)
        x = np.random.default_rng(0).uniform(-5, 5, (32, SD))
        y, _ = nn.mlp_forward(agent.actor, x)
        assert np.all(np.abs(y) < 1.0)


class TestSelectAction:
    def test_deterministic_without_noise(self):
        agent = Agent(make_cfg(), seed=1)
        s = np.linspace(0, 1, SD)
        assert np.array_equal(select_action(agent, s, False),
                              select_action(agent, s, False))

    def test_zero_actor_outputs_squashed_zero(self):
        agent = Agent(make_cfg(), seed=1)
        for w in agent.actor.weights:
            w[:] = 0.0
        a = select_action(agent, np.linspace(0, 1, SD), False)
        assert np.array_equal(a, np.zeros(AD))

    def test_noise_statistics(self):
        # empirical mean of 10^4 noisy draws within 3*std/100 of the policy
        agent = Agent(make_cfg(exploration_noise_std=0.1), seed=1)
        for w in agent.actor.weights:
            w[:] = 0.0
        s = np.linspace(0, 1, SD)
        rng = np.random.default_rng(7)
        draws = np.array([select_action(agent, s, True, rng) for _ in range(10_000)])
        assert np.all(np.abs(draws.mean(axis=0)) < 3 * 0.1 / 100)
        assert np.all(draws >= -1.0) and np.all(draws <= 1.0)

    def test_wrong_width(self):
        agent = Agent(make_cfg(), seed=1)
        with pytest.raises(ShapeError):
            select_action(agent, np.zeros(SD + 1), False)


class TestCriticTarget:
    def test_gamma_zero_gives_rewards(self):
        batch = random_batch(3)
        expert = make_expert(1)
        labeled = make_expert(1, with_actions=True)
        for variant, exp in [("base_ac", None), ("actor_ssil", expert),
                             ("ac_ssil", expert), ("ac_bc", labeled)]:
            agent = Agent(make_cfg(variant=variant, gamma=0.0), seed=2)
            t = compute_critic_target(agent, batch, exp)
            assert np.array_equal(t, batch.rewards), variant
        agent = Agent(make_cfg(variant="ac_std", gamma=0.0), seed=2)
        t = compute_critic_target(agent, batch, expert)
        bonus = std_bonus(expert, batch.states, batch.next_states)
        assert np.array_equal(t, batch.rewards + bonus)

    def test_done_cuts_bootstrap(self):
        batch = random_batch(4, all_done=True)
        agent = Agent(make_cfg(variant="ac_ssil"), seed=2)
        t = compute_critic_target(agent, batch, make_expert(1))
        assert np.array_equal(t, batch.rewards)

    def test_ssil_equals_base_when_labels_match(self):
        # demo states are exactly the batch's next states: the k=1 pseudo
        # label equals the target actor's own action, distance 0
        batch = random_batch(5)
        episodes = [np.vstack([ns, ns]) for ns in batch.next_states]
        expert = ExpertBuffer.from_episodes(episodes, SD)
        base = Agent(make_cfg(variant="base_ac"), seed=6)
        ssil = Agent(make_cfg(variant="ac_ssil", k=1), seed=6)
        t_base = compute_critic_target(base, batch)
        t_ssil = compute_critic_target(ssil, batch, expert)
        assert np.array_equal(t_base, t_ssil)

    def test_ssil_damps_targets_itemwise(self):
        batch = random_batch(6)
        batch.dones[:] = False
        expert = make_expert(2)
        base = Agent(make_cfg(variant="base_ac"), seed=6)
        ssil = Agent(make_cfg(variant="ac_ssil"), seed=6)
        t_base = compute_critic_target(base, batch)
        t_ssil = compute_critic_target(ssil, batch, expert)
        a_next, _ = nn.mlp_forward(ssil.target_actor, batch.next_states)
        labels = pseudo_action_batch(expert, ssil.target_actor, batch.next_states, 5)
        d = np.sqrt(((a_next - labels) ** 2).sum(axis=1))
        assert np.all(t_ssil <= t_base)
        assert np.all((t_ssil == t_base) == (d == 0.0))

    def test_damping_is_alpha_squared_distance(self):
        # exact value: target drops by (1-done)*gamma*alpha*||diff||^2
        batch = random_batch(9)
        expert = make_expert(2)
        base = Agent(make_cfg(variant="base_ac"), seed=6)
        ssil = Agent(make_cfg(variant="ac_ssil", alpha=2.5), seed=6)
        t_base = compute_critic_target(base, batch)
        t_ssil = compute_critic_target(ssil, batch, expert)
        a_next, _ = nn.mlp_forward(ssil.target_actor, batch.next_states)
        labels = pseudo_action_batch(expert, ssil.target_actor, batch.next_states, 5)
        d2 = ((a_next - labels) ** 2).sum(axis=1)
        live = 1.0 - batch.dones.astype(np.float64)
        want = t_base - live * ssil.config.gamma * 2.5 * d2
        np.testing.assert_allclose(t_ssil, want, rtol=1e-12, atol=1e-15)

    def test_missing_expert_rejected(self):
        batch = random_batch(7)
        for variant in ("ac_ssil", "ac_std"):
            agent = Agent(make_cfg(variant=variant), seed=2)
            with pytest.raises(ConfigError):
                compute_critic_target(agent, batch)

    def test_targets_ignore_live_critic(self):
        batch = random_batch(8)
        agent = Agent(make_cfg(), seed=3)
        t1 = compute_critic_target(agent, batch)
        agent.critic.weights[0][:] += 0.5
        assert np.array_equal(t1, compute_critic_target(agent, batch))


class TestCriticUpdate:
    def test_zero_residual_leaves_params(self):
        # gamma 0 and rewards set to the critic's own predictions: loss 0,
        # gradient exactly zero, parameters bitwise unchanged
        agent = Agent(make_cfg(gamma=0.0), seed=9)
        batch = random_batch(9)
        q, _ = nn.mlp_forward(agent.critic, np.hstack([batch.states, batch.actions]))
        batch.rewards = q[:, 0].copy()
        before = params_snapshot(agent.critic)
        loss = critic_update(agent, batch)
        assert loss == 0.0
        assert params_equal(agent.critic, before)

    def test_descent_on_fixed_target(self):
        agent = Agent(make_cfg(gamma=0.0, batch_size=1), seed=9)
        batch = random_batch(10, b=1)
        losses = [critic_update(agent, batch) for _ in range(5)]
        assert all(b < a for a, b in zip(losses, losses[1:]))

    def test_duplicated_batch_same_gradient(self):
        # mean reduction: doubling every row leaves the gradient unchanged
        # up to summation-order roundoff in the batched matrix products
        batch = random_batch(11)
        double = TransitionBatch(
            states=np.vstack([batch.states] * 2),
            actions=np.vstack([batch.actions] * 2),
            rewards=np.concatenate([batch.rewards] * 2),
            next_states=np.vstack([batch.next_states] * 2),
            dones=np.concatenate([batch.dones] * 2),
        )
        agent = Agent(make_cfg(), seed=12)
        grads = []
        for b in (batch, double):
            targets = compute_critic_target(agent, b)
            x = np.hstack([b.states, b.actions])
            q, cache = nn.mlp_forward(agent.critic, x)
            diff = q[:, 0] - targets
            g, _ = nn.mlp_backward(agent.critic, cache,
                                   (2.0 / len(diff)) * diff[:, None])
            grads.append(g)
        for g1, g2 in zip(grads[0].arrays(), grads[1].arrays()):
            np.testing.assert_allclose(g1, g2, rtol=1e-12, atol=1e-15)

    def test_nonfinite_aborts_before_step(self):
        agent = Agent(make_cfg(), seed=9)
        batch = random_batch(13)
        batch.rewards[0] = np.inf
        before = params_snapshot(agent.critic)
        with pytest.raises(NumericError):
            critic_update(agent, batch)
        assert params_equal(agent.critic, before)

    def test_matches_manual_derivation(self):
        # independently recompute the step with targets held constant: same
        # gradients means the bootstrapped target truly acts as a constant
        agent = Agent(make_cfg(), seed=14)
        twin = Agent(make_cfg(), seed=14)
        batch = random_batch(14)
        targets = compute_critic_target(twin, batch)
        x = np.hstack([batch.states, batch.actions])
        q, cache = nn.mlp_forward(twin.critic, x)
        diff = q[:, 0] - targets
        grads, _ = nn.mlp_backward(twin.critic, cache,
                                   (2.0 / len(diff)) * diff[:, None])
        nn.adam_step(twin.critic, grads, twin.critic_opt, twin.config.critic_lr)
        critic_update(agent, batch)
        assert params_equal(agent.critic, params_snapshot(twin.critic))


def l1_critic():
    """Explicit network computing Q(s, a) = -sum_i |a_i| exactly."""
    w1 = np.zeros((2 * AD, SD + AD))
    for i in range(AD):
        w1[2 * i, SD + i] = 1.0
        w1[2 * i + 1, SD + i] = -1.0
    w2 = -np.ones((1, 2 * AD))
    return nn.MlpParams([SD + AD, 2 * AD, 1], [w1, w2],
                        [np.zeros(2 * AD), np.zeros(1)], "identity", 1.0)


class TestActorUpdate:
    def test_alpha_zero_recovers_base(self):
        batch = random_batch(15)
        expert = make_expert(3)
        base = Agent(make_cfg(variant="base_ac"), seed=16)
        ssil = Agent(make_cfg(variant="ac_ssil", alpha=0.0), seed=16)
        actor_update(base, batch)
        actor_update(ssil, batch, expert)
        assert params_equal(base.actor, params_snapshot(ssil.actor))

    def test_pure_imitation_descent(self):
        # critic clamped to zero: the SSIL penalty is the whole objective
        agent = Agent(make_cfg(variant="ac_ssil"), seed=17)
        for arr in agent.critic.arrays():
            arr[:] = 0.0
        expert = make_expert(4)
        batch = random_batch(17)
        labels = pseudo_action_batch(expert, agent.target_actor, batch.states, 5)
        before, _ = nn.mlp_forward(agent.actor, batch.states)
        d_before = np.sqrt(((before - labels) ** 2).sum(axis=1)).mean()
        for _ in range(20):
            actor_update(agent, batch, expert)
        after, _ = nn.mlp_forward(agent.actor, batch.states)
        d_after = np.sqrt(((after - labels) ** 2).sum(axis=1)).mean()
        assert d_after < d_before

    def test_analytic_critic_shrinks_actions(self):
        # with Q = -||a||_1 the ascent direction is -sign(a): actions move
        # toward zero through the frozen critic's exact gradient
        agent = Agent(make_cfg(variant="base_ac", actor_lr=5e-3), seed=18)
        agent.critic = l1_critic()
        agent.critic_opt = nn.AdamState.for_params(agent.critic)
        batch = random_batch(18)
        before, _ = nn.mlp_forward(agent.actor, batch.states)
        critic_before = params_snapshot(agent.critic)
        for _ in range(50):
            actor_update(agent, batch)
        after, _ = nn.mlp_forward(agent.actor, batch.states)
        assert np.abs(after).mean() < np.abs(before).mean()
        assert params_equal(agent.critic, critic_before)  # critic untouched

    def test_bc_needs_labeled_demos(self):
        agent = Agent(make_cfg(variant="ac_bc"), seed=19)
        with pytest.raises(ConfigError):
            actor_update(agent, random_batch(19), make_expert(5))

    def test_bc_moves_toward_demo_actions(self):
        agent = Agent(make_cfg(variant="ac_bc"), seed=20)
        for arr in agent.critic.arrays():
            arr[:] = 0.0
        expert = make_expert(6, with_actions=True)
        batch = random_batch(20)
        pred, _ = nn.mlp_forward(agent.actor, expert.states)
        d_before = np.sqrt(((pred - expert.actions) ** 2).sum(axis=1)).mean()
        for _ in range(30):
            actor_update(agent, batch, expert)
        pred, _ = nn.mlp_forward(agent.actor, expert.states)
        d_after = np.sqrt(((pred - expert.actions) ** 2).sum(axis=1)).mean()
        assert d_after < d_before

    def test_missing_expert_rejected(self):
        for variant in ("actor_ssil", "ac_ssil", "ac_bc"):
            agent = Agent(make_cfg(variant=variant), seed=2)
            with pytest.raises(ConfigError):
                actor_update(agent, random_batch(21))


class TestStdReward:
    def test_exact_match_full_bonus(self):
        expert = make_expert(7)
        s = expert.states[3].copy()
        s2 = expert.next_states[3].copy()
        assert std_shaped_reward(expert, s, s2, reward=-1.0, weight=1.0) == 0.0
        assert std_shaped_reward(expert, s, s2, reward=0.0, weight=2.5) == 2.5

    def test_far_transition_vanishes(self):
        expert = make_expert(7)
        s = np.full(SD, 100.0)
        assert std_shaped_reward(expert, s, s, reward=0.0, decay=1.0) < 1e-10

    def test_min_distance_matches_brute_force(self):
        expert = make_expert(8, n_eps=30)
        rng = np.random.default_rng(22)
        states = rng.uniform(0, 1, (50, SD))
        nexts = rng.uniform(0, 1, (50, SD))
        got = std_bonus(expert, states, nexts, weight=1.0, decay=1.0)
        pairs = np.hstack([expert.states, expert.next_states])
        for i in range(50):
            q = np.concatenate([states[i], nexts[i]])
            dmin = np.sqrt(((pairs - q) ** 2).sum(axis=1)).min()
            assert got[i] == pytest.approx(np.exp(-dmin), rel=1e-12)


class TestTrainStep:
    def test_tau_zero_rejected_in_config(self):
        with pytest.raises(ConfigError):
            make_cfg(tau=0.0)

    def test_soft_update_tau_zero_identity(self):
        agent = Agent(make_cfg(), seed=23)
        before = params_snapshot(agent.target_actor)
        agent.actor.weights[0][:] += 1.0
        nn.soft_update(agent.target_actor, agent.actor, 0.0)
        assert params_equal(agent.target_actor, before)

    def test_target_lag_shrinks(self):
        agent = Agent(make_cfg(tau=0.1), seed=24)
        agent.actor.weights[0][:] += 1.0  # frozen offset
        def gap():
            return sum(np.abs(t - s).sum() for t, s in
                       zip(agent.target_actor.arrays(), agent.actor.arrays()))
        gaps = [gap()]
        for _ in range(10):
            nn.soft_update(agent.target_actor, agent.actor, 0.1)
            gaps.append(gap())
        assert all(b < a for a, b in zip(gaps, gaps[1:]))

    def test_deterministic_streams(self):
        expert = make_expert(9)
        streams = []
        for _ in range(2):
            agent = Agent(make_cfg(variant="ac_ssil"), seed=25)
            replay = fill_replay(26)
            streams.append([train_step(agent, replay, expert) for _ in range(30)])
        assert streams[0] == streams[1]

    def test_alpha_zero_stream_matches_base(self):
        expert = make_expert(9)
        base = Agent(make_cfg(variant="base_ac"), seed=27)
        ssil = Agent(make_cfg(variant="ac_ssil", alpha=0.0), seed=27)
        replay_a = fill_replay(28)
        replay_b = fill_replay(28)
        s1 = [train_step(base, replay_a) for _ in range(50)]
        s2 = [train_step(ssil, replay_b, expert) for _ in range(50)]
        assert s1 == s2

    def test_targets_track_after_steps(self):
        agent = Agent(make_cfg(), seed=29)
        replay = fill_replay(30)
        t0 = params_snapshot(agent.target_critic)
        for _ in range(5):
            train_step(agent, replay)
        assert not params_equal(agent.target_critic, t0)


class TestCheckpoint:
    def test_roundtrip_exact(self, tmp_path):
        agent = Agent(make_cfg(variant="ac_ssil"), seed=31)
        replay = fill_replay(32)
        expert = make_expert(10)
        for _ in range(10):
            train_step(agent, replay, expert)
        path = tmp_path / "agent.npz"
        save_agent(agent, path)
        clone = load_agent(path)
        for name in ("actor", "critic", "target_actor", "target_critic"):
            assert params_equal(getattr(clone, name),
                                params_snapshot(getattr(agent, name)))
        assert clone.config == agent.config
        assert clone.rng.bit_generator.state == agent.rng.bit_generator.state
        assert clone.actor_opt.step_count == agent.actor_opt.step_count
        for m1, m2 in zip(clone.critic_opt.m, agent.critic_opt.m):
            assert np.array_equal(m1, m2)

    def test_resume_continues_exact_stream(self, tmp_path):
        expert = make_expert(11)
        agent = Agent(make_cfg(variant="ac_ssil"), seed=33)
        replay = fill_replay(34)
        for _ in range(5):
            train_step(agent, replay, expert)
        save_agent(agent, tmp_path / "mid.npz")
        want = [train_step(agent, replay, expert) for _ in range(5)]
        resumed = load_agent(tmp_path / "mid.npz")
        got = [train_step(resumed, replay, expert) for _ in range(5)]
        assert want == got

    def test_version_guard(self, tmp_path):
        agent = Agent(make_cfg(), seed=35)
        path = tmp_path / "agent.npz"
        save_agent(agent, path)
        import json
        with np.load(path, allow_pickle=False) as data:
            payload = {k: data[k] for k in data.files}
        meta = json.loads(str(payload["meta"]))
        meta["version"] = 99
        payload["meta"] = np.str_(json.dumps(meta))
        with open(path, "wb") as fh:
            np.savez(fh, **payload)
        with pytest.raises(ValueError):
            load_agent(path)
