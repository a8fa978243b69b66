"""The actor-critic learner and its demonstration-guided variants.

One deterministic actor and one critic, each shadowed by a slowly tracking
target copy. Five interchangeable update rules share the machinery:

* ``base_ac``    — plain bootstrapped actor-critic.
* ``actor_ssil`` — actor additionally pulled toward pseudo labels (the
  target actor's mean action over the K nearest demonstrated states).
* ``ac_ssil``    — actor_ssil plus the same distance subtracted inside the
  bootstrapped critic target, damping value overestimation.
* ``ac_bc``      — actor pulled toward true demonstrated actions sampled
  from an action-labeled demo buffer.
* ``ac_std``     — critic target uses a reward bonus shaped by the distance
  to the nearest demonstrated state transition.

Pseudo labels and shaped rewards are computed values, never gradient
paths: updates treat them as constants.
"""

import json
from dataclasses import asdict, dataclass

import numpy as np

from . import _kernels, nn
from .errors import ConfigError, NumericError, ShapeError
from .ssil import pseudo_action_batch, ssil_actor_penalty

VARIANTS = ("base_ac", "actor_ssil", "ac_ssil", "ac_bc", "ac_std")

_NEEDS_EXPERT = ("actor_ssil", "ac_ssil", "ac_bc", "ac_std")


@dataclass
class AgentConfig:
    """Hyper-parameters and architecture of one agent."""

    state_dim: int
    action_dim: int
    variant: str = "base_ac"
    gamma: float = 0.99
    tau: float = 0.005
    alpha: float = 5.0
    k: int = 5
    actor_lr: float = 1e-3
    critic_lr: float = 1e-3
    batch_size: int = 64
    exploration_noise_std: float = 0.1
    update_to_step: float = 1.0
    hidden_dims: tuple = (64, 64)
    std_bonus_weight: float = 1.0  # ac_std bonus scale
    std_bonus_decay: float = 1.0   # ac_std distance decay rate

    def __post_init__(self):
        self.hidden_dims = tuple(int(h) for h in self.hidden_dims)
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}")
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigError(f"gamma must lie in [0, 1), got {self.gamma}")
        if not 0.0 < self.tau <= 1.0:
            raise ConfigError(f"tau must lie in (0, 1], got {self.tau}")
        if self.alpha < 0.0:
            raise ConfigError(f"alpha must be non-negative, got {self.alpha}")
        if self.k < 1:
            raise ConfigError(f"k must be positive, got {self.k}")
        if min(self.actor_lr, self.critic_lr) <= 0.0:
            raise ConfigError("learning rates must be positive")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be positive, got {self.batch_size}")
        if self.exploration_noise_std < 0.0:
            raise ConfigError("exploration_noise_std must be non-negative")
        if self.update_to_step <= 0.0:
            raise ConfigError("update_to_step must be positive")
        if min(self.state_dim, self.action_dim) < 1 or not self.hidden_dims:
            raise ConfigError("network dimensions must be positive")


class Agent:
    """Actor/critic pair with target copies, optimizers, and an RNG stream.

    Target networks start as exact copies of the live networks and trail
    them by exponential averaging after every train step.
    """

    def __init__(self, config, seed=0):
        self.config = config
        actor_seed, critic_seed, stream_seed = np.random.SeedSequence(seed).spawn(3)
        actor_dims = [config.state_dim, *config.hidden_dims, config.action_dim]
        critic_dims = [config.state_dim + config.action_dim, *config.hidden_dims, 1]
        self.actor = nn.mlp_init(actor_dims, output_squash="tanh", seed=actor_seed)
        self.critic = nn.mlp_init(critic_dims, output_squash="identity", seed=critic_seed)
        self.target_actor = self.actor.copy()
        self.target_critic = self.critic.copy()
        self.actor_opt = nn.AdamState.for_params(self.actor)
        self.critic_opt = nn.AdamState.for_params(self.critic)
        self.rng = np.random.default_rng(stream_seed)


def _require_expert(config, expert):
    if expert is None:
        raise ConfigError(
            f"variant {config.variant!r} needs a demonstration buffer"
        )


def select_action(agent, state, explore, rng=None):
    """Policy action for one state, optionally with exploration noise.

    Noise is zero-mean Gaussian, clipped to the [-1, 1] action bounds;
    without it the policy is deterministic.
    """
    state = np.asarray(state, dtype=np.float64)
    if state.shape != (agent.config.state_dim,):
        raise ShapeError(
            f"state shape {state.shape} != ({agent.config.state_dim},)"
        )
    action, _ = nn.mlp_forward(agent.actor, state[None, :])
    action = action[0]
    if explore:
        rng = agent.rng if rng is None else rng
        noise = rng.normal(0.0, agent.config.exploration_noise_std, action.shape)
        action = np.clip(action + noise, -1.0, 1.0)
    return action


def std_bonus(expert, states, next_states, weight=1.0, decay=1.0):
    """Shaping bonus weight·exp(-decay·min‖(s,s') − nearest demo pair‖)."""
    queries = np.hstack([states, next_states])
    if queries.shape[1] != expert.pair_vectors.shape[1]:
        raise ShapeError(
            f"transition width {queries.shape[1]} != demo pair width "
            f"{expert.pair_vectors.shape[1]}"
        )
    _, d2 = _kernels.knn_topk(expert.pair_vectors, np.ascontiguousarray(queries), 1)
    return weight * np.exp(-decay * np.sqrt(d2[:, 0]))


def std_shaped_reward(expert, state, next_state, reward=0.0, weight=1.0, decay=1.0):
    """Environment reward plus the nearest-demo-transition bonus, one item."""
    bonus = std_bonus(
        expert,
        np.asarray(state, dtype=np.float64)[None, :],
        np.asarray(next_state, dtype=np.float64)[None, :],
        weight,
        decay,
    )
    return float(reward + bonus[0])


def compute_critic_target(agent, batch, expert=None):
    """Bootstrapped regression targets, one per transition; no gradients.

    Base rule: r + (1-done)·γ·Q*(s', π*(s')). The ac_ssil variant subtracts
    α·‖π*(s') − pseudo_label(s')‖² from the bootstrapped value; ac_std adds
    the demo-transition bonus to the reward. Terminal transitions never
    bootstrap.
    """
    cfg = agent.config
    if cfg.variant in ("ac_ssil", "ac_std"):
        _require_expert(cfg, expert)
    a_next, _ = nn.mlp_forward(agent.target_actor, batch.next_states)
    q_next, _ = nn.mlp_forward(
        agent.target_critic, np.hstack([batch.next_states, a_next])
    )
    q_next = q_next[:, 0]
    if cfg.variant == "ac_ssil" and cfg.alpha != 0.0:
        labels = pseudo_action_batch(expert, agent.target_actor, batch.next_states, cfg.k)
        diff = a_next - labels
        q_next = q_next - cfg.alpha * (diff * diff).sum(axis=1)
    rewards = batch.rewards
    if cfg.variant == "ac_std":
        rewards = rewards + std_bonus(
            expert, batch.states, batch.next_states,
            cfg.std_bonus_weight, cfg.std_bonus_decay,
        )
    return rewards + (1.0 - batch.dones.astype(np.float64)) * cfg.gamma * q_next


def critic_update(agent, batch, expert=None, return_stats=False):
    """One Adam step on the critic's mean squared error to its targets.

    Returns the pre-step loss (optionally with value statistics); a
    non-finite loss aborts before touching any parameter.
    """
    targets = compute_critic_target(agent, batch, expert)
    x = np.hstack([batch.states, batch.actions])
    q, cache = nn.mlp_forward(agent.critic, x)
    diff = q[:, 0] - targets
    loss = float(np.mean(diff * diff))
    if not np.isfinite(loss):
        raise NumericError(f"critic loss is {loss}; update aborted")
    grads, _ = nn.mlp_backward(agent.critic, cache, (2.0 / len(diff)) * diff[:, None])
    nn.adam_step(agent.critic, grads, agent.critic_opt, agent.config.critic_lr)
    if return_stats:
        return loss, float(q.mean()), float(targets.mean())
    return loss


def actor_update(agent, batch, expert=None, rng=None):
    """One Adam ascent step on the actor's objective; returns its value.

    Objective: mean_i Q(s_i, π(s_i)), minus the variant's imitation penalty
    (distance to pseudo labels for the SSIL variants, distance to true demo
    actions on a separate demo batch for ac_bc). The critic is read-only
    here: its value gradient flows into the actor, its parameters stay put.
    """
    cfg = agent.config
    if cfg.variant in ("actor_ssil", "ac_ssil", "ac_bc"):
        _require_expert(cfg, expert)
    actions, actor_cache = nn.mlp_forward(agent.actor, batch.states)
    q, critic_cache = nn.mlp_forward(agent.critic, np.hstack([batch.states, actions]))
    objective = float(q.mean())
    _, dx = nn.mlp_backward(
        agent.critic, critic_cache, np.full((len(q), 1), 1.0 / len(q))
    )
    # descent direction for the loss -mean Q: negate the critic's action grad
    action_grad = -dx[:, cfg.state_dim:]
    value = objective
    bc_grads = None
    if cfg.variant in ("actor_ssil", "ac_ssil") and cfg.alpha != 0.0:
        labels = pseudo_action_batch(expert, agent.target_actor, batch.states, cfg.k)
        penalty, pgrad = ssil_actor_penalty(actions, labels, cfg.alpha)
        action_grad = action_grad + pgrad
        value = objective - penalty
    elif cfg.variant == "ac_bc" and cfg.alpha != 0.0:
        if expert.actions is None:
            raise ConfigError("ac_bc needs action-labeled demonstrations")
        rng = agent.rng if rng is None else rng
        idx = rng.integers(0, len(expert), size=cfg.batch_size)
        demo_pred, demo_cache = nn.mlp_forward(agent.actor, expert.states[idx])
        penalty, pgrad = ssil_actor_penalty(demo_pred, expert.actions[idx], cfg.alpha)
        bc_grads, _ = nn.mlp_backward(agent.actor, demo_cache, pgrad)
        value = objective - penalty
    grads, _ = nn.mlp_backward(agent.actor, actor_cache, action_grad)
    if bc_grads is not None:
        grads.add_(bc_grads)
    nn.adam_step(agent.actor, grads, agent.actor_opt, agent.config.actor_lr)
    return value


def train_step(agent, replay, expert=None, rng=None, her_ratio=0.8):
    """Sample a relabeled batch, update critic then actor, track targets.

    Returns the step's metrics; identical seeds and configuration yield a
    bit-identical metric stream.
    """
    rng = agent.rng if rng is None else rng
    batch = replay.sample(agent.config.batch_size, her_ratio, rng)
    critic_loss, q_mean, target_mean = critic_update(
        agent, batch, expert, return_stats=True
    )
    actor_objective = actor_update(agent, batch, expert, rng)
    nn.soft_update(agent.target_critic, agent.critic, agent.config.tau)
    nn.soft_update(agent.target_actor, agent.actor, agent.config.tau)
    return {
        "critic_loss": critic_loss,
        "actor_objective": actor_objective,
        "q_mean": q_mean,
        "target_mean": target_mean,
    }


# ---------------------------------------------------------------------------
# checkpointing

_CKPT_VERSION = 1
_NETS = ("actor", "critic", "target_actor", "target_critic")


def _pack_params(payload, prefix, params):
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        payload[f"{prefix}_w{i}"] = w
        payload[f"{prefix}_b{i}"] = b


def _unpack_params(data, prefix, dims, squash, squash_scale):
    n = len(dims) - 1
    return nn.MlpParams(
        layer_dims=list(dims),
        weights=[np.ascontiguousarray(data[f"{prefix}_w{i}"]) for i in range(n)],
        biases=[np.ascontiguousarray(data[f"{prefix}_b{i}"]) for i in range(n)],
        squash=squash,
        squash_scale=squash_scale,
    )


def _pack_opt(payload, prefix, opt):
    for i, (m, v) in enumerate(zip(opt.m, opt.v)):
        payload[f"{prefix}_m{i}"] = m
        payload[f"{prefix}_v{i}"] = v


def save_agent(agent, path, extra=None):
    """Write everything needed to resume the exact metric stream.

    extra, when given, is a JSON-serializable dict stored alongside the
    checkpoint (e.g. which environment the agent was trained on); it is
    ignored by load_agent and read back with checkpoint_extra.
    """
    meta = {
        "version": _CKPT_VERSION,
        "config": asdict(agent.config),
        "extra": dict(extra) if extra else {},
        "rng_state": agent.rng.bit_generator.state,
        "actor_opt": {"step_count": agent.actor_opt.step_count,
                      "beta1": agent.actor_opt.beta1,
                      "beta2": agent.actor_opt.beta2,
                      "eps": agent.actor_opt.eps},
        "critic_opt": {"step_count": agent.critic_opt.step_count,
                       "beta1": agent.critic_opt.beta1,
                       "beta2": agent.critic_opt.beta2,
                       "eps": agent.critic_opt.eps},
    }
    payload = {"meta": np.str_(json.dumps(meta, sort_keys=True))}
    for name in _NETS:
        _pack_params(payload, name, getattr(agent, name))
    _pack_opt(payload, "actor_opt", agent.actor_opt)
    _pack_opt(payload, "critic_opt", agent.critic_opt)
    with open(path, "wb") as fh:
        np.savez(fh, **payload)


def checkpoint_extra(path):
    """Read back the extra dict stored by save_agent (empty if none)."""
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
    return meta.get("extra", {})


def load_agent(path):
    """Rebuild an agent value-exactly from save_agent output."""
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        if meta["version"] != _CKPT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta['version']}")
        raw = dict(meta["config"])
        raw["hidden_dims"] = tuple(raw["hidden_dims"])
        config = AgentConfig(**raw)
        agent = Agent.__new__(Agent)
        agent.config = config
        actor_dims = [config.state_dim, *config.hidden_dims, config.action_dim]
        critic_dims = [config.state_dim + config.action_dim, *config.hidden_dims, 1]
        for name in _NETS:
            dims = actor_dims if "actor" in name else critic_dims
            squash = "tanh" if "actor" in name else "identity"
            setattr(agent, name, _unpack_params(data, name, dims, squash, 1.0))
        n = len(actor_dims) - 1
        agent.actor_opt = nn.AdamState(
            m=[np.ascontiguousarray(data[f"actor_opt_m{i}"]) for i in range(2 * n)],
            v=[np.ascontiguousarray(data[f"actor_opt_v{i}"]) for i in range(2 * n)],
            step_count=meta["actor_opt"]["step_count"],
            beta1=meta["actor_opt"]["beta1"],
            beta2=meta["actor_opt"]["beta2"],
            eps=meta["actor_opt"]["eps"],
        )
        agent.critic_opt = nn.AdamState(
            m=[np.ascontiguousarray(data[f"critic_opt_m{i}"]) for i in range(2 * n)],
            v=[np.ascontiguousarray(data[f"critic_opt_v{i}"]) for i in range(2 * n)],
            step_count=meta["critic_opt"]["step_count"],
            beta1=meta["critic_opt"]["beta1"],
            beta2=meta["critic_opt"]["beta2"],
            eps=meta["critic_opt"]["eps"],
        )
        agent.rng = np.random.default_rng()
        agent.rng.bit_generator.state = meta["rng_state"]
        return agent
