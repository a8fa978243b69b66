"""Goal-conditioned 2-D manipulation toys with scripted experts.

Three tasks of increasing exploration difficulty share one movement model
(per-dimension position deltas, bang-bang grippers, exact attachment):

* ``reach2d``       — drive the effector to the goal.
* ``pick_place2d``  — grasp a free object and carry it to the goal.
* ``handover2d``    — two arms with overlapping x-ranges; the object spawns
  where only arm 1 can grasp it and the goal sits where only arm 2 can
  deliver, so success requires an explicit handover.

Rewards are sparse (0 on success, −1 otherwise) and every task is
goal-conditioned: the flat state is observation ⊕ achieved ⊕ desired goal.
An optional third spatial dimension widens all vectors without changing
the rules.
"""

from dataclasses import dataclass, field

import numpy as np

from .buffers import save_demos
from .errors import ConfigError, GenerationError, ShapeError

ACTION_SCALE = 0.05       # effector displacement per unit action, per dim
GRASP_RADIUS = 0.05       # closed gripper captures a free object within this
WORKSPACE_LOW = 0.0
WORKSPACE_HIGH = 1.0
ARM_X_RANGES = ((0.0, 0.55), (0.45, 1.0))  # handover2d per-arm x limits
HANDOVER_OBJ_X_MAX = 0.35   # object spawns graspable by arm 1 only
HANDOVER_GOAL_X_MIN = 0.65  # goal placed reachable by arm 2 only

ENV_NAMES = ("reach2d", "pick_place2d", "handover2d")

_RESET_DRAW_CAP = 1000  # rejection-sampling guard against degenerate specs


@dataclass(frozen=True)
class EnvSpec:
    """Static description of one task instance."""

    name: str
    obs_dim: int
    action_dim: int
    goal_dim: int
    max_episode_steps: int = 50
    success_threshold: float = 0.05

    def __post_init__(self):
        if self.name not in ENV_NAMES:
            raise ConfigError(f"unknown environment {self.name!r}")
        if min(self.obs_dim, self.action_dim, self.goal_dim) < 1:
            raise ConfigError("dimensions must be positive")
        if self.max_episode_steps < 1:
            raise ConfigError("max_episode_steps must be positive")
        if self.success_threshold <= 0.0:
            raise ConfigError("success_threshold must be positive")


@dataclass
class EnvState:
    """Full simulator state after some number of steps.

    ``holder`` is internal attachment bookkeeping (-1 free, else the index
    of the arm carrying the object); policies see only the flat vector.
    """

    observation: np.ndarray
    achieved_goal: np.ndarray
    desired_goal: np.ndarray
    step_count: int
    spec: EnvSpec = field(repr=False)
    holder: int = -1


def env_spec(name, three_d=False):
    """Build the spec for a named task; the 3-D flag widens every vector."""
    nd = 3 if three_d else 2
    if name == "reach2d":
        return EnvSpec(name, obs_dim=nd, action_dim=nd, goal_dim=nd)
    if name == "pick_place2d":
        return EnvSpec(name, obs_dim=2 * nd + 1, action_dim=nd + 1, goal_dim=nd)
    if name == "handover2d":
        return EnvSpec(name, obs_dim=3 * nd + 2, action_dim=2 * (nd + 1), goal_dim=nd)
    raise ConfigError(f"unknown environment {name!r}")


def state_dim(spec):
    return spec.obs_dim + 2 * spec.goal_dim


def flat_state(state):
    """Network-facing vector: observation ⊕ achieved_goal ⊕ desired_goal."""
    return np.concatenate(
        [state.observation, state.achieved_goal, state.desired_goal]
    )


def goal_reward_fn(spec):
    """Batched sparse reward rule for hindsight relabeling.

    Returns fn(achieved, desired) -> (rewards in {0,-1}, done flags), both
    arguments (B, goal_dim).
    """
    thr = spec.success_threshold

    def fn(achieved, desired):
        d = np.sqrt(((achieved - desired) ** 2).sum(axis=1))
        done = d <= thr
        return np.where(done, 0.0, -1.0), done

    return fn


# ---------------------------------------------------------------------------
# observation layout


def _n_arms(spec):
    return 2 if spec.name == "handover2d" else 1


def _has_object(spec):
    return spec.name != "reach2d"


def _split_obs(spec, obs):
    """-> (eff (n_arms, nd), grip (n_arms,), obj (nd,) or None); copies."""
    nd = spec.goal_dim
    if spec.name == "reach2d":
        return obs[:nd].copy()[None, :], np.zeros(0), None
    if spec.name == "pick_place2d":
        return obs[:nd].copy()[None, :], obs[nd : nd + 1].copy(), obs[nd + 1 :].copy()
    eff = np.stack([obs[: nd], obs[nd + 1 : 2 * nd + 1]])
    grip = np.array([obs[nd], obs[2 * nd + 1]])
    return eff, grip, obs[2 * nd + 2 :].copy()


def _join_obs(spec, eff, grip, obj):
    if spec.name == "reach2d":
        return eff[0].copy()
    if spec.name == "pick_place2d":
        return np.concatenate([eff[0], grip, obj])
    return np.concatenate([eff[0], grip[:1], eff[1], grip[1:], obj])


def _arm_low_high(spec, arm, nd):
    low = np.full(nd, WORKSPACE_LOW)
    high = np.full(nd, WORKSPACE_HIGH)
    if spec.name == "handover2d":
        low[0], high[0] = ARM_X_RANGES[arm]
    return low, high


# ---------------------------------------------------------------------------
# reset / step


def env_reset(spec, seed):
    """Sample a fresh episode start, deterministic in the seed.

    Draw order is fixed (arms, object, goal); the goal is redrawn until it
    sits more than twice the success threshold from the initial achieved
    goal, so no episode starts solved.
    """
    rng = np.random.default_rng(seed)
    nd = spec.goal_dim
    eff = np.empty((_n_arms(spec), nd))
    for i in range(_n_arms(spec)):
        low, high = _arm_low_high(spec, i, nd)
        eff[i] = rng.uniform(low, high)
    grip = np.zeros(_n_arms(spec)) if _has_object(spec) else np.zeros(0)

    if spec.name == "handover2d":
        obj_high = np.full(nd, WORKSPACE_HIGH)
        obj_high[0] = HANDOVER_OBJ_X_MAX
        obj = rng.uniform(np.full(nd, WORKSPACE_LOW), obj_high)
        goal_low = np.full(nd, WORKSPACE_LOW)
        goal_low[0] = HANDOVER_GOAL_X_MIN
        goal_high = np.full(nd, WORKSPACE_HIGH)
    elif spec.name == "pick_place2d":
        obj = rng.uniform(WORKSPACE_LOW, WORKSPACE_HIGH, nd)
        goal_low = np.full(nd, WORKSPACE_LOW)
        goal_high = np.full(nd, WORKSPACE_HIGH)
    else:
        obj = None
        goal_low = np.full(nd, WORKSPACE_LOW)
        goal_high = np.full(nd, WORKSPACE_HIGH)

    achieved = (obj if obj is not None else eff[0]).copy()
    for _ in range(_RESET_DRAW_CAP):
        goal = rng.uniform(goal_low, goal_high)
        if np.sqrt(((goal - achieved) ** 2).sum()) > 2.0 * spec.success_threshold:
            break
    else:
        raise ConfigError(
            "could not place a goal clear of the start; threshold too large "
            "for the workspace"
        )

    return EnvState(
        observation=_join_obs(spec, eff, grip, obj),
        achieved_goal=achieved,
        desired_goal=goal,
        step_count=0,
        spec=spec,
        holder=-1,
    )


def env_step(state, action):
    """Advance one step; returns (next_state, reward, done, success).

    Order of effects: grippers take their commanded pose (an arm that opens
    releases in place), arms move by the clipped scaled deltas, a carried
    object snaps to its holder, then the lowest-index closed arm within
    grasp radius captures a free object. A held object is never stolen.
    """
    spec = state.spec
    a = np.clip(np.asarray(action, dtype=float).ravel(), -1.0, 1.0)
    if a.shape[0] != spec.action_dim:
        raise ShapeError(f"action width {a.shape[0]} != {spec.action_dim}")

    nd = spec.goal_dim
    eff, grip, obj = _split_obs(spec, state.observation)
    n_arms = eff.shape[0]
    holder = state.holder

    if _has_object(spec):
        stride = nd + 1
        deltas = np.stack([a[i * stride : i * stride + nd] for i in range(n_arms)])
        closed = np.array([a[i * stride + nd] > 0.0 for i in range(n_arms)])
        grip = closed.astype(float)
    else:
        deltas = a[None, :]
        closed = np.zeros(1, dtype=bool)

    if holder >= 0 and not closed[holder]:
        holder = -1  # opened: the object stays where it was
    for i in range(n_arms):
        low, high = _arm_low_high(spec, i, nd)
        eff[i] = np.clip(eff[i] + ACTION_SCALE * deltas[i], low, high)
    if holder >= 0:
        obj = eff[holder].copy()
    elif _has_object(spec):
        for i in range(n_arms):
            if closed[i] and np.sqrt(((eff[i] - obj) ** 2).sum()) <= GRASP_RADIUS:
                holder = i
                obj = eff[i].copy()
                break

    achieved = (obj if obj is not None else eff[0]).copy()
    dist = np.sqrt(((achieved - state.desired_goal) ** 2).sum())
    success = bool(dist <= spec.success_threshold)
    reward = 0.0 if success else -1.0
    step_count = state.step_count + 1
    done = success or step_count >= spec.max_episode_steps
    next_state = EnvState(
        observation=_join_obs(spec, eff, grip, obj),
        achieved_goal=achieved,
        desired_goal=state.desired_goal.copy(),
        step_count=step_count,
        spec=spec,
        holder=holder,
    )
    return next_state, reward, done, success


# ---------------------------------------------------------------------------
# scripted experts


def _toward(pos, target):
    """Clipped proportional step command; lands exactly when one step away."""
    return np.clip((target - pos) / ACTION_SCALE, -1.0, 1.0)


_HANDOFF_TOL = 0.01  # how close to the meeting point counts as "delivered"


def scripted_expert(spec, state):
    """Deterministic controller achieving every task within the step limit.

    Pick-and-place: approach the object open, close inside the grasp
    radius, carry to the goal, open there. Handover adds a fixed meeting
    point at the workspace centre: arm 1 delivers the object there, arm 2
    waits open on top of it, and the two grippers swap in a single step.
    """
    nd = spec.goal_dim
    eff, grip, obj = _split_obs(spec, state.observation)
    goal = state.desired_goal

    if spec.name == "reach2d":
        return _toward(eff[0], goal)

    if spec.name == "pick_place2d":
        a = np.zeros(nd + 1)
        if state.holder == 0:
            if np.sqrt(((obj - goal) ** 2).sum()) <= 0.5 * spec.success_threshold:
                a[nd] = -1.0  # arrived: open, stay put
            else:
                a[:nd] = _toward(eff[0], goal)
                a[nd] = 1.0
        elif np.sqrt(((eff[0] - obj) ** 2).sum()) <= 0.5 * GRASP_RADIUS:
            a[nd] = 1.0  # close over the object
        else:
            a[:nd] = _toward(eff[0], obj)
            a[nd] = -1.0
        return a

    # handover2d
    meet = np.full(nd, 0.5)
    d1 = np.zeros(nd)
    d2 = np.zeros(nd)
    g1, g2 = -1.0, -1.0
    if state.holder == 1:
        if np.sqrt(((obj - goal) ** 2).sum()) <= 0.5 * spec.success_threshold:
            g2 = -1.0
        else:
            d2 = _toward(eff[1], goal)
            g2 = 1.0
    elif state.holder == 0:
        if np.sqrt(((obj - meet) ** 2).sum()) > _HANDOFF_TOL:
            d1 = _toward(eff[0], meet)
            g1 = 1.0
            d2 = _toward(eff[1], meet)
        elif np.sqrt(((eff[1] - obj) ** 2).sum()) <= 0.5 * GRASP_RADIUS:
            g1, g2 = -1.0, 1.0  # swap grippers: release and capture
        else:
            g1 = 1.0  # hold position until arm 2 arrives
            d2 = _toward(eff[1], meet)
    else:
        if obj[0] >= ARM_X_RANGES[1][0]:  # free object on arm 2's side
            if np.sqrt(((eff[1] - obj) ** 2).sum()) <= 0.5 * GRASP_RADIUS:
                g2 = 1.0
            else:
                d2 = _toward(eff[1], obj)
        elif np.sqrt(((eff[0] - obj) ** 2).sum()) <= 0.5 * GRASP_RADIUS:
            g1 = 1.0
            d2 = _toward(eff[1], meet)
        else:
            d1 = _toward(eff[0], obj)
            d2 = _toward(eff[1], meet)
    return np.concatenate([d1, [g1], d2, [g2]])


def run_expert_episode(spec, seed):
    """Roll the scripted expert once; -> (states (T+1,d), actions (T,a), success)."""
    state = env_reset(spec, seed)
    states = [flat_state(state)]
    actions = []
    success = False
    done = False
    while not done:
        action = scripted_expert(spec, state)
        state, _, done, success = env_step(state, action)
        states.append(flat_state(state))
        actions.append(action)
    return np.array(states), np.array(actions), success


def generate_demos(spec, n_episodes, seed, include_actions, out_path):
    """Collect successful expert episodes and write them as a demo file.

    Episode seeds derive from one generator, so the same seed always yields
    a byte-identical file. Returns the number of rollouts attempted; raises
    after 10× n_episodes attempts without enough successes.
    """
    if n_episodes < 1:
        raise ConfigError(f"n_episodes must be positive, got {n_episodes}")
    rng = np.random.default_rng(seed)
    episodes = []
    episode_actions = []
    attempts = 0
    max_attempts = 10 * n_episodes
    while len(episodes) < n_episodes:
        if attempts >= max_attempts:
            raise GenerationError(
                f"{spec.name}: only {len(episodes)}/{n_episodes} successful "
                f"episodes in {attempts} attempts"
            )
        attempts += 1
        ep_seed = int(rng.integers(0, 2**63 - 1))
        states, actions, success = run_expert_episode(spec, ep_seed)
        if success:
            episodes.append(states)
            episode_actions.append(actions)
    save_demos(
        out_path,
        episodes,
        actions=episode_actions if include_actions else None,
    )
    return attempts
