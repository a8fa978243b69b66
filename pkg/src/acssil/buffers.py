"""Experience replay and the demonstration store.

The replay buffer is a bounded FIFO ring holding goal-conditioned
transitions; hindsight goal relabeling happens at sample time using the
achieved goal of a uniformly chosen future step from the same episode.
The expert buffer is an immutable array of consecutive state pairs
(optionally with actions) queried by exact nearest-neighbour search.

State layout everywhere: observation ⊕ achieved_goal ⊕ desired_goal, with
the two goal slices occupying the trailing 2*goal_dim entries.
"""

import os
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import DemoFormatError, ShapeError


@dataclass
class Transition:
    """One environment step: (s, a, r, s', done) plus episode bookkeeping.

    done marks success termination only; time-limit truncation is not a
    transition property (the agent never bootstraps through done=True).
    """

    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    done: bool
    episode_id: int
    step_index: int


@dataclass
class TransitionBatch:
    """Column arrays for a sampled minibatch (copies, safe to mutate)."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    dones: np.ndarray

    def __len__(self):
        return self.states.shape[0]


class ReplayBuffer:
    """Bounded ring of transitions with hindsight goal relabeling.

    reward_fn(achieved, desired) -> (rewards, dones) recomputes the sparse
    reward rule for relabeled goals; both arguments are (B, goal_dim).
    """

    def __init__(self, capacity, state_dim, action_dim, goal_dim, reward_fn):
        if capacity < 1:
            raise ValueError(f"capacity must be positive, got {capacity}")
        if state_dim < 2 * goal_dim or goal_dim < 1:
            raise ValueError(
                f"state_dim {state_dim} cannot hold two goal slices of {goal_dim}"
            )
        self.capacity = int(capacity)
        self.state_dim = int(state_dim)
        self.action_dim = int(action_dim)
        self.goal_dim = int(goal_dim)
        self.reward_fn = reward_fn
        self._states = np.zeros((capacity, state_dim))
        self._actions = np.zeros((capacity, action_dim))
        self._rewards = np.zeros(capacity)
        self._next_states = np.zeros((capacity, state_dim))
        self._dones = np.zeros(capacity, dtype=bool)
        self._episode_ids = np.full(capacity, -1, dtype=np.int64)
        self._step_indices = np.zeros(capacity, dtype=np.int64)
        # absolute (monotone) index of the last transition pushed so far for
        # the episode each slot belongs to; drives future-step relabeling
        self._ep_end_abs = np.full(capacity, -1, dtype=np.int64)
        self._ep_start_abs = 0
        self._total = 0

    @property
    def size(self):
        return min(self._total, self.capacity)

    def __len__(self):
        return self.size

    def _achieved(self, states):
        g = self.goal_dim
        return states[..., self.state_dim - 2 * g:self.state_dim - g]

    def _desired_slice(self):
        return slice(self.state_dim - self.goal_dim, self.state_dim)

    def push(self, t: Transition):
        """Append one transition; evicts the oldest once full."""
        state = np.asarray(t.state, dtype=np.float64)
        next_state = np.asarray(t.next_state, dtype=np.float64)
        action = np.asarray(t.action, dtype=np.float64)
        if state.shape != (self.state_dim,) or next_state.shape != (self.state_dim,):
            raise ShapeError(
                f"state widths {state.shape}/{next_state.shape}, "
                f"buffer expects ({self.state_dim},)"
            )
        if action.shape != (self.action_dim,):
            raise ShapeError(
                f"action width {action.shape}, buffer expects ({self.action_dim},)"
            )
        a = self._total
        slot = a % self.capacity
        prev = (a - 1) % self.capacity
        new_episode = a == 0 or t.episode_id != int(self._episode_ids[prev])
        if new_episode:
            if t.step_index != 0:
                raise ValueError(
                    f"episode {t.episode_id} starts at step_index {t.step_index}, expected 0"
                )
            self._ep_start_abs = a
        else:
            if t.step_index != int(self._step_indices[prev]) + 1:
                raise ValueError(
                    f"episode {t.episode_id} step_index {t.step_index} is not "
                    f"contiguous after {int(self._step_indices[prev])}"
                )
        self._states[slot] = state
        self._actions[slot] = action
        self._rewards[slot] = float(t.reward)
        self._next_states[slot] = next_state
        self._dones[slot] = bool(t.done)
        self._episode_ids[slot] = int(t.episode_id)
        self._step_indices[slot] = int(t.step_index)
        # refresh the episode extent on every still-stored slot of the open
        # episode (earlier steps may already be evicted)
        lo = max(self._ep_start_abs, a - self.capacity + 1)
        ep_slots = np.arange(lo, a + 1) % self.capacity
        self._ep_end_abs[ep_slots] = a
        self._total = a + 1

    def episode_boundaries(self):
        """Absolute indices one past the last stored step of each episode."""
        if self._total == 0:
            return []
        lo = self._total - self.size
        valid = np.arange(lo, self._total) % self.capacity
        return sorted(set(int(e) + 1 for e in self._ep_end_abs[valid]))

    def sample(self, batch_size, her_ratio, rng):
        """Uniform sample with replacement; relabels a her_ratio fraction.

        Relabeled items get their desired-goal slice (in both state and
        next_state) replaced by the achieved goal after a uniformly chosen
        step at-or-after their own within the same episode, with reward and
        done recomputed by reward_fn.
        """
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        if not 0.0 <= her_ratio <= 1.0:
            raise ValueError(f"her_ratio must be in [0,1], got {her_ratio}")
        lo = self._total - self.size
        abs_idx = rng.integers(lo, self._total, size=batch_size)
        slots = abs_idx % self.capacity
        # advanced indexing materializes fresh arrays: safe for callers to edit
        batch = TransitionBatch(
            states=self._states[slots],
            actions=self._actions[slots],
            rewards=self._rewards[slots],
            next_states=self._next_states[slots],
            dones=self._dones[slots],
        )
        mask = rng.random(batch_size) < her_ratio
        if mask.any():
            own = abs_idx[mask]
            future_abs = rng.integers(own, self._ep_end_abs[slots[mask]] + 1)
            new_goal = self._achieved(self._next_states[future_abs % self.capacity])
            ds = self._desired_slice()
            batch.states[mask, ds] = new_goal
            batch.next_states[mask, ds] = new_goal
            rew, done = self.reward_fn(self._achieved(batch.next_states[mask]), new_goal)
            batch.rewards[mask] = rew
            batch.dones[mask] = done
        return batch


class ExpertBuffer:
    """Immutable store of demonstrated consecutive state pairs.

    states[i] -> next_states[i] within episode episode_ids[i]; actions are
    present only for action-labeled demonstrations.
    """

    def __init__(self, states, next_states, episode_ids, state_dim, actions=None):
        states = np.ascontiguousarray(states, dtype=np.float64).reshape(-1, state_dim)
        next_states = np.ascontiguousarray(next_states, dtype=np.float64).reshape(
            -1, state_dim
        )
        episode_ids = np.asarray(episode_ids, dtype=np.int64)
        if states.shape != next_states.shape or states.shape[0] != episode_ids.shape[0]:
            raise ShapeError(
                f"inconsistent record arrays: {states.shape}, {next_states.shape}, "
                f"{episode_ids.shape}"
            )
        if actions is not None:
            actions = np.ascontiguousarray(actions, dtype=np.float64)
            if actions.ndim != 2 or actions.shape[0] != states.shape[0]:
                raise ShapeError(
                    f"actions shape {actions.shape} does not match {states.shape[0]} records"
                )
            actions.setflags(write=False)
        self.states = states
        self.next_states = next_states
        self.episode_ids = episode_ids
        self.actions = actions
        self.state_dim = int(state_dim)
        self._pairs = None
        for arr in (self.states, self.next_states, self.episode_ids):
            arr.setflags(write=False)

    @classmethod
    def from_episodes(cls, episodes, state_dim, actions=None, episode_ids=None):
        """Build pair records from whole-episode state arrays.

        episodes: list of (len_i, state_dim) arrays, len_i >= 1; episode i
        contributes len_i - 1 chained pairs. actions, when given, is a
        matching list of (len_i - 1, action_dim) arrays.
        """
        if episode_ids is None:
            episode_ids = range(len(episodes))
        if actions is not None and len(actions) != len(episodes):
            raise ShapeError(
                f"{len(actions)} action blocks for {len(episodes)} episodes"
            )
        cur, nxt, ids, acts = [], [], [], []
        for eid, ep in zip(episode_ids, episodes):
            ep = np.asarray(ep, dtype=np.float64)
            if ep.ndim != 2 or ep.shape[1] != state_dim:
                raise ShapeError(
                    f"episode {eid} has shape {ep.shape}, expected (*, {state_dim})"
                )
            cur.append(ep[:-1])
            nxt.append(ep[1:])
            ids.append(np.full(max(len(ep) - 1, 0), eid, dtype=np.int64))
        if actions is not None:
            for eid, (ep, act) in enumerate(zip(episodes, actions)):
                act = np.asarray(act, dtype=np.float64)
                if act.shape[0] != len(ep) - 1:
                    raise ShapeError(
                        f"episode {eid}: {act.shape[0]} actions for {len(ep)} states"
                    )
                acts.append(act)
        empty = np.zeros((0, state_dim))
        return cls(
            np.concatenate(cur) if cur else empty,
            np.concatenate(nxt) if nxt else empty,
            np.concatenate(ids) if ids else np.zeros(0, dtype=np.int64),
            state_dim,
            actions=np.concatenate(acts) if acts else None,
        )

    @property
    def n_records(self):
        return self.states.shape[0]

    @property
    def pair_vectors(self):
        """Concatenated (state ⊕ next_state) rows, built once and frozen."""
        if self._pairs is None:
            self._pairs = np.hstack([self.states, self.next_states])
            self._pairs.setflags(write=False)
        return self._pairs

    def __len__(self):
        return self.n_records


def knn_indices(expert, queries, k, scale=None):
    """Exact k-nearest records for a batch of queries.

    Returns (idx, d2), both (B, k), ascending by squared Euclidean distance
    with ties broken by lower record index. scale, when given, weights each
    state dimension before the distance.
    """
    queries = np.ascontiguousarray(queries, dtype=np.float64)
    if queries.ndim != 2 or queries.shape[1] != expert.state_dim:
        raise ShapeError(
            f"queries shape {queries.shape}, expected (*, {expert.state_dim})"
        )
    if k < 1 or k > expert.n_records:
        raise ValueError(
            f"k={k} out of range for expert buffer with {expert.n_records} records"
        )
    points = expert.states
    if scale is not None:
        scale = np.asarray(scale, dtype=np.float64)
        if scale.shape != (expert.state_dim,):
            raise ShapeError(f"scale shape {scale.shape}, expected ({expert.state_dim},)")
        if not (np.isfinite(scale).all() and (scale > 0).all()):
            raise ValueError("scale entries must be finite and positive")
        points = np.ascontiguousarray(points * scale)
        queries = np.ascontiguousarray(queries * scale)
    return _kernels.knn_topk(points, queries, int(k))


def knn_query(expert, query, k, scale=None):
    """Nearest records for one query state.

    Returns (states, next_states, d2): the k records ascending by squared
    distance, ties toward the lower record index.
    """
    query = np.asarray(query, dtype=np.float64)
    if query.shape != (expert.state_dim,):
        raise ShapeError(f"query shape {query.shape}, expected ({expert.state_dim},)")
    idx, d2 = knn_indices(expert, query[None, :], k, scale=scale)
    return expert.states[idx[0]], expert.next_states[idx[0]], d2[0]


_HEADER_RE = re.compile(r"^ssil-demo v1 state_dim=(\d+)$")
_EPISODE_RE = re.compile(r"^episode (-?\d+) len=(\d+)$")


def _format_floats(vec):
    return " ".join(repr(float(v)) for v in vec)


def save_demos(path, episodes, actions=None, episode_ids=None):
    """Write demonstration episodes in the line-oriented demo format.

    Header `ssil-demo v1 state_dim=<d>`, then per episode a line
    `episode <id> len=<n>` followed by n state lines of d floats. When
    actions is given, an `action <floats>` line follows every non-final
    state line. Floats are written with repr so loading is value-exact.
    """
    if not episodes:
        raise ValueError("no episodes to save")
    eps = [np.asarray(e, dtype=np.float64) for e in episodes]
    d = eps[0].shape[1]
    if episode_ids is None:
        episode_ids = range(len(eps))
    if actions is not None and len(actions) != len(eps):
        raise ShapeError(f"{len(actions)} action blocks for {len(eps)} episodes")
    lines = [f"ssil-demo v1 state_dim={d}"]
    for i, (eid, ep) in enumerate(zip(episode_ids, eps)):
        if ep.ndim != 2 or ep.shape[1] != d:
            raise ShapeError(f"episode {eid} has shape {ep.shape}, expected (*, {d})")
        lines.append(f"episode {eid} len={ep.shape[0]}")
        acts = None
        if actions is not None:
            acts = np.asarray(actions[i], dtype=np.float64)
            if acts.shape[0] != ep.shape[0] - 1:
                raise ShapeError(
                    f"episode {eid}: {acts.shape[0]} actions for {ep.shape[0]} states"
                )
        for j in range(ep.shape[0]):
            lines.append(_format_floats(ep[j]))
            if acts is not None and j < ep.shape[0] - 1:
                lines.append("action " + _format_floats(acts[j]))
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp, path)


def _parse_floats(tokens, width, lineno, what):
    if len(tokens) != width:
        raise DemoFormatError(
            f"line {lineno}: {what} has {len(tokens)} values, expected {width}"
        )
    try:
        vals = [float(tok) for tok in tokens]
    except ValueError as exc:
        raise DemoFormatError(f"line {lineno}: {exc}") from None
    if not all(np.isfinite(vals)):
        raise DemoFormatError(f"line {lineno}: non-finite value in {what}")
    return vals


def load_demos(path):
    """Parse a demo file into an ExpertBuffer (with actions if labeled)."""
    with open(path) as fh:
        raw = fh.read().splitlines()
    lines = [(no, ln.strip()) for no, ln in enumerate(raw, start=1) if ln.strip()]
    if not lines:
        raise DemoFormatError("line 1: empty file, expected ssil-demo header")
    no, header = lines[0]
    m = _HEADER_RE.match(header)
    if not m:
        raise DemoFormatError(f"line {no}: bad header {header!r}")
    d = int(m.group(1))
    if d < 1:
        raise DemoFormatError(f"line {no}: state_dim must be positive")
    episodes, ep_actions, episode_ids = [], [], []
    action_width = None
    has_actions = None
    pos = 1
    while pos < len(lines):
        ep_no, ln = lines[pos]
        m = _EPISODE_RE.match(ln)
        if not m:
            raise DemoFormatError(
                f"line {ep_no}: expected 'episode <id> len=<n>', got {ln!r}"
            )
        eid, n = int(m.group(1)), int(m.group(2))
        if n < 1:
            raise DemoFormatError(f"line {ep_no}: episode length must be >= 1")
        pos += 1
        states = np.empty((n, d))
        acts = []
        for j in range(n):
            if pos >= len(lines):
                raise DemoFormatError(
                    f"line {lines[-1][0]}: episode {eid} truncated at state {j} of {n}"
                )
            no, ln = lines[pos]
            if ln.startswith("episode ") or ln.startswith("action "):
                raise DemoFormatError(
                    f"line {no}: expected state {j} of episode {eid}, got {ln!r}"
                )
            states[j] = _parse_floats(ln.split(), d, no, "state")
            pos += 1
            if pos < len(lines) and lines[pos][1].startswith("action "):
                no2, ln2 = lines[pos]
                if j == n - 1:
                    raise DemoFormatError(
                        f"line {no2}: action after final state of episode {eid}"
                    )
                toks = ln2.split()[1:]
                if not toks:
                    raise DemoFormatError(f"line {no2}: empty action line")
                if action_width is None:
                    action_width = len(toks)
                acts.append(_parse_floats(toks, action_width, no2, "action"))
                pos += 1
        if len(acts) not in (0, n - 1):
            raise DemoFormatError(
                f"line {ep_no}: episode {eid} has {len(acts)} action lines "
                f"for {n} states, expected 0 or {n - 1}"
            )
        if n > 1:  # single-state episodes are compatible with either layout
            ep_labeled = len(acts) == n - 1
            if has_actions is None:
                has_actions = ep_labeled
            elif has_actions != ep_labeled:
                raise DemoFormatError(
                    f"line {ep_no}: episode {eid} mixes action-labeled and "
                    f"state-only episodes in one file"
                )
        episodes.append(states)
        episode_ids.append(eid)
        ep_actions.append(
            np.asarray(acts) if acts else np.zeros((0, action_width or 0))
        )
    if has_actions is None:
        has_actions = False
    if has_actions:
        ep_actions = [
            a if a.shape[0] else np.zeros((0, action_width)) for a in ep_actions
        ]
    return ExpertBuffer.from_episodes(
        episodes,
        d,
        actions=ep_actions if has_actions else None,
        episode_ids=episode_ids,
    )
