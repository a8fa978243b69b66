"""Pseudo-action labels from state-only demonstrations.

A query state is labeled with the mean target-actor action over its K
nearest demonstrated states. Labels are constants: nothing here
participates in any gradient computation, and labeling always goes through
the target actor (using the live actor destabilizes training).
"""

from dataclasses import dataclass

import numpy as np

from . import nn
from .buffers import knn_indices
from .errors import ShapeError

WEIGHT_EPS = 1e-8


@dataclass
class SsilConfig:
    """Neighbour count, penalty weight, and retrieval options."""

    k: int = 5
    alpha: float = 5.0
    weighted: bool = False  # inverse-distance weighting instead of plain mean
    scale: np.ndarray = None  # optional per-dimension KNN weights

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")


def pseudo_action_batch(expert, target_actor, query_states, k,
                        weighted=False, scale=None):
    """Pseudo labels for a batch of query states, shape (B, action_dim).

    Each row is the (optionally inverse-distance weighted) mean of the
    target actor's outputs on the k demonstrated states nearest the query.
    """
    query_states = np.asarray(query_states, dtype=np.float64)
    if query_states.ndim != 2:
        raise ShapeError(f"query_states must be 2-D, got {query_states.shape}")
    idx, d2 = knn_indices(expert, query_states, k, scale=scale)
    b = query_states.shape[0]
    neighbours = expert.states[idx.ravel()]
    actions, _ = nn.mlp_forward(target_actor, neighbours)
    actions = actions.reshape(b, k, -1)
    if not weighted:
        return actions.mean(axis=1)
    w = 1.0 / (np.sqrt(d2) + WEIGHT_EPS)
    w /= w.sum(axis=1, keepdims=True)
    return (actions * w[:, :, None]).sum(axis=1)


def pseudo_action(expert, target_actor, query_state, k, weighted=False, scale=None):
    """Pseudo label for one query state, shape (action_dim,)."""
    query_state = np.asarray(query_state, dtype=np.float64)
    if query_state.shape != (expert.state_dim,):
        raise ShapeError(
            f"query shape {query_state.shape}, expected ({expert.state_dim},)"
        )
    return pseudo_action_batch(
        expert, target_actor, query_state[None, :], k, weighted=weighted, scale=scale
    )[0]


def action_distance(a, b):
    """Euclidean (non-squared) distance between two action vectors."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ShapeError(f"action shapes {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b))


def ssil_actor_penalty(actor_actions, pseudo_labels, alpha):
    """Penalty alpha * mean_i ||a_i - label_i||^2 and its exact action gradient.

    The squared form makes the pull proportional to the deviation: a policy
    already consistent with its labels feels no force, so the value term
    stays in charge early in training instead of being drowned out by a
    constant-magnitude drag.
    """
    actor_actions = np.asarray(actor_actions, dtype=np.float64)
    pseudo_labels = np.asarray(pseudo_labels, dtype=np.float64)
    if actor_actions.shape != pseudo_labels.shape or actor_actions.ndim != 2:
        raise ShapeError(
            f"batch shapes {actor_actions.shape} vs {pseudo_labels.shape}"
        )
    batch = actor_actions.shape[0]
    if alpha == 0.0:
        return 0.0, np.zeros_like(actor_actions)
    diff = actor_actions - pseudo_labels
    penalty = alpha * float((diff * diff).sum(axis=1).mean())
    grad = (2.0 * alpha / batch) * diff
    return penalty, grad
