"""Actor-critic reinforcement learning guided by state-only demonstrations.

A query state is matched to its nearest demonstrated states and labeled
with the target actor's mean action there; the label regularizes both the
actor objective and the bootstrapped critic target. Ships with toy
goal-conditioned manipulation tasks, scripted experts, and a seeded
experiment harness.
"""

from ._kernels import active_backend, set_backend

__version__ = "0.1.0"

__all__ = ["active_backend", "set_backend", "__version__"]
