"""Minimal fully-connected networks with exact analytic gradients.

Weights are stored per layer as (out, in) float64 matrices. Hidden layers
use ReLU; the output layer applies either identity or a tanh scaled to a
configurable bound (used to keep policy actions in range). Training math
runs entirely in double precision.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import NumericError, ShapeError

SQUASHES = {"identity": _kernels.SQUASH_IDENTITY, "tanh": _kernels.SQUASH_TANH}


@dataclass
class MlpParams:
    """Weights, biases and output-squash configuration of one network."""

    layer_dims: list
    weights: list
    biases: list
    squash: str = "identity"
    squash_scale: float = 1.0

    @property
    def input_dim(self):
        return self.layer_dims[0]

    @property
    def output_dim(self):
        return self.layer_dims[-1]

    def copy(self):
        return MlpParams(
            layer_dims=list(self.layer_dims),
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            squash=self.squash,
            squash_scale=self.squash_scale,
        )

    def arrays(self):
        """All parameter arrays, weights-then-bias per layer."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out


@dataclass
class MlpGrads:
    """Parameter gradients shaped like an MlpParams (summed over the batch)."""

    weights: list
    biases: list

    def arrays(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def add_(self, other):
        for a, b in zip(self.arrays(), other.arrays()):
            a += b
        return self

    def scale_(self, factor):
        for a in self.arrays():
            a *= factor
        return self


@dataclass
class ForwardCache:
    """Per-layer inputs recorded by mlp_forward, consumed by mlp_backward."""

    activations: list
    output: np.ndarray
    layer_dims: tuple


@dataclass
class AdamState:
    """First/second moment estimates and the shared step counter."""

    m: list
    v: list
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params, beta1=0.9, beta2=0.999, eps=1e-8):
        arrays = params.arrays()
        return cls(
            m=[np.zeros_like(a) for a in arrays],
            v=[np.zeros_like(a) for a in arrays],
            beta1=beta1,
            beta2=beta2,
            eps=eps,
        )


def mlp_init(layer_dims, output_squash="identity", seed=0, squash_scale=1.0):
    """Build an MLP with uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights
    and zero biases. Deterministic in `seed`."""
    dims = [int(d) for d in layer_dims]
    if len(dims) < 2:
        raise ValueError(f"need at least input and output widths, got {dims}")
    if any(d <= 0 for d in dims):
        raise ValueError(f"layer widths must be positive, got {dims}")
    if output_squash not in SQUASHES:
        raise ValueError(f"unknown output squash {output_squash!r}")
    rng = np.random.default_rng(seed)
    weights = []
    biases = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpParams(dims, weights, biases, output_squash, float(squash_scale))


def mlp_forward(params, x):
    """Run a batch (B, in) through the network; returns (output, cache)."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.input_dim:
        raise ShapeError(
            f"input shape {x.shape} incompatible with input width {params.input_dim}"
        )
    y, acts = _kernels.mlp_forward(
        params.weights, params.biases, x, SQUASHES[params.squash], params.squash_scale
    )
    return y, ForwardCache(acts, y, tuple(params.layer_dims))


def mlp_backward(params, cache, output_grad):
    """Exact gradients of sum(output * output_grad) via backprop.

    Parameter gradients are summed over the batch; the returned input
    gradient is per sample, shape (B, in).
    """
    if cache.layer_dims != tuple(params.layer_dims):
        raise ShapeError(
            f"cache built for dims {cache.layer_dims}, params have {tuple(params.layer_dims)}"
        )
    output_grad = np.ascontiguousarray(output_grad, dtype=np.float64)
    if output_grad.shape != cache.output.shape:
        raise ShapeError(
            f"output_grad shape {output_grad.shape} != output shape {cache.output.shape}"
        )
    dws, dbs, dx = _kernels.mlp_backward(
        params.weights,
        cache.activations,
        cache.output,
        output_grad,
        SQUASHES[params.squash],
        params.squash_scale,
    )
    return MlpGrads(dws, dbs), dx


def adam_step(params, grads, state, lr):
    """One bias-corrected Adam update, in place on params and state.

    Every gradient array is validated before anything mutates; a non-finite
    gradient rejects the whole step.
    """
    if lr <= 0.0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    p_arrays = params.arrays()
    g_arrays = [np.ascontiguousarray(g) for g in grads.arrays()]
    if len(p_arrays) != len(state.m):
        raise ShapeError("optimizer state does not match parameter count")
    for p, g in zip(p_arrays, g_arrays):
        if p.shape != g.shape:
            raise ShapeError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        if not _kernels.all_finite(g.ravel()):
            raise NumericError("non-finite gradient; update rejected")
    state.step_count += 1
    ok = 1
    for p, g, m, v in zip(p_arrays, g_arrays, state.m, state.v):
        ok &= _kernels.adam_update(
            p.ravel(), g.ravel(), m.ravel(), v.ravel(),
            state.step_count, lr, state.beta1, state.beta2, state.eps,
        )
    if not ok:
        raise NumericError("parameters became non-finite after update")


def soft_update(target, source, tau):
    """target <- tau*source + (1-tau)*target, elementwise over all arrays."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must lie in [0, 1], got {tau}")
    if tuple(target.layer_dims) != tuple(source.layer_dims):
        raise ShapeError(
            f"architecture mismatch: {target.layer_dims} vs {source.layer_dims}"
        )
    for t, s in zip(target.arrays(), source.arrays()):
        _kernels.soft_update_arrays(t.ravel(), s.ravel(), tau)


CHECKPOINT_VERSION = 1


def save_params(params, path):
    """Write a versioned, value-exact checkpoint (npz)."""
    payload = {
        "format_version": np.int64(CHECKPOINT_VERSION),
        "layer_dims": np.asarray(params.layer_dims, dtype=np.int64),
        "squash": np.str_(params.squash),
        "squash_scale": np.float64(params.squash_scale),
    }
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        payload[f"w{i}"] = w
        payload[f"b{i}"] = b
    with open(path, "wb") as fh:
        np.savez(fh, **payload)


def load_params(path):
    with np.load(path, allow_pickle=False) as data:
        version = int(data["format_version"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        dims = [int(d) for d in data["layer_dims"]]
        weights = [np.ascontiguousarray(data[f"w{i}"], dtype=np.float64) for i in range(len(dims) - 1)]
        biases = [np.ascontiguousarray(data[f"b{i}"], dtype=np.float64) for i in range(len(dims) - 1)]
        return MlpParams(dims, weights, biases, str(data["squash"]), float(data["squash_scale"]))
