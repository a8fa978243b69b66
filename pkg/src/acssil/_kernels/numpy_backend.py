"""Pure-NumPy implementations of the hot kernels.

This is the fallback backend: same semantics as the compiled extension
(`_fastcore`), selected at import time when the extension is unavailable.
All arrays are float64 and C-contiguous.
"""

import numpy as np

SQUASH_IDENTITY = 0
SQUASH_TANH = 1

name = "numpy"


def mlp_forward(weights, biases, x, squash_kind, squash_scale):
    """Affine + ReLU chain with a configurable output squash.

    Returns (y, activations) where activations[l] is the input to layer l
    (activations[0] is x itself). Hidden layers apply ReLU; the output
    layer applies identity or scale*tanh.
    """
    a = x
    acts = [x]
    last = len(weights) - 1
    for l in range(last):
        z = a @ weights[l].T + biases[l]
        a = np.maximum(z, 0.0)
        acts.append(a)
    z = a @ weights[last].T + biases[last]
    if squash_kind == SQUASH_TANH:
        y = squash_scale * np.tanh(z)
    else:
        y = z
    return y, acts


def mlp_backward(weights, acts, y, dy, squash_kind, squash_scale):
    """Backpropagate dy through the chain recorded by mlp_forward.

    Returns (dws, dbs, dx): parameter gradients summed over the batch and
    the per-sample gradient with respect to the input.
    """
    if squash_kind == SQUASH_TANH:
        # y = s*tanh(z)  =>  dy/dz = s*(1 - tanh(z)^2) = s - y^2/s
        dz = dy * (squash_scale - (y * y) / squash_scale)
    else:
        dz = dy
    n = len(weights)
    dws = [None] * n
    dbs = [None] * n
    da = None
    for l in range(n - 1, -1, -1):
        a_in = acts[l]
        dws[l] = dz.T @ a_in
        dbs[l] = dz.sum(axis=0)
        da = dz @ weights[l]
        if l > 0:
            dz = da * (acts[l] > 0)
    return dws, dbs, da


def all_finite(x):
    """1 when every element is finite, else 0."""
    return int(np.isfinite(x).all())


def adam_update(param, grad, m, v, t, lr, beta1, beta2, eps):
    """One bias-corrected Adam update, in place on param/m/v. t is the
    post-increment step count (>= 1). Returns 1 when the updated
    parameters are all finite, 0 otherwise."""
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * (grad * grad)
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    param -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return int(np.isfinite(param).all())


def soft_update_arrays(target, source, tau):
    """target <- tau*source + (1-tau)*target, in place."""
    target[:] = tau * source + (1.0 - tau) * target


def knn_topk(points, queries, k):
    """Exact k-nearest-neighbour search under squared Euclidean distance.

    points: (N, D), queries: (B, D). Returns (idx, d2), both (B, k),
    ascending by distance with ties broken by lower point index.
    """
    n = points.shape[0]
    b = queries.shape[0]
    if k < 1 or k > n:
        raise ValueError(f"k={k} out of range for {n} points")
    d2 = np.empty((b, n), dtype=np.float64)
    # chunk over points to bound the (B, chunk) temporaries; accumulate one
    # dimension at a time so the rounding sequence matches a scalar loop
    # (keeps distance ties bitwise identical across backends)
    chunk = max(1, 4_000_000 // max(1, b))
    for s in range(0, n, chunk):
        e = min(n, s + chunk)
        acc = np.zeros((b, e - s), dtype=np.float64)
        for j in range(points.shape[1]):
            diff = queries[:, j, None] - points[None, s:e, j]
            acc += diff * diff
        d2[:, s:e] = acc
    idx = np.empty((b, k), dtype=np.int64)
    out_d2 = np.empty((b, k), dtype=np.float64)
    for i in range(b):
        order = np.argsort(d2[i], kind="stable")[:k]
        idx[i] = order
        out_d2[i] = d2[i, order]
    return idx, out_d2
