"""Independent reference computations used as test oracles.

These deliberately avoid the library's kernel code paths: plain Python
loops and central finite differences only.
"""

import numpy as np

from acssil import nn


def naive_forward(params, x):
    """Straight-line re-computation of the affine+ReLU chain, one sample
    and one output unit at a time."""
    outs = []
    n_layers = len(params.weights)
    for s in range(x.shape[0]):
        a = [float(v) for v in x[s]]
        for l, (w, b) in enumerate(zip(params.weights, params.biases)):
            z = []
            for o in range(w.shape[0]):
                acc = float(b[o])
                for i in range(w.shape[1]):
                    acc += float(w[o, i]) * a[i]
                z.append(acc)
            if l < n_layers - 1:
                a = [max(v, 0.0) for v in z]
            elif params.squash == "tanh":
                a = [params.squash_scale * np.tanh(v) for v in z]
            else:
                a = z
        outs.append(a)
    return np.array(outs)


def fd_param_grads(params, x, output_grad, h=1e-5):
    """Central finite differences of sum(forward(params, x) * output_grad)
    with respect to every parameter entry."""
    grads = []
    for arr in params.arrays():
        g = np.zeros_like(arr)
        flat = arr.ravel()
        gflat = g.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            yp, _ = nn.mlp_forward(params, x)
            flat[i] = orig - h
            ym, _ = nn.mlp_forward(params, x)
            flat[i] = orig
            gflat[i] = float(((yp - ym) * output_grad).sum()) / (2.0 * h)
        grads.append(g)
    return grads


def fd_input_grad(params, x, output_grad, h=1e-5):
    """Central finite differences with respect to each input entry."""
    g = np.zeros_like(x)
    xw = x.copy()
    for s in range(x.shape[0]):
        for i in range(x.shape[1]):
            orig = xw[s, i]
            xw[s, i] = orig + h
            yp, _ = nn.mlp_forward(params, xw)
            xw[s, i] = orig - h
            ym, _ = nn.mlp_forward(params, xw)
            xw[s, i] = orig
            g[s, i] = float(((yp - ym) * output_grad).sum()) / (2.0 * h)
    return g


def assert_rel_close(actual, expected, rtol=1e-4, atol=1e-7):
    actual = np.asarray(actual)
    expected = np.asarray(expected)
    denom = np.maximum(np.abs(actual), np.abs(expected))
    err = np.abs(actual - expected)
    ok = err <= rtol * denom + atol
    assert ok.all(), (
        f"max rel err {np.max(err / np.maximum(denom, 1e-300)):.3e}, "
        f"max abs err {err.max():.3e}"
    )


def brute_force_knn(points, query, k):
    """Exhaustive scan: squared distances accumulated one dimension at a
    time (the kernels' rounding order), stable sort, first k."""
    d2 = np.zeros(points.shape[0], dtype=np.float64)
    for j in range(points.shape[1]):
        diff = points[:, j] - query[j]
        d2 += diff * diff
    order = np.argsort(d2, kind="stable")[:k]
    return order, d2[order]
