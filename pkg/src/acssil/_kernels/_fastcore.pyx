# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: fused MLP forward/backward (BLAS-backed), Adam,
soft updates, and exact top-k nearest-neighbour search.

Semantics mirror numpy_backend; see that module for the reference forms.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport tanh, sqrt, INFINITY
from scipy.linalg.cython_blas cimport dgemm

SQUASH_IDENTITY = 0
SQUASH_TANH = 1

name = "cython"


cdef void _gemm_x_wt(const double[:, ::1] x, const double[:, ::1] w,
                     double[:, ::1] z) noexcept nogil:
    # z(B,O) += x(B,I) @ w(O,I)^T ; z must be pre-filled (bias or zeros)
    cdef int b = x.shape[0], i = x.shape[1], o = w.shape[0]
    cdef double one = 1.0
    cdef char tt = b'T', tn = b'N'
    dgemm(&tt, &tn, &o, &b, &i, &one, <double*><void*>&w[0, 0], &i,
          <double*><void*>&x[0, 0], &i, &one, &z[0, 0], &o)


cdef void _gemm_dzt_a(const double[:, ::1] dz, const double[:, ::1] a,
                      double[:, ::1] dw) noexcept nogil:
    # dw(O,I) = dz(B,O)^T @ a(B,I)
    cdef int b = dz.shape[0], o = dz.shape[1], i = a.shape[1]
    cdef double one = 1.0, zero = 0.0
    cdef char tt = b'T', tn = b'N'
    dgemm(&tn, &tt, &i, &o, &b, &one, <double*><void*>&a[0, 0], &i,
          <double*><void*>&dz[0, 0], &o, &zero, &dw[0, 0], &i)


cdef void _gemm_dz_w(const double[:, ::1] dz, const double[:, ::1] w,
                     double[:, ::1] da) noexcept nogil:
    # da(B,I) = dz(B,O) @ w(O,I)
    cdef int b = dz.shape[0], o = dz.shape[1], i = w.shape[1]
    cdef double one = 1.0, zero = 0.0
    cdef char tn = b'N'
    dgemm(&tn, &tn, &i, &b, &o, &one, <double*><void*>&w[0, 0], &i,
          <double*><void*>&dz[0, 0], &o, &zero, &da[0, 0], &i)


cdef void _fill_bias(double[:, ::1] z, const double[::1] bias) noexcept nogil:
    cdef Py_ssize_t i, j
    for i in range(z.shape[0]):
        for j in range(z.shape[1]):
            z[i, j] = bias[j]


cdef void _relu_inplace(double[:, ::1] z) noexcept nogil:
    cdef Py_ssize_t i, j
    for i in range(z.shape[0]):
        for j in range(z.shape[1]):
            if z[i, j] < 0.0:
                z[i, j] = 0.0


cdef void _tanh_scale_inplace(double[:, ::1] z, double scale) noexcept nogil:
    cdef Py_ssize_t i, j
    for i in range(z.shape[0]):
        for j in range(z.shape[1]):
            z[i, j] = scale * tanh(z[i, j])


cdef void _mask_relu_inplace(double[:, ::1] da, const double[:, ::1] act) noexcept nogil:
    # ReLU pass-through mask; act is the post-activation (act > 0 <=> pre > 0)
    cdef Py_ssize_t i, j
    for i in range(da.shape[0]):
        for j in range(da.shape[1]):
            if act[i, j] <= 0.0:
                da[i, j] = 0.0


def mlp_forward(list weights, list biases, cnp.ndarray x, int squash_kind, double squash_scale):
    cdef int last = len(weights) - 1
    cdef int l
    cdef cnp.ndarray a = x, z
    acts = [x]
    for l in range(last):
        z = np.empty((a.shape[0], (<cnp.ndarray> weights[l]).shape[0]), dtype=np.float64)
        _fill_bias(z, biases[l])
        _gemm_x_wt(a, weights[l], z)
        _relu_inplace(z)
        a = z
        acts.append(a)
    z = np.empty((a.shape[0], (<cnp.ndarray> weights[last]).shape[0]), dtype=np.float64)
    _fill_bias(z, biases[last])
    _gemm_x_wt(a, weights[last], z)
    if squash_kind == SQUASH_TANH:
        _tanh_scale_inplace(z, squash_scale)
    return z, acts


cdef void _dz_from_tanh(const double[:, ::1] dy, const double[:, ::1] y,
                        double scale, double[:, ::1] dz) noexcept nogil:
    cdef Py_ssize_t i, j
    for i in range(dy.shape[0]):
        for j in range(dy.shape[1]):
            dz[i, j] = dy[i, j] * (scale - (y[i, j] * y[i, j]) / scale)


cdef void _colsum(const double[:, ::1] dz, double[::1] db) noexcept nogil:
    cdef Py_ssize_t i, j
    for j in range(dz.shape[1]):
        db[j] = 0.0
    for i in range(dz.shape[0]):
        for j in range(dz.shape[1]):
            db[j] += dz[i, j]


def mlp_backward(list weights, list acts, cnp.ndarray y, cnp.ndarray dy,
                 int squash_kind, double squash_scale):
    cdef int n = len(weights)
    cdef int l
    cdef cnp.ndarray dz, da, dw, db
    if squash_kind == SQUASH_TANH:
        dz = np.empty_like(dy)
        _dz_from_tanh(dy, y, squash_scale, dz)
    else:
        dz = dy
    dws = [None] * n
    dbs = [None] * n
    da = None
    for l in range(n - 1, -1, -1):
        dw = np.empty_like(weights[l])
        db = np.empty((<cnp.ndarray> weights[l]).shape[0], dtype=np.float64)
        _gemm_dzt_a(dz, acts[l], dw)
        _colsum(dz, db)
        dws[l] = dw
        dbs[l] = db
        da = np.empty((dz.shape[0], (<cnp.ndarray> weights[l]).shape[1]), dtype=np.float64)
        _gemm_dz_w(dz, weights[l], da)
        if l > 0:
            _mask_relu_inplace(da, acts[l])
            dz = da
    return dws, dbs, da


def all_finite(const double[::1] x):
    # x - x is 0.0 for finite values, NaN for NaN and infinities
    cdef Py_ssize_t i
    cdef int ok = 1
    with nogil:
        for i in range(x.shape[0]):
            if x[i] - x[i] != 0.0:
                ok = 0
                break
    return ok


def adam_update(double[::1] param, const double[::1] grad, double[::1] m,
                double[::1] v, long t, double lr, double beta1, double beta2,
                double eps):
    # returns 1 when every updated parameter is finite, 0 otherwise
    cdef Py_ssize_t i
    cdef double c1 = 1.0 - beta1 ** t
    cdef double c2 = 1.0 - beta2 ** t
    cdef double p
    cdef int ok = 1
    with nogil:
        for i in range(param.shape[0]):
            m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i]
            v[i] = beta2 * v[i] + (1.0 - beta2) * (grad[i] * grad[i])
            p = param[i] - lr * (m[i] / c1) / (sqrt(v[i] / c2) + eps)
            param[i] = p
            if p - p != 0.0:
                ok = 0
    return ok


def soft_update_arrays(double[::1] target, const double[::1] source, double tau):
    cdef Py_ssize_t i
    with nogil:
        for i in range(target.shape[0]):
            target[i] = tau * source[i] + (1.0 - tau) * target[i]


cdef void _gemm_q_pt(const double[:, ::1] q, const double[:, ::1] p,
                     double[:, ::1] g) noexcept nogil:
    # g(B,N) = q(B,d) @ p(N,d)^T, overwriting g
    cdef int b = q.shape[0], d = q.shape[1], n = p.shape[0]
    cdef double one = 1.0, zero = 0.0
    cdef char tt = b'T', tn = b'N'
    dgemm(&tt, &tn, &n, &b, &d, &one, <double*><void*>&p[0, 0], &d,
          <double*><void*>&q[0, 0], &d, &zero, &g[0, 0], &n)


DEF KNN_EPS = 2.220446049250313e-16  # IEEE double machine epsilon


def knn_topk(const double[:, ::1] points, const double[:, ::1] queries, int k):
    """Exact top-k by squared Euclidean distance; ties resolved to the
    lower point index. Returns (idx (B,k) int64, d2 (B,k) float64).

    A gemm computes scores pn - 2 q.p (|q|^2 dropped: constant per query).
    Scores rank candidates only; every record whose score lands within a
    rounding-error margin of the k-th best is re-ranked by the exact
    sum-of-squared-differences, so the output matches a sequential
    exhaustive scan bitwise, including distance ties between records.
    """
    cdef Py_ssize_t n = points.shape[0], d = points.shape[1], b = queries.shape[0]
    if k < 1 or k > n:
        raise ValueError(f"k={k} out of range for {n} points")
    idx_arr = np.empty((b, k), dtype=np.int64)
    d2_arr = np.empty((b, k), dtype=np.float64)
    cdef long[:, ::1] idx = idx_arr
    cdef double[:, ::1] d2 = d2_arr
    cdef Py_ssize_t chunk = 256
    if chunk > b:
        chunk = b if b > 0 else 1
    g_arr = np.empty((chunk, n), dtype=np.float64)
    pn_arr = np.empty(n, dtype=np.float64)
    sc_arr = np.empty(n, dtype=np.float64)
    cdef double[:, ::1] g = g_arr
    cdef double[::1] pn = pn_arr
    cdef double[::1] sc = sc_arr
    cdef Py_ssize_t start, m, i, j, e, pos, row
    cdef double s, qn, dist, diff, worst, kth, margin, maxpn
    with nogil:
        maxpn = 0.0
        for e in range(n):
            s = 0.0
            for j in range(d):
                s += points[e, j] * points[e, j]
            pn[e] = s
            if s > maxpn:
                maxpn = s
        start = 0
        while start < b:
            m = b - start
            if m > chunk:
                m = chunk
            _gemm_q_pt(queries[start:start + m], points, g[:m])
            for row in range(m):
                i = start + row
                qn = 0.0
                for j in range(d):
                    qn += queries[i, j] * queries[i, j]
                # pass 1: k smallest scores (any tie order works here)
                for j in range(k):
                    d2[i, j] = INFINITY
                worst = INFINITY
                for e in range(n):
                    s = pn[e] - 2.0 * g[row, e]
                    sc[e] = s
                    if s >= worst:
                        continue
                    pos = k - 1
                    while pos > 0 and d2[i, pos - 1] > s:
                        d2[i, pos] = d2[i, pos - 1]
                        pos -= 1
                    d2[i, pos] = s
                    worst = d2[i, k - 1]
                kth = worst
                # |score - (exact - |q|^2)| per record is bounded by a few
                # ulps of the term magnitudes; 8(d+4)eps(maxpn+qn+1) covers
                # both the dot-product and the norm accumulation error, so
                # exact top-k membership implies score <= kth + 2*margin
                margin = 8.0 * (d + 4) * KNN_EPS * (maxpn + qn + 1.0)
                # pass 2: exact insertion over the candidate band, breaking
                # distance ties toward the lower index via strict-less scan
                for j in range(k):
                    d2[i, j] = INFINITY
                    idx[i, j] = -1
                worst = INFINITY
                kth = kth + 2.0 * margin
                for e in range(n):
                    if sc[e] > kth:
                        continue
                    dist = 0.0
                    for j in range(d):
                        diff = queries[i, j] - points[e, j]
                        dist += diff * diff
                    if dist >= worst:
                        continue
                    pos = k - 1
                    while pos > 0 and d2[i, pos - 1] > dist:
                        d2[i, pos] = d2[i, pos - 1]
                        idx[i, pos] = idx[i, pos - 1]
                        pos -= 1
                    d2[i, pos] = dist
                    idx[i, pos] = e
                    worst = d2[i, k - 1]
            start = start + m
    return idx_arr, d2_arr
