# cython: language_level=3
"""Compiled kernels for the feedforward-net hot loop.

Same contract as aanetsim._mlp_np (the reference semantics). Matrix
products go straight to BLAS dgemm (no per-call numpy dispatch); bias,
activation, loss and update passes are plain C loops. Results agree
with the numpy backend up to floating-point summation order.
"""

import numpy as np

from scipy.linalg.cython_blas cimport dgemm


cdef void _ab(const double[:, ::1] a, const double[:, ::1] b,
              double[:, ::1] out) noexcept nogil:
    """out (n x o) = a (n x m) @ b (m x o), row-major buffers."""
    cdef int n = <int>a.shape[0], m = <int>a.shape[1], o = <int>b.shape[1]
    cdef double one = 1.0, zero = 0.0
    # Fortran view: out^T (o x n) = b^T (o x m) @ a^T (m x n)
    dgemm("N", "N", &o, &n, &m, &one, <double*>&b[0, 0], &o,
          <double*>&a[0, 0], &m, &zero, &out[0, 0], &o)


cdef void _atb(const double[:, ::1] a, const double[:, ::1] b,
               double[:, ::1] out) noexcept nogil:
    """out (m x o) = a^T @ b for a (n x m), b (n x o)."""
    cdef int n = <int>a.shape[0], m = <int>a.shape[1], o = <int>b.shape[1]
    cdef double one = 1.0, zero = 0.0
    # Fortran view: out^T (o x m) = b^T (o x n) @ a (n x m)
    dgemm("N", "T", &o, &m, &n, &one, <double*>&b[0, 0], &o,
          <double*>&a[0, 0], &m, &zero, &out[0, 0], &o)


cdef void _abt(const double[:, ::1] a, const double[:, ::1] b,
               double[:, ::1] out) noexcept nogil:
    """out (n x m) = a @ b^T for a (n x o), b (m x o)."""
    cdef int n = <int>a.shape[0], o = <int>a.shape[1], m = <int>b.shape[0]
    cdef double one = 1.0, zero = 0.0
    # Fortran view: out^T (m x n) = b (m x o) @ a^T (o x n)
    dgemm("T", "N", &m, &n, &o, &one, <double*>&b[0, 0], &o,
          <double*>&a[0, 0], &o, &zero, &out[0, 0], &m)


cdef void _bias_act(double[:, ::1] out, const double[::1] b, bint relu) noexcept nogil:
    cdef Py_ssize_t i, j
    for i in range(out.shape[0]):
        for j in range(out.shape[1]):
            out[i, j] += b[j]
            if relu and out[i, j] < 0.0:
                out[i, j] = 0.0


def forward_batch(list weights, list biases, x):
    cdef Py_ssize_t n_layers = len(weights)
    cdef Py_ssize_t i
    cdef const double[:, ::1] h = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[:, ::1] w, out
    out_arr = None
    for i in range(n_layers):
        w = weights[i]
        out_arr = np.empty((h.shape[0], w.shape[1]))
        out = out_arr
        _ab(h, w, out)
        _bias_act(out, biases[i], i < n_layers - 1)
        h = out_arr
    return out_arr if out_arr is not None else np.asarray(h)


def sgd_step(list weights, list biases, x, action_idx, targets, double lr):
    cdef Py_ssize_t n_layers = len(weights)
    cdef list acts = [np.ascontiguousarray(x, dtype=np.float64)]
    cdef const double[:, ::1] h = acts[0]
    cdef double[:, ::1] w, out
    cdef Py_ssize_t i, j, k, layer
    for i in range(n_layers):
        w = weights[i]
        out_arr = np.empty((h.shape[0], w.shape[1]))
        out = out_arr
        _ab(h, w, out)
        _bias_act(out, biases[i], i < n_layers - 1)
        acts.append(out_arr)
        h = out_arr

    cdef double[:, ::1] final = acts[n_layers]
    cdef Py_ssize_t batch = final.shape[0]
    cdef const double[::1] y = np.ascontiguousarray(targets, dtype=np.float64)
    cdef const long[::1] cols
    if action_idx is None:
        cols = np.zeros(batch, dtype=np.int64)
    else:
        cols = np.ascontiguousarray(action_idx, dtype=np.int64)

    cdef double loss = 0.0, e
    cdef double scale = 2.0 / batch
    delta_arr = np.zeros((batch, final.shape[1]))
    cdef double[:, ::1] delta = delta_arr
    for i in range(batch):
        e = final[i, cols[i]] - y[i]
        loss += e * e
        delta[i, cols[i]] = scale * e
    loss /= batch

    cdef const double[:, ::1] h_prev
    cdef double[:, ::1] new_delta, grad_w
    cdef double[::1] b, grad_b
    for layer in range(n_layers - 1, -1, -1):
        w = weights[layer]
        b = biases[layer]
        h_prev = acts[layer]

        grad_w_arr = np.empty((w.shape[0], w.shape[1]))
        grad_w = grad_w_arr
        grad_b = np.zeros(w.shape[1])
        with nogil:
            _atb(h_prev, delta, grad_w)
            for i in range(batch):
                for j in range(w.shape[1]):
                    grad_b[j] += delta[i, j]

        if layer > 0:
            nd_arr = np.empty((batch, w.shape[0]))
            new_delta = nd_arr
            with nogil:
                _abt(delta, w, new_delta)
                for i in range(batch):
                    for k in range(w.shape[0]):
                        if h_prev[i, k] <= 0.0:
                            new_delta[i, k] = 0.0

        with nogil:
            for k in range(w.shape[0]):
                for j in range(w.shape[1]):
                    w[k, j] -= lr * grad_w[k, j]
            for j in range(w.shape[1]):
                b[j] -= lr * grad_b[j]

        if layer > 0:
            delta = nd_arr
    return loss
