# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: dense-net forward/backward and the local SGD loop.

Drop-in replacement for uavfed._purecore (same contract, same parameter
layout); see that module's docstring. Hidden layers tanh, linear output.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, tanh

NAME = "fast"

DEF MAX_LAYERS = 16


cdef void _forward(const double* params, const cnp.int64_t* sizes, int n_layers,
                   const double* x, double* acts) noexcept nogil:
    cdef Py_ssize_t off = 0, aoff = 0
    cdef int l, i, j, nin, nout
    cdef const double* inp = x
    cdef double s
    for l in range(n_layers):
        nin = <int> sizes[l]
        nout = <int> sizes[l + 1]
        for i in range(nout):
            s = params[off + nout * nin + i]
            for j in range(nin):
                s += params[off + i * nin + j] * inp[j]
            if l < n_layers - 1:
                s = tanh(s)
            acts[aoff + i] = s
        inp = acts + aoff
        off += nout * (nin + 1)
        aoff += nout


cdef void _backward(const double* params, const cnp.int64_t* sizes, int n_layers,
                    const double* x, const double* acts, const double* dout,
                    double* grad, double scale, double* delta, double* delta_prev) noexcept nogil:
    cdef Py_ssize_t offs[MAX_LAYERS]
    cdef Py_ssize_t aoffs[MAX_LAYERS]
    cdef Py_ssize_t off = 0, aoff = 0
    cdef int l, i, j, nin, nout
    cdef const double* a_in
    cdef double d, a
    for l in range(n_layers):
        offs[l] = off
        aoffs[l] = aoff
        off += sizes[l + 1] * (sizes[l] + 1)
        aoff += sizes[l + 1]
    nout = <int> sizes[n_layers]
    for i in range(nout):
        delta[i] = dout[i]
    for l in range(n_layers - 1, -1, -1):
        nin = <int> sizes[l]
        nout = <int> sizes[l + 1]
        a_in = x if l == 0 else acts + aoffs[l - 1]
        for i in range(nout):
            d = scale * delta[i]
            for j in range(nin):
                grad[offs[l] + i * nin + j] += d * a_in[j]
            grad[offs[l] + nout * nin + i] += d
        if l > 0:
            for j in range(nin):
                d = 0.0
                for i in range(nout):
                    d += params[offs[l] + i * nin + j] * delta[i]
                a = acts[aoffs[l - 1] + j]
                delta_prev[j] = d * (1.0 - a * a)
            for j in range(nin):
                delta[j] = delta_prev[j]


def dense_forward(double[::1] params, cnp.int64_t[::1] sizes, double[::1] x,
                  double[::1] acts):
    cdef int n_layers = sizes.shape[0] - 1
    _forward(&params[0], &sizes[0], n_layers, &x[0], &acts[0])


def dense_backward(double[::1] params, cnp.int64_t[::1] sizes, double[::1] x,
                   double[::1] acts, double[::1] dout, double[::1] grad,
                   double scale=1.0):
    cdef int n_layers = sizes.shape[0] - 1
    if n_layers >= MAX_LAYERS:
        raise ValueError("too many layers for the compiled kernel")
    cdef cnp.int64_t width = max(sizes)
    buf = np.empty(2 * width, dtype=np.float64)
    cdef double[::1] work = buf
    _backward(&params[0], &sizes[0], n_layers, &x[0], &acts[0], &dout[0],
              &grad[0], scale, &work[0], &work[width])


def sgd_dense_softmax(double[::1] params, cnp.int64_t[::1] sizes,
                      double[:, ::1] features, cnp.int64_t[::1] labels,
                      cnp.int64_t[::1] order, double eta):
    cdef int n_layers = sizes.shape[0] - 1
    if n_layers >= MAX_LAYERS:
        raise ValueError("too many layers for the compiled kernel")
    cdef int nout = <int> sizes[n_layers]
    cdef cnp.int64_t width = max(sizes)
    cdef Py_ssize_t n_params = params.shape[0]
    cdef Py_ssize_t n_acts = 0
    cdef int l
    for l in range(n_layers):
        n_acts += sizes[l + 1]
    acts_buf = np.empty(n_acts, dtype=np.float64)
    grad_buf = np.empty(n_params, dtype=np.float64)
    work_buf = np.empty(2 * width, dtype=np.float64)
    dout_buf = np.empty(nout, dtype=np.float64)
    cdef double[::1] acts = acts_buf
    cdef double[::1] grad = grad_buf
    cdef double[::1] work = work_buf
    cdef double[::1] dout = dout_buf
    cdef Py_ssize_t t, i, k
    cdef double m, z
    with nogil:
        for t in range(order.shape[0]):
            k = order[t]
            _forward(&params[0], &sizes[0], n_layers, &features[k, 0], &acts[0])
            m = acts[n_acts - nout]
            for i in range(1, nout):
                if acts[n_acts - nout + i] > m:
                    m = acts[n_acts - nout + i]
            z = 0.0
            for i in range(nout):
                dout[i] = exp(acts[n_acts - nout + i] - m)
                z += dout[i]
            for i in range(nout):
                dout[i] /= z
            dout[labels[k]] -= 1.0
            for i in range(n_params):
                grad[i] = 0.0
            _backward(&params[0], &sizes[0], n_layers, &features[k, 0], &acts[0],
                      &dout[0], &grad[0], 1.0, &work[0], &work[width])
            for i in range(n_params):
                params[i] -= eta * grad[i]
    return bool(np.isfinite(np.asarray(params)).all())
