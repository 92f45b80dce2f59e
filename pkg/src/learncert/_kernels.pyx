# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled MLP kernels.

Layer weights live in the flat parameter vector as a row-major ``(in, out)``
block followed by ``out`` biases. Row-major ``X @ W`` is issued to BLAS as the
column-major product ``W' X'`` so no copies are made.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport tanh
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()

DEF ACT_NONE = 0
DEF ACT_RELU = 1
DEF ACT_TANH = 2


cdef void _affine(const double[:, ::1] x, const double* w, const double* b,
                  double[:, ::1] out, int act) noexcept nogil:
    cdef int batch = x.shape[0]
    cdef int fan_in = x.shape[1]
    cdef int fan_out = out.shape[1]
    cdef double one = 1.0, zero = 0.0
    cdef char trans = b'N'
    cdef Py_ssize_t i, j
    cdef double v
    dgemm(&trans, &trans, &fan_out, &batch, &fan_in, &one,
          <double*>w, &fan_out, <double*>&x[0, 0], &fan_in,
          &zero, &out[0, 0], &fan_out)
    for i in range(batch):
        for j in range(fan_out):
            v = out[i, j] + b[j]
            if act == ACT_RELU:
                if v < 0.0:
                    v = 0.0
            elif act == ACT_TANH:
                v = tanh(v)
            out[i, j] = v


def mlp_logits(const double[::1] theta, widths, int act, const double[:, ::1] x):
    """Forward pass through every layer; returns a fresh ``(B, K)`` array."""
    cdef Py_ssize_t n_layers = len(widths) - 1
    cdef Py_ssize_t offset = 0
    cdef Py_ssize_t layer
    cdef int fan_in, fan_out
    cdef const double[:, ::1] h = x
    cdef double[:, ::1] out
    for layer in range(n_layers):
        fan_in = widths[layer]
        fan_out = widths[layer + 1]
        out = np.empty((x.shape[0], fan_out), dtype=np.float64)
        _affine(h, &theta[offset], &theta[offset + fan_in * fan_out], out,
                act if layer < n_layers - 1 else ACT_NONE)
        offset += fan_in * fan_out + fan_out
        h = out
    return np.asarray(h)


cdef Py_ssize_t _count_correct(const double[:, ::1] logits, const cnp.int64_t[::1] labels) noexcept nogil:
    cdef Py_ssize_t i, j, best
    cdef Py_ssize_t hits = 0
    cdef double top
    for i in range(logits.shape[0]):
        best = 0
        top = logits[i, 0]
        for j in range(1, logits.shape[1]):
            # strict > keeps the lowest index on ties
            if logits[i, j] > top:
                top = logits[i, j]
                best = j
        if best == labels[i]:
            hits += 1
    return hits


def argmax_rows(const double[:, ::1] logits):
    cdef Py_ssize_t i, j, best
    cdef double top
    cdef cnp.ndarray[cnp.int64_t, ndim=1] result = np.empty(logits.shape[0], dtype=np.int64)
    for i in range(logits.shape[0]):
        best = 0
        top = logits[i, 0]
        for j in range(1, logits.shape[1]):
            if logits[i, j] > top:
                top = logits[i, j]
                best = j
        result[i] = best
    return result


def count_correct(const double[:, ::1] logits, const cnp.int64_t[::1] labels):
    return _count_correct(logits, labels)


def mlp_count_correct(const double[::1] theta, widths, int act,
                      const double[:, ::1] x, const cnp.int64_t[::1] labels):
    """Fused forward + argmax + compare; hidden buffers are reused per layer width."""
    cdef Py_ssize_t n_layers = len(widths) - 1
    cdef Py_ssize_t offset = 0
    cdef Py_ssize_t layer
    cdef int fan_in, fan_out
    cdef const double[:, ::1] h = x
    cdef double[:, ::1] out
    buffers = [np.empty((x.shape[0], w), dtype=np.float64) for w in widths[1:]]
    for layer in range(n_layers):
        fan_in = widths[layer]
        fan_out = widths[layer + 1]
        out = buffers[layer]
        _affine(h, &theta[offset], &theta[offset + fan_in * fan_out], out,
                act if layer < n_layers - 1 else ACT_NONE)
        offset += fan_in * fan_out + fan_out
        h = out
    return _count_correct(h, labels)


def sign_clip_step(double[::1] delta, const double[::1] grad, double step, double bound):
    """In place: ``delta <- clip(delta - step * sign(grad), -bound, bound)``."""
    cdef Py_ssize_t i
    cdef double g, v
    for i in range(delta.shape[0]):
        g = grad[i]
        v = delta[i]
        if g > 0.0:
            v -= step
        elif g < 0.0:
            v += step
        if v > bound:
            v = bound
        elif v < -bound:
            v = -bound
        delta[i] = v
