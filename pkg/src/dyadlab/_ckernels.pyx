# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled tree sweeps over a flat dyadic pyramid.

Layout shared with ``_pykernels``: node ``m`` of level ``k`` lives at
``(B**k - 1) // (B - 1) + m`` with ``B = 2**n``; cells are in Morton order so
the descendants of a node at every level form a contiguous block.
"""
import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef inline Py_ssize_t _offset(int n, int k) nogil:
    cdef Py_ssize_t b = (<Py_ssize_t>1) << n
    return (((<Py_ssize_t>1) << (n * k)) - 1) // (b - 1)


def pyramid_sums(const double[::1] x, int n, int L):
    cdef Py_ssize_t b = (<Py_ssize_t>1) << n
    cdef Py_ssize_t total = _offset(n, L + 1)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] arr = np.empty(total, dtype=np.float64)
    cdef double[::1] out = arr
    cdef Py_ssize_t ncells = x.shape[0]
    cdef Py_ssize_t off, child_off, m, j, width
    cdef double s
    cdef int k
    with nogil:
        off = _offset(n, L)
        for m in range(ncells):
            out[off + m] = x[m]
        for k in range(L - 1, -1, -1):
            off = _offset(n, k)
            child_off = _offset(n, k + 1)
            width = (<Py_ssize_t>1) << (n * k)
            for m in range(width):
                s = 0.0
                for j in range(b):
                    s += out[child_off + m * b + j]
                out[off + m] = s
    return arr


def broadcast_sum(const double[::1] coef, int n, int L):
    cdef Py_ssize_t ncells = (<Py_ssize_t>1) << (n * L)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] arr = np.empty(ncells, dtype=np.float64)
    cdef double[::1] out = arr
    cdef Py_ssize_t m, off, width
    cdef int k
    with nogil:
        out[0] = coef[0]
        for k in range(1, L + 1):
            off = _offset(n, k)
            width = (<Py_ssize_t>1) << (n * k)
            # descending m reads the parent out[m >> n] before it is overwritten
            for m in range(width - 1, -1, -1):
                out[m] = out[m >> n] + coef[off + m]
    return arr


def suffix_max_integrals(const double[::1] avg, int n, int L):
    cdef Py_ssize_t ncells = (<Py_ssize_t>1) << (n * L)
    cdef Py_ssize_t total = _offset(n, L + 1)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] arr = np.empty(total, dtype=np.float64)
    cdef double[::1] out = arr
    cdef double[::1] running = np.zeros(ncells, dtype=np.float64)
    cdef Py_ssize_t c, m, off, width, block, shift
    cdef double v, s
    cdef int k
    with nogil:
        for k in range(L, -1, -1):
            off = _offset(n, k)
            shift = n * (L - k)
            block = (<Py_ssize_t>1) << shift
            width = (<Py_ssize_t>1) << (n * k)
            for m in range(width):
                v = avg[off + m]
                s = 0.0
                for c in range(m * block, (m + 1) * block):
                    running[c] = v if v > running[c] else running[c]
                    s += running[c]
                out[off + m] = s
    return arr


def chain_max(const double[::1] avg, int n, int L, int k0, Py_ssize_t m0):
    cdef Py_ssize_t span = (<Py_ssize_t>1) << (n * (L - k0))
    cdef cnp.ndarray[cnp.float64_t, ndim=1] arr = np.zeros(span, dtype=np.float64)
    cdef double[::1] out = arr
    cdef Py_ssize_t t, m, off, block, first, count
    cdef double v
    cdef int k
    with nogil:
        for k in range(k0, L + 1):
            off = _offset(n, k)
            block = (<Py_ssize_t>1) << (n * (L - k))
            count = span // block
            first = m0 * count
            for m in range(count):
                v = avg[off + first + m]
                for t in range(m * block, (m + 1) * block):
                    out[t] = v if v > out[t] else out[t]
    return arr
