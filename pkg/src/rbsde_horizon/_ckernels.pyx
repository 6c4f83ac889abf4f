# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops over the flat node layout (node (n, i) sits at 2**n - 1 + i).

Each node's arithmetic is written in the same order as the numpy fallback in
``_pykernels`` so both produce bitwise identical arrays. Threads only split the
nodes of a level; no reduction crosses nodes, so results do not depend on the
thread count.
"""
import numpy as np
cimport numpy as cnp
from cython.parallel cimport prange

cnp.import_array()

cdef Py_ssize_t PARALLEL_MIN = 4096


def halve(const double[::1] x):
    cdef Py_ssize_t m = x.shape[0] // 2
    out = np.empty(m, dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t i
    for i in range(m):
        o[i] = (x[2 * i] + x[2 * i + 1]) * 0.5
    return out


def halve_rows(const double[:, ::1] a):
    cdef Py_ssize_t m = a.shape[0] // 2
    cdef Py_ssize_t w = a.shape[1]
    out = np.empty((m, w), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef Py_ssize_t i, j
    for i in range(m):
        for j in range(w):
            o[i, j] = (a[2 * i, j] + a[2 * i + 1, j]) * 0.5
    return out


cdef inline void _node(double[::1] Y, const double[::1] drift,
                       const double[::1] gain, const double[::1] obstacle,
                       bint barrier, double two_sqrt_dt,
                       double[::1] dK, double[::1] Z,
                       Py_ssize_t k, Py_ssize_t c) noexcept nogil:
    cdef double e0 = gain[c] + Y[c]
    cdef double e1 = gain[c + 1] + Y[c + 1]
    cdef double cont = drift[k] + (e0 + e1) * 0.5
    cdef double y = cont
    if barrier and obstacle[k] > cont:
        y = obstacle[k]
    Y[k] = y
    dK[k] = y - cont
    Z[k] = (e1 - e0) / two_sqrt_dt


def snell_backward(double[::1] Y, const double[::1] drift, const double[::1] gain,
                   const double[::1] obstacle, bint barrier, int T,
                   double two_sqrt_dt, double[::1] dK, double[::1] Z,
                   int threads=1):
    """In-place Snell induction in Y-space for levels T-1 down to 0.

    Y must hold the terminal values at level T. ``gain`` is the optional
    integrand term added on arrival at a node, ``drift`` the left-point term.
    """
    cdef int n
    cdef Py_ssize_t i, off, width, coff
    for n in range(T - 1, -1, -1):
        width = (<Py_ssize_t>1) << n
        off = width - 1
        coff = 2 * width - 1
        if threads > 1 and width >= PARALLEL_MIN:
            for i in prange(width, nogil=True, num_threads=threads, schedule="static"):
                _node(Y, drift, gain, obstacle, barrier, two_sqrt_dt, dK, Z,
                      off + i, coff + 2 * i)
        else:
            for i in range(width):
                _node(Y, drift, gain, obstacle, barrier, two_sqrt_dt, dK, Z,
                      off + i, coff + 2 * i)
