# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled bitset kernels for rule-coverage evaluation.

Coverage of a candidate rule over the subject x resource pair space is the
bitwise AND of the truth bitmaps of its atoms; fitness components are
popcounts of that mask against authorization masks.  These loops dominate
the evolutionary search, so they are fused here without numpy temporaries.
"""

import numpy as np

cimport numpy as cnp
from libc.stdint cimport uint64_t

cnp.import_array()

cdef extern from *:
    """
    #if defined(__GNUC__) || defined(__clang__)
    #define rbm_popcountll(x) __builtin_popcountll(x)
    #else
    static int rbm_popcountll(unsigned long long x) {
        int c = 0;
        while (x) { x &= x - 1; c++; }
        return c;
    }
    #endif
    """
    int rbm_popcountll(uint64_t x) nogil

BACKEND = "cython"


def and_reduce(cnp.uint64_t[:, ::1] mat, cnp.uint64_t[::1] out):
    """AND all rows of ``mat`` into ``out``.  Zero rows -> all-ones."""
    cdef Py_ssize_t nrows = mat.shape[0]
    cdef Py_ssize_t nwords = out.shape[0]
    cdef Py_ssize_t i, j
    cdef uint64_t acc
    if nrows == 0:
        for j in range(nwords):
            out[j] = <uint64_t>0xFFFFFFFFFFFFFFFFULL
        return
    with nogil:
        for j in range(nwords):
            acc = mat[0, j]
            for i in range(1, nrows):
                acc &= mat[i, j]
            out[j] = acc


def popcount(cnp.uint64_t[::1] a):
    cdef Py_ssize_t j
    cdef long total = 0
    with nogil:
        for j in range(a.shape[0]):
            total += rbm_popcountll(a[j])
    return total


def popcount_and(cnp.uint64_t[::1] a, cnp.uint64_t[::1] b):
    cdef Py_ssize_t j
    cdef long total = 0
    with nogil:
        for j in range(a.shape[0]):
            total += rbm_popcountll(a[j] & b[j])
    return total


def popcount_andnot(cnp.uint64_t[::1] a, cnp.uint64_t[::1] b):
    """popcount(a & ~b)."""
    cdef Py_ssize_t j
    cdef long total = 0
    with nogil:
        for j in range(a.shape[0]):
            total += rbm_popcountll(a[j] & ~b[j])
    return total
