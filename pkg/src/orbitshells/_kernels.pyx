# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled coupling kernel; see ``_kernels_py`` for the reference version."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def coupled_products(const double[:, ::1] w,
                     const double complex[:, ::1] a1,
                     const double complex[:, ::1] a2,
                     int l3):
    cdef Py_ssize_t n1 = a1.shape[0], n2 = a2.shape[0]
    cdef Py_ssize_t r1 = a1.shape[1], r2 = a2.shape[1]
    cdef int l1 = (n1 - 1) // 2, l2 = (n2 - 1) // 2
    cdef Py_ssize_t nc = 2 * l3 + 1
    # accumulate as [m3, s1, s2] so the innermost loop is contiguous
    buf = np.zeros((nc, r1, r2), dtype=np.complex128)
    cdef double complex[:, :, ::1] k = buf
    cdef Py_ssize_t i1, i2, s1, s2, c
    cdef int m1, m2, m3, lo, hi
    cdef double wv
    cdef double complex t
    for i1 in range(n1):
        m1 = <int>i1 - l1
        lo = -l2
        if -l3 - m1 > lo:
            lo = -l3 - m1
        hi = l2
        if l3 - m1 < hi:
            hi = l3 - m1
        for m2 in range(lo, hi + 1):
            i2 = m2 + l2
            wv = w[i1, i2]
            if wv == 0.0:
                continue
            m3 = -m1 - m2
            c = m3 + l3
            for s1 in range(r1):
                t = wv * a1[i1, s1]
                for s2 in range(r2):
                    k[c, s1, s2] = k[c, s1, s2] + t * a2[i2, s2]
    return np.ascontiguousarray(buf.transpose(1, 2, 0))


def contract_third(const double complex[:, :, ::1] k,
                   const double complex[:, ::1] a3):
    cdef Py_ssize_t r1 = k.shape[0], r2 = k.shape[1], nc = k.shape[2]
    cdef Py_ssize_t r3 = a3.shape[1]
    out = np.zeros((r1, r2, r3), dtype=np.complex128)
    cdef double complex[:, :, ::1] b = out
    cdef Py_ssize_t s1, s2, s3, c
    cdef double complex acc
    for s1 in range(r1):
        for s2 in range(r2):
            for s3 in range(r3):
                acc = 0
                for c in range(nc):
                    acc = acc + k[s1, s2, c] * a3[c, s3]
                b[s1, s2, s3] = acc
    return out
