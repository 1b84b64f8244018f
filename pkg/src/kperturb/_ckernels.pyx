# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled composition loops; same contract and summation order as _pykernels.

Every output entry accumulates its intermediate index in ascending order, as
the fallback does.  ``dense_compose`` uses BLAS ``dgemm`` for the block
products (as numpy's ``@`` does), so the two backends agree to rounding.
"""
import numpy as np
cimport numpy as cnp
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()


def lag_convolve(const double complex[:, :, ::1] a, const double complex[:, :, ::1] b,
                 const double[::1] phase_w, double scale):
    cdef Py_ssize_t P = a.shape[0], A = a.shape[1], F = a.shape[2]
    cdef Py_ssize_t p, L, m, q, f
    cdef double w, ar, ai, br, bi
    out_arr = np.zeros((P, A, F), dtype=np.complex128)
    cdef double complex[:, :, ::1] out = out_arr
    cdef const double *pa
    cdef const double *pb
    cdef double *pc
    if A < 3:
        return out_arr
    with nogil:
        for p in range(P):
            for m in range(1, A - 1):
                q = (p + m) % P
                w = phase_w[q]
                if w == 0.0:
                    continue
                pa = <const double *> &a[p, m, 0]
                for L in range(m + 1, A):
                    pb = <const double *> &b[q, L - m, 0]
                    pc = <double *> &out[p, L, 0]
                    for f in range(F):
                        ar = pa[2 * f]
                        ai = pa[2 * f + 1]
                        br = pb[2 * f]
                        bi = pb[2 * f + 1]
                        pc[2 * f] += w * (ar * br - ai * bi)
                        pc[2 * f + 1] += w * (ar * bi + ai * br)
            for L in range(2, A):
                pc = <double *> &out[p, L, 0]
                for f in range(2 * F):
                    pc[f] = scale * pc[f]
    return out_arr


def dense_compose(const double[:, :, :, ::1] a, const double[:, :, :, ::1] b,
                  const double[::1] weights, double scale):
    cdef Py_ssize_t T = a.shape[0], N = a.shape[1]
    cdef Py_ssize_t i, j, m, x
    cdef int n = <int> N, ld = <int> (T * N), ldc = <int> N
    cdef double w, one = 1.0
    cdef char trans = b'N'
    out_arr = np.zeros((T, N, T, N))
    cdef double[:, :, :, ::1] out = out_arr
    cdef double[:, ::1] acc = np.zeros((N, N))
    with nogil:
        for i in range(T):
            for j in range(i + 2, T):
                for x in range(N):
                    for m in range(N):
                        acc[x, m] = 0.0
                for m in range(i + 1, j):
                    w = weights[m]
                    if w == 0.0:
                        continue
                    # row-major acc += w * A[i,:,m,:] @ B[m,:,j,:]  (column-major: acc^T += w B^T A^T)
                    dgemm(&trans, &trans, &n, &n, &n, &w,
                          <double *> &b[m, 0, j, 0], &ld,
                          <double *> &a[i, 0, m, 0], &ld,
                          &one, &acc[0, 0], &ldc)
                for x in range(N):
                    for m in range(N):
                        out[i, x, j, m] = scale * acc[x, m]
    return out_arr
