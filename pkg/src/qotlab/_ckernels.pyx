# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels; see ``_pykernels`` for the reference semantics."""
import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint64_t, uint8_t, int64_t
from libc.string cimport memcpy
from cpython.mem cimport PyMem_Malloc, PyMem_Free

cnp.import_array()

cdef extern from *:
    """
    static inline void qot_mulhilo(unsigned long long a, unsigned long long b,
                                   unsigned long long *hi, unsigned long long *lo) {
        unsigned __int128 p = (unsigned __int128)a * b;
        *hi = (unsigned long long)(p >> 64);
        *lo = (unsigned long long)p;
    }
    """
    void qot_mulhilo(unsigned long long a, unsigned long long b,
                     unsigned long long *hi, unsigned long long *lo) nogil
    int __builtin_popcountll(unsigned long long) nogil

cdef unsigned long long M0 = 0xD2E7470EE14C6C93ULL
cdef unsigned long long M1 = 0xCA5A826395121157ULL
cdef unsigned long long W0 = 0x9E3779B97F4A7C15ULL
cdef unsigned long long W1 = 0xBB67AE8584CAA73BULL


def philox_blocks(keys, ctr, Py_ssize_t nblocks):
    cdef const cnp.uint64_t[:, ::1] k = np.ascontiguousarray(keys, dtype=np.uint64)
    cdef const cnp.uint64_t[::1] c = np.ascontiguousarray(ctr, dtype=np.uint64)
    cdef Py_ssize_t L = k.shape[0]
    out_arr = np.empty((L, 4 * nblocks), dtype=np.uint64)
    cdef cnp.uint64_t[:, ::1] out = out_arr
    cdef Py_ssize_t i, blk
    cdef int r
    cdef unsigned long long c0, c1, c2, c3, k0, k1, hi0, lo0, hi1, lo1
    with nogil:
        for i in range(L):
            for blk in range(nblocks):
                c0 = c[0] + <unsigned long long>blk
                c1 = c[1]
                c2 = c[2]
                c3 = c[3]
                k0 = k[i, 0]
                k1 = k[i, 1]
                for r in range(10):
                    if r:
                        k0 += W0
                        k1 += W1
                    qot_mulhilo(M0, c0, &hi0, &lo0)
                    qot_mulhilo(M1, c2, &hi1, &lo1)
                    c0 = hi1 ^ c1 ^ k0
                    c1 = lo1
                    c2 = hi0 ^ c3 ^ k1
                    c3 = lo0
                out[i, 4 * blk] = c0
                out[i, 4 * blk + 1] = c1
                out[i, 4 * blk + 2] = c2
                out[i, 4 * blk + 3] = c3
    return out_arr


def toeplitz_hash(seeds, xs, Py_ssize_t ell):
    cdef const cnp.uint8_t[:, ::1] s = np.ascontiguousarray(seeds, dtype=np.uint8)
    cdef const cnp.uint8_t[:, ::1] x = np.ascontiguousarray(xs, dtype=np.uint8)
    cdef Py_ssize_t B = x.shape[0], n = x.shape[1]
    out_arr = np.zeros((B, ell), dtype=np.uint8)
    cdef cnp.uint8_t[:, ::1] out = out_arr
    cdef Py_ssize_t b, i, j
    cdef uint8_t acc
    with nogil:
        for b in range(B):
            for i in range(ell):
                acc = 0
                for j in range(n):
                    if x[b, j]:
                        if j >= i:
                            acc ^= s[b, j - i]
                        else:
                            acc ^= s[b, n - 1 + i - j]
                out[b, i] = acc & 1
    return out_arr


def toeplitz_table(seeds, xs, Py_ssize_t ell):
    cdef const cnp.uint8_t[:, ::1] s = np.ascontiguousarray(seeds, dtype=np.uint8)
    cdef const cnp.uint8_t[:, ::1] x = np.ascontiguousarray(xs, dtype=np.uint8)
    cdef Py_ssize_t S = s.shape[0], X = x.shape[0], n = x.shape[1]
    if n > 63:
        raise ValueError("toeplitz_table supports inputs up to 63 bits")
    rows_arr = np.zeros((S, ell), dtype=np.uint64)
    xint_arr = np.zeros(X, dtype=np.uint64)
    cdef cnp.uint64_t[:, ::1] rows = rows_arr
    cdef cnp.uint64_t[::1] xint = xint_arr
    out_arr = np.zeros((S, X), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] out = out_arr
    cdef Py_ssize_t a, b, i, j
    cdef uint8_t bit
    cdef int64_t acc
    with nogil:
        for a in range(S):
            for i in range(ell):
                for j in range(n):
                    bit = s[a, j - i] if j >= i else s[a, n - 1 + i - j]
                    if bit & 1:
                        rows[a, i] |= (<uint64_t>1) << j
        for b in range(X):
            for j in range(n):
                if x[b, j] & 1:
                    xint[b] |= (<uint64_t>1) << j
        for a in range(S):
            for b in range(X):
                acc = 0
                for i in range(ell):
                    acc |= (<int64_t>(__builtin_popcountll(rows[a, i] & xint[b]) & 1)) << i
                out[a, b] = acc
    return out_arr


def bb84_measure(bits, bases, meas_bases, coins):
    cdef const cnp.uint8_t[::1] bt = np.ascontiguousarray(bits, dtype=np.uint8).reshape(-1)
    cdef const cnp.uint8_t[::1] bs = np.ascontiguousarray(bases, dtype=np.uint8).reshape(-1)
    cdef const cnp.uint8_t[::1] mb = np.ascontiguousarray(meas_bases, dtype=np.uint8).reshape(-1)
    cdef const cnp.uint8_t[::1] cn = np.ascontiguousarray(coins, dtype=np.uint8).reshape(-1)
    cdef Py_ssize_t N = bt.shape[0], i
    out_arr = np.empty(N, dtype=np.uint8)
    cdef cnp.uint8_t[::1] out = out_arr
    with nogil:
        for i in range(N):
            out[i] = bt[i] if bs[i] == mb[i] else cn[i]
    return out_arr.reshape(np.shape(bits))


def first_check_failure(x, theta, xhat, thetahat, idx):
    cdef const cnp.uint8_t[::1] xv = np.ascontiguousarray(x, dtype=np.uint8).reshape(-1)
    cdef const cnp.uint8_t[::1] tv = np.ascontiguousarray(theta, dtype=np.uint8).reshape(-1)
    cdef const cnp.uint8_t[::1] xh = np.ascontiguousarray(xhat, dtype=np.uint8).reshape(-1)
    cdef const cnp.uint8_t[::1] th = np.ascontiguousarray(thetahat, dtype=np.uint8).reshape(-1)
    cdef const cnp.int64_t[::1] ix = np.ascontiguousarray(idx, dtype=np.int64).reshape(-1)
    cdef Py_ssize_t k, i
    for k in range(ix.shape[0]):
        i = ix[k]
        if tv[i] == th[i] and xv[i] != xh[i]:
            return int(i)
    return -1


def apply_1q(psi, u, Py_ssize_t target, Py_ssize_t n):
    out_arr = np.array(psi, dtype=np.complex128, copy=True).reshape(-1)
    cdef double complex[::1] a = out_arr
    cdef const double complex[:, ::1] g = np.ascontiguousarray(u, dtype=np.complex128)
    cdef Py_ssize_t stride = (<Py_ssize_t>1) << (n - 1 - target)
    cdef Py_ssize_t dim = (<Py_ssize_t>1) << n
    cdef Py_ssize_t base, off, i0, i1
    cdef double complex v0, v1
    with nogil:
        base = 0
        while base < dim:
            for off in range(stride):
                i0 = base + off
                i1 = i0 + stride
                v0 = a[i0]
                v1 = a[i1]
                a[i0] = g[0, 0] * v0 + g[0, 1] * v1
                a[i1] = g[1, 0] * v0 + g[1, 1] * v1
            base += 2 * stride
    return out_arr


def apply_2q(psi, u, Py_ssize_t t0, Py_ssize_t t1, Py_ssize_t n):
    src_arr = np.ascontiguousarray(psi, dtype=np.complex128).reshape(-1)
    out_arr = src_arr.copy()
    cdef double complex[::1] a = out_arr
    cdef const double complex[:, ::1] g = np.ascontiguousarray(u, dtype=np.complex128)
    cdef Py_ssize_t s0 = (<Py_ssize_t>1) << (n - 1 - t0)
    cdef Py_ssize_t s1 = (<Py_ssize_t>1) << (n - 1 - t1)
    cdef Py_ssize_t dim = (<Py_ssize_t>1) << n
    cdef Py_ssize_t i, r, c
    cdef Py_ssize_t idx[4]
    cdef double complex v[4]
    cdef double complex acc
    with nogil:
        for i in range(dim):
            if (i & s0) or (i & s1):
                continue
            idx[0] = i
            idx[1] = i | s1
            idx[2] = i | s0
            idx[3] = i | s0 | s1
            for r in range(4):
                v[r] = a[idx[r]]
            for r in range(4):
                acc = 0
                for c in range(4):
                    acc = acc + g[r, c] * v[c]
                a[idx[r]] = acc
    return out_arr


def _rows_dense(a):
    """True when each row of ``a`` is one contiguous run of bytes (rows may be strided)."""
    if a.ndim <= 1:
        return True
    return a[0:1].flags.c_contiguous or a.shape[0] == 0


def pick_rows(arrays, idx):
    """Row j of ``arrays[idx[j]]``; all arrays share shape and dtype."""
    cdef const cnp.int64_t[::1] ix = np.ascontiguousarray(idx, dtype=np.int64)
    cdef Py_ssize_t S = len(arrays), L = ix.shape[0], j, k
    srcs = [a if _rows_dense(a) else np.ascontiguousarray(a) for a in arrays]
    first = srcs[0]
    if first.shape[0] != L:
        raise ValueError("row count does not match index length")
    out = np.empty(first.shape, dtype=first.dtype)
    cdef Py_ssize_t width = out.strides[0] if out.ndim > 0 and L > 0 else out.itemsize
    cdef char *dst = <char *> cnp.PyArray_DATA(out)
    cdef char **ptr = <char **> PyMem_Malloc(S * sizeof(char *))
    cdef Py_ssize_t *step = <Py_ssize_t *> PyMem_Malloc(S * sizeof(Py_ssize_t))
    if ptr == NULL or step == NULL:
        PyMem_Free(ptr)
        PyMem_Free(step)
        raise MemoryError()
    try:
        for k in range(S):
            if srcs[k].shape != first.shape or srcs[k].dtype != first.dtype:
                raise ValueError("arrays must share shape and dtype")
            ptr[k] = <char *> cnp.PyArray_DATA(srcs[k])
            step[k] = srcs[k].strides[0] if srcs[k].ndim > 0 else 0
        for j in range(L):
            k = ix[j]
            if k < 0 or k >= S:
                raise IndexError("choice index out of range")
            memcpy(dst + j * width, ptr[k] + j * step[k], width)
    finally:
        PyMem_Free(ptr)
        PyMem_Free(step)
    return out
