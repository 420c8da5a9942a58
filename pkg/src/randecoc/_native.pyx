# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: counter-based sign generation and Hamming decoding.

Must agree bit-for-bit with :mod:`randecoc._fallback`.
"""
import numpy as np
cimport numpy as cnp
from libc.stdint cimport int8_t, int64_t, uint64_t

cnp.import_array()

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL


cdef inline uint64_t _mix(uint64_t z) noexcept nogil:
    z ^= z >> 30
    z *= 0xBF58476D1CE4E5B9ULL
    z ^= z >> 27
    z *= 0x94D049BB133111EBULL
    z ^= z >> 31
    return z


cdef inline uint64_t _derive(uint64_t key, uint64_t index) noexcept nogil:
    return _mix(key ^ _mix(index + GOLDEN))


def counter_signs(const uint64_t[::1] seeds, Py_ssize_t n_rows, Py_ssize_t n_cols):
    cdef Py_ssize_t T = seeds.shape[0]
    out = np.empty((T, n_rows, n_cols), dtype=np.int8)
    cdef int8_t[:, :, ::1] o = out
    cdef Py_ssize_t t, i, j
    cdef uint64_t root, row_key
    with nogil:
        for t in range(T):
            root = _mix(seeds[t])
            for i in range(n_rows):
                row_key = _derive(root, <uint64_t>i)
                for j in range(n_cols):
                    if _derive(row_key, <uint64_t>j) >> 63:
                        o[t, i, j] = -1
                    else:
                        o[t, i, j] = 1
    return out


def nearest(const int8_t[:, :, ::1] codes, const int8_t[:, ::1] words):
    cdef Py_ssize_t B = words.shape[0]
    cdef Py_ssize_t N = codes.shape[1]
    cdef Py_ssize_t M = codes.shape[2]
    cdef bint shared = codes.shape[0] == 1
    if not shared and codes.shape[0] != B:
        raise ValueError("codes batch does not match words batch")
    if words.shape[1] != M:
        raise ValueError("codeword length mismatch")
    dist = np.empty(B, dtype=np.int64)
    label = np.empty(B, dtype=np.int64)
    ties = np.empty(B, dtype=np.int64)
    cdef int64_t[::1] dv = dist
    cdef int64_t[::1] lv = label
    cdef int64_t[::1] tv = ties
    cdef Py_ssize_t b, k, j, c
    cdef int64_t d, best, arg, count
    with nogil:
        for b in range(B):
            c = 0 if shared else b
            best = M + 1
            arg = -1
            count = 0
            for k in range(N):
                d = 0
                for j in range(M):
                    if codes[c, k, j] != words[b, j]:
                        d += 1
                if d < best:
                    best = d
                    arg = k
                    count = 1
                elif d == best:
                    count += 1
            dv[b] = best
            lv[b] = arg
            tv[b] = count
    return dist, label, ties


def loo_nearest(const int8_t[:, :, ::1] codes, const int8_t[:, ::1] words):
    cdef Py_ssize_t B = words.shape[0]
    cdef Py_ssize_t N = codes.shape[1]
    cdef Py_ssize_t M = codes.shape[2]
    cdef bint shared = codes.shape[0] == 1
    if not shared and codes.shape[0] != B:
        raise ValueError("codes batch does not match words batch")
    if words.shape[1] != M:
        raise ValueError("codeword length mismatch")
    dist = np.empty((B, M), dtype=np.int64)
    label = np.empty((B, M), dtype=np.int64)
    ties = np.empty((B, M), dtype=np.int64)
    full = np.empty(N, dtype=np.int64)
    cdef int64_t[:, ::1] dv = dist
    cdef int64_t[:, ::1] lv = label
    cdef int64_t[:, ::1] tv = ties
    cdef int64_t[::1] fd = full
    cdef Py_ssize_t b, k, j, c
    cdef int64_t d, best, arg, count
    with nogil:
        for b in range(B):
            c = 0 if shared else b
            for k in range(N):
                d = 0
                for j in range(M):
                    if codes[c, k, j] != words[b, j]:
                        d += 1
                fd[k] = d
            for j in range(M):
                best = M + 1
                arg = -1
                count = 0
                for k in range(N):
                    d = fd[k]
                    if codes[c, k, j] != words[b, j]:
                        d -= 1
                    if d < best:
                        best = d
                        arg = k
                        count = 1
                    elif d == best:
                        count += 1
                dv[b, j] = best
                lv[b, j] = arg
                tv[b, j] = count
    return dist, label, ties
