# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels.

Must stay bit-compatible at the integer level with ``_pykernels``; the
floating-point results may differ in the last ulp where libm and numpy's
vectorised transcendental functions disagree.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, sqrt, cos, sin
from libc.stdint cimport uint64_t

cnp.import_array()

cdef uint64_t GAMMA = 0x9E3779B97F4A7C15ULL
cdef uint64_t MIX1 = 0xBF58476D1CE4E5B9ULL
cdef uint64_t MIX2 = 0x94D049BB133111EBULL
cdef double TWO_PI = 6.283185307179586
cdef double INV_2_53 = 1.0 / 9007199254740992.0


cdef inline uint64_t fmix(uint64_t z) nogil:
    z = (z ^ (z >> 30)) * MIX1
    z = (z ^ (z >> 27)) * MIX2
    return z ^ (z >> 31)


cdef inline uint64_t path_state(uint64_t seed, uint64_t path) nogil:
    return fmix(fmix(seed) ^ ((path + 1) * GAMMA))


cdef inline double unit(uint64_t w) nogil:
    # (0, 1]: never zero, so log() is finite
    return <double>((w >> 11) + 1) * INV_2_53


def random_words(uint64_t seed, uint64_t path, Py_ssize_t n):
    cdef cnp.ndarray[cnp.uint64_t, ndim=1] out = np.empty(n, dtype=np.uint64)
    cdef uint64_t state = path_state(seed, path)
    cdef Py_ssize_t c
    for c in range(n):
        out[c] = fmix(state + <uint64_t>(c + 1) * GAMMA)
    return out


cdef void fill_normals(uint64_t state, double* z, Py_ssize_t n) nogil:
    cdef Py_ssize_t j, npairs = (n + 1) // 2
    cdef double u1, u2, r, theta
    for j in range(npairs):
        u1 = unit(fmix(state + <uint64_t>(2 * j + 1) * GAMMA))
        u2 = unit(fmix(state + <uint64_t>(2 * j + 2) * GAMMA))
        r = sqrt(-2.0 * log(u1))
        theta = TWO_PI * u2
        z[2 * j] = r * cos(theta)
        if 2 * j + 1 < n:
            z[2 * j + 1] = r * sin(theta)


def standard_normals(uint64_t seed, Py_ssize_t n_paths, Py_ssize_t n_steps):
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] out = np.empty(
        (n_paths, n_steps), dtype=np.float64)
    cdef double* base = <double*> out.data
    cdef Py_ssize_t p
    with nogil:
        for p in range(n_paths):
            fill_normals(path_state(seed, <uint64_t>p), base + p * n_steps, n_steps)
    return out


def gbm_paths(uint64_t seed, Py_ssize_t n_paths, Py_ssize_t n_steps,
              double s0, double drift, double diffusion):
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] out = np.empty(
        (n_paths, n_steps + 1), dtype=np.float64)
    cdef double* row
    cdef double s
    cdef Py_ssize_t p, t
    with nogil:
        for p in range(n_paths):
            row = (<double*> out.data) + p * (n_steps + 1)
            # normals land in row[1:], then get compounded in place
            fill_normals(path_state(seed, <uint64_t>p), row + 1, n_steps)
            s = s0
            row[0] = s
            for t in range(1, n_steps + 1):
                s = s * exp(drift + diffusion * row[t])
                row[t] = s
    return out


def dilated_conv1d_forward(const double[:, ::1] x, const double[::1] h, Py_ssize_t dilation):
    cdef Py_ssize_t B = x.shape[0], T = x.shape[1], k = h.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] out = np.zeros((B, T), dtype=np.float64)
    cdef double[:, ::1] y = out
    cdef Py_ssize_t b, s, i, src
    cdef double acc
    with nogil:
        for b in range(B):
            for s in range(T):
                acc = 0.0
                for i in range(k):
                    src = s - dilation * i
                    if src < 0:
                        break
                    acc = acc + h[i] * x[b, src]
                y[b, s] = acc
    return out


def dilated_conv1d_backward(const double[:, ::1] x, const double[::1] h,
                            Py_ssize_t dilation, const double[:, ::1] gy):
    cdef Py_ssize_t B = x.shape[0], T = x.shape[1], k = h.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] gx_arr = np.zeros((B, T), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] gh_arr = np.zeros(k, dtype=np.float64)
    cdef double[:, ::1] gx = gx_arr
    cdef double[::1] gh = gh_arr
    cdef Py_ssize_t b, s, i, src
    cdef double g
    with nogil:
        for b in range(B):
            for s in range(T):
                g = gy[b, s]
                for i in range(k):
                    src = s - dilation * i
                    if src < 0:
                        break
                    gx[b, src] += h[i] * g
                    gh[i] += g * x[b, src]
    return gx_arr, gh_arr
