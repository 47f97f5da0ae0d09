# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled sampling kernels; must stay bit-identical to icesim._pykernels."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, log, exp, floor, fabs, lgamma
from libc.stdint cimport uint32_t, uint64_t, int64_t

cnp.import_array()

cdef uint64_t M0 = 0xD2511F53
cdef uint64_t M1 = 0xCD9E8D57
cdef uint32_t W0 = 0x9E3779B9
cdef uint32_t W1 = 0xBB67AE85
cdef double TO_UNIT = 2.3283064365386962890625e-10


cdef inline void philox(uint32_t c0, uint32_t c1, uint32_t c2, uint32_t c3,
                        uint32_t k0, uint32_t k1, uint32_t* out) noexcept nogil:
    cdef uint64_t p0, p1
    cdef int r
    for r in range(10):
        p0 = M0 * <uint64_t>c0
        p1 = M1 * <uint64_t>c2
        c0 = <uint32_t>(p1 >> 32) ^ c1 ^ k0
        c1 = <uint32_t>p1
        c2 = <uint32_t>(p0 >> 32) ^ c3 ^ k1
        c3 = <uint32_t>p0
        k0 = k0 + W0
        k1 = k1 + W1
    out[0] = c0
    out[1] = c1
    out[2] = c2
    out[3] = c3


cdef inline double unit(uint32_t w) noexcept nogil:
    return (<double>w + 0.5) * TO_UNIT


cdef int64_t poisson_one(double lam, uint32_t pix, uint32_t frame, uint32_t tag,
                         uint32_t k0, uint32_t k1) noexcept nogil:
    cdef uint32_t w[4]
    cdef int64_t x = 0
    cdef uint32_t step = 0
    cdef double prod, enlam
    cdef double slam, loglam, a, b, invalpha, vr, u, v, us, k
    if lam <= 0:
        return 0
    if lam < 10:
        enlam = exp(-lam)
        prod = 1.0
        while True:
            philox(step, pix, frame, tag, k0, k1, w)
            step += 1
            prod *= unit(w[0])
            if prod > enlam:
                x += 1
            else:
                return x
    slam = sqrt(lam)
    loglam = log(lam)
    b = 0.931 + 2.53 * slam
    a = -0.059 + 0.02483 * b
    invalpha = 1.1239 + 1.1328 / (b - 3.4)
    vr = 0.9277 - 3.6224 / (b - 2)
    while True:
        philox(step, pix, frame, tag, k0, k1, w)
        step += 1
        u = unit(w[0]) - 0.5
        v = unit(w[1])
        us = 0.5 - fabs(u)
        k = floor((2 * a / us + b) * u + lam + 0.43)
        if us >= 0.07 and v <= vr:
            return <int64_t>k
        if k < 0 or (us < 0.013 and v > us):
            continue
        if log(v) + log(invalpha) - log(a / (us * us) + b) <= -lam + k * loglam - lgamma(k + 1):
            return <int64_t>k


def poisson(seed, tag, frame, pixel, lam):
    cdef const cnp.int64_t[::1] pix = np.ascontiguousarray(
        np.asarray(pixel, dtype=np.int64).reshape(-1))
    lam_arr = np.broadcast_to(np.asarray(lam, dtype=np.float64), np.shape(pixel))
    if np.any(lam_arr < 0) or not np.all(np.isfinite(lam_arr)):
        raise ValueError("Poisson mean must be finite and non-negative")
    cdef const double[::1] mu = np.ascontiguousarray(lam_arr.reshape(-1))
    cdef Py_ssize_t n = pix.shape[0], i
    cdef cnp.int64_t[::1] out = np.empty(n, dtype=np.int64)
    cdef uint64_t s = <uint64_t>(int(seed) & 0xFFFFFFFFFFFFFFFF)
    cdef uint32_t k0 = <uint32_t>s, k1 = <uint32_t>(s >> 32)
    cdef uint32_t fr = <uint32_t>(int(frame) & 0xFFFFFFFF), tg = <uint32_t>(int(tag) & 0xFFFFFFFF)
    with nogil:
        for i in range(n):
            out[i] = poisson_one(mu[i], <uint32_t>pix[i], fr, tg, k0, k1)
    return np.asarray(out).reshape(np.shape(pixel))


def pair_counts(seed, tag, frame, pixel, n_pairs, t_classical, t_quantum, eta):
    cdef const cnp.int64_t[::1] pix = np.ascontiguousarray(
        np.asarray(pixel, dtype=np.int64).reshape(-1))
    cdef Py_ssize_t n = pix.shape[0], i
    cdef const cnp.int64_t[::1] m = np.ascontiguousarray(
        np.asarray(n_pairs, dtype=np.int64).reshape(-1))
    cdef const double[::1] tc = np.ascontiguousarray(
        np.broadcast_to(np.asarray(t_classical, dtype=np.float64), (n,)))
    cdef const double[::1] tq = np.ascontiguousarray(
        np.broadcast_to(np.asarray(t_quantum, dtype=np.float64), (n,)))
    cdef double e = eta
    cdef cnp.int64_t[::1] sig = np.zeros(n, dtype=np.int64)
    cdef cnp.int64_t[::1] idl = np.zeros(n, dtype=np.int64)
    cdef cnp.int64_t[::1] coi = np.zeros(n, dtype=np.int64)
    cdef uint64_t s = <uint64_t>(int(seed) & 0xFFFFFFFFFFFFFFFF)
    cdef uint32_t k0 = <uint32_t>s, k1 = <uint32_t>(s >> 32)
    cdef uint32_t fr = <uint32_t>(int(frame) & 0xFFFFFFFF), tg = <uint32_t>(int(tag) & 0xFFFFFFFF)
    cdef uint32_t w[4]
    cdef int64_t j, mi, ns, ni, nc
    cdef uint32_t p
    cdef double ut, tci, tqi
    cdef bint s_det
    with nogil:
        for i in range(n):
            mi = m[i]
            p = <uint32_t>pix[i]
            tci = tc[i]
            tqi = tq[i]
            ns = 0
            ni = 0
            nc = 0
            for j in range(mi):
                philox(<uint32_t>j, p, fr, tg, k0, k1, w)
                ut = unit(w[0])
                s_det = unit(w[1]) < e
                if s_det and ut < tci:
                    ns += 1
                if unit(w[2]) < e:
                    ni += 1
                    if s_det and ut < tqi:
                        nc += 1
            sig[i] = ns
            idl[i] = ni
            coi[i] = nc
    return np.asarray(sig), np.asarray(idl), np.asarray(coi)


def uniforms(seed, tag, frame, pixel, index):
    pix_b, idx_b = np.broadcast_arrays(np.asarray(pixel, dtype=np.int64),
                                       np.asarray(index, dtype=np.int64))
    shape = pix_b.shape
    cdef const cnp.int64_t[::1] pix = np.ascontiguousarray(pix_b.reshape(-1))
    cdef const cnp.int64_t[::1] idx = np.ascontiguousarray(idx_b.reshape(-1))
    cdef Py_ssize_t n = pix.shape[0], i
    cdef double[:, ::1] out = np.empty((4, n), dtype=np.float64)
    cdef uint64_t s = <uint64_t>(int(seed) & 0xFFFFFFFFFFFFFFFF)
    cdef uint32_t k0 = <uint32_t>s, k1 = <uint32_t>(s >> 32)
    cdef uint32_t fr = <uint32_t>(int(frame) & 0xFFFFFFFF), tg = <uint32_t>(int(tag) & 0xFFFFFFFF)
    cdef uint32_t w[4]
    with nogil:
        for i in range(n):
            philox(<uint32_t>idx[i], <uint32_t>pix[i], fr, tg, k0, k1, w)
            out[0, i] = unit(w[0])
            out[1, i] = unit(w[1])
            out[2, i] = unit(w[2])
            out[3, i] = unit(w[3])
    res = np.asarray(out)
    return tuple(res[r].reshape(shape) for r in range(4))
