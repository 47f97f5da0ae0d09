"""Pure-numpy implementation of the sampling kernels.

Reference backend for :mod:`icesim._ckernels`.  Both backends draw from the
same counter-based Philox4x32-10 stream and must produce identical integers;
``tests/test_kernels.py`` cross-checks them.

A stream position is addressed by ``(index, pixel, frame, tag)`` under a
64-bit key, so any pixel's draws can be regenerated without touching any other
pixel.
"""

import numpy as np
from scipy.special import gammaln

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = 0x9E3779B9
_W1 = 0xBB67AE85
_MASK = np.uint64(0xFFFFFFFF)
_SHIFT = np.uint64(32)
_TO_UNIT = 2.0**-32

# pairs processed per vectorized chunk in pair_counts
_CHUNK = 1 << 20


def _as_u64(x):
    return np.asarray(x, dtype=np.uint64) & _MASK


def philox4x32(c0, c1, c2, c3, k0, k1, rounds=10):
    """Vectorized Philox4x32 block function; returns four uint64 arrays of 32-bit words."""
    x0, x1, x2, x3 = np.broadcast_arrays(_as_u64(c0), _as_u64(c1), _as_u64(c2), _as_u64(c3))
    x0, x1, x2, x3 = (a.copy() for a in (x0, x1, x2, x3))
    key0 = int(k0) & 0xFFFFFFFF
    key1 = int(k1) & 0xFFFFFFFF
    for r in range(rounds):
        if r:
            key0 = (key0 + _W0) & 0xFFFFFFFF
            key1 = (key1 + _W1) & 0xFFFFFFFF
        p0 = _M0 * x0
        p1 = _M1 * x2
        hi0, lo0 = p0 >> _SHIFT, p0 & _MASK
        hi1, lo1 = p1 >> _SHIFT, p1 & _MASK
        x0 = hi1 ^ x1 ^ np.uint64(key0)
        x1 = lo1
        x2 = hi0 ^ x3 ^ np.uint64(key1)
        x3 = lo0
    return x0, x1, x2, x3


def split_key(seed):
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    return seed & 0xFFFFFFFF, seed >> 32


def _unit(word):
    return (word.astype(np.float64) + 0.5) * _TO_UNIT


def uniforms(seed, tag, frame, pixel, index):
    """Four open-interval uniforms per (pixel, index) position."""
    k0, k1 = split_key(seed)
    words = philox4x32(index, pixel, frame, tag, k0, k1)
    return tuple(_unit(w) for w in words)


def poisson(seed, tag, frame, pixel, lam):
    """Poisson variates, one per pixel, each from its own sub-stream.

    Small means use the multiplication method; means >= 10 use Hormann's
    transformed rejection (PTRS).  Attempt ``a`` of a pixel reads block ``a``
    of that pixel's stream, so results do not depend on the batch layout.
    """
    pixel = np.asarray(pixel, dtype=np.int64)
    lam = np.broadcast_to(np.asarray(lam, dtype=np.float64), pixel.shape)
    if np.any(lam < 0) or not np.all(np.isfinite(lam)):
        raise ValueError("Poisson mean must be finite and non-negative")
    out = np.zeros(pixel.shape, dtype=np.int64)
    flat_out = out.reshape(-1)
    flat_pix = pixel.reshape(-1)
    flat_lam = lam.reshape(-1)
    k0, k1 = split_key(seed)

    small = np.flatnonzero((flat_lam > 0) & (flat_lam < 10))
    if small.size:
        enlam = np.exp(-flat_lam[small])
        prod = np.ones(small.size)
        active = np.arange(small.size)
        step = 0
        while active.size:
            w0, _, _, _ = philox4x32(step, flat_pix[small[active]], frame, tag, k0, k1)
            prod[active] *= _unit(w0)
            keep = prod[active] > enlam[active]
            active = active[keep]
            flat_out[small[active]] += 1
            step += 1

    large = np.flatnonzero(flat_lam >= 10)
    if large.size:
        lam_l = flat_lam[large]
        slam = np.sqrt(lam_l)
        loglam = np.log(lam_l)
        b = 0.931 + 2.53 * slam
        a = -0.059 + 0.02483 * b
        invalpha = 1.1239 + 1.1328 / (b - 3.4)
        vr = 0.9277 - 3.6224 / (b - 2)
        pending = np.arange(large.size)
        attempt = 0
        while pending.size:
            w0, w1, _, _ = philox4x32(attempt, flat_pix[large[pending]], frame, tag, k0, k1)
            u = _unit(w0) - 0.5
            v = _unit(w1)
            us = 0.5 - np.abs(u)
            ap, bp = a[pending], b[pending]
            k = np.floor((2 * ap / us + bp) * u + lam_l[pending] + 0.43)
            fast = (us >= 0.07) & (v <= vr[pending])
            reject = (k < 0) | ((us < 0.013) & (v > us))
            slow = ~fast & ~reject
            accept = fast.copy()
            if np.any(slow):
                ks = k[slow]
                lhs = np.log(v[slow]) + np.log(invalpha[pending][slow]) - np.log(
                    ap[slow] / (us[slow] * us[slow]) + bp[slow]
                )
                rhs = -lam_l[pending][slow] + ks * loglam[pending][slow] - gammaln(ks + 1)
                accept[slow] = lhs <= rhs
            flat_out[large[pending[accept]]] = k[accept].astype(np.int64)
            pending = pending[~accept]
            attempt += 1
    return out


def pair_counts(seed, tag, frame, pixel, n_pairs, t_classical, t_quantum, eta):
    """Per-pair thinning of SPDC pairs.

    Pair ``j`` of a pixel reads block ``j``: words 0, 1, 2 are the object
    survival, signal detection and idler detection uniforms.  Returns
    ``(signal, idler, coincidence)`` counts per pixel.
    """
    pixel = np.asarray(pixel, dtype=np.int64).reshape(-1)
    n_pairs = np.asarray(n_pairs, dtype=np.int64).reshape(-1)
    tc = np.broadcast_to(np.asarray(t_classical, dtype=np.float64), pixel.shape).reshape(-1)
    tq = np.broadcast_to(np.asarray(t_quantum, dtype=np.float64), pixel.shape).reshape(-1)
    eta = float(eta)
    k0, k1 = split_key(seed)
    n = pixel.size
    sig = np.zeros(n, dtype=np.int64)
    idl = np.zeros(n, dtype=np.int64)
    coi = np.zeros(n, dtype=np.int64)
    ends = np.cumsum(n_pairs)
    starts = ends - n_pairs
    total = int(ends[-1]) if n else 0
    for lo in range(0, total, _CHUNK):
        hi = min(lo + _CHUNK, total)
        g = np.arange(lo, hi, dtype=np.int64)
        owner = np.searchsorted(ends, g, side="right")
        j = g - starts[owner]
        w0, w1, w2, _ = philox4x32(j, pixel[owner], frame, tag, k0, k1)
        u_t, u_s, u_i = _unit(w0), _unit(w1), _unit(w2)
        s_det = u_s < eta
        i_det = u_i < eta
        s_hit = s_det & (u_t < tc[owner])
        c_hit = s_det & i_det & (u_t < tq[owner])
        sig += np.bincount(owner[s_hit], minlength=n)
        idl += np.bincount(owner[i_det], minlength=n)
        coi += np.bincount(owner[c_hit], minlength=n)
    return sig, idl, coi
