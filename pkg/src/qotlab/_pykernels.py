"""Pure numpy implementations of the hot kernels.

Every function here has a compiled twin in ``_ckernels.pyx`` with the same
signature and results; ``qotlab.kernels`` picks one at import time.
"""
from __future__ import annotations

import numpy as np

_M32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
PHILOX_M0 = np.uint64(0xD2E7470EE14C6C93)
PHILOX_M1 = np.uint64(0xCA5A826395121157)
PHILOX_W0 = np.uint64(0x9E3779B97F4A7C15)
PHILOX_W1 = np.uint64(0xBB67AE8584CAA73B)


def _mulhilo(a, b):
    a_lo, a_hi = a & _M32, a >> _S32
    b_lo, b_hi = b & _M32, b >> _S32
    ll = a_lo * b_lo
    lh = a_lo * b_hi
    hl = a_hi * b_lo
    hh = a_hi * b_hi
    mid = (ll >> _S32) + (lh & _M32) + (hl & _M32)
    lo = (ll & _M32) | (mid << _S32)
    hi = hh + (lh >> _S32) + (hl >> _S32) + (mid >> _S32)
    return hi, lo


def philox_blocks(keys, ctr, nblocks):
    """Philox4x64-10 keystream for many keys at once.

    Parameters
    ----------
    keys : uint64 array (L, 2)
    ctr : uint64 array (4,), counter of the first block; block ``k`` adds
        ``k`` to word 0.
    nblocks : int

    Returns
    -------
    uint64 array (L, 4 * nblocks)
    """
    keys = np.ascontiguousarray(keys, dtype=np.uint64)
    ctr = np.asarray(ctr, dtype=np.uint64)
    L = keys.shape[0]
    out = np.empty((L, 4 * nblocks), dtype=np.uint64)
    with np.errstate(over="ignore"):
        for blk in range(nblocks):
            c0 = np.full(L, ctr[0] + np.uint64(blk), dtype=np.uint64)
            c1 = np.full(L, ctr[1], dtype=np.uint64)
            c2 = np.full(L, ctr[2], dtype=np.uint64)
            c3 = np.full(L, ctr[3], dtype=np.uint64)
            k0 = keys[:, 0].copy()
            k1 = keys[:, 1].copy()
            for r in range(10):
                if r:
                    k0 = k0 + PHILOX_W0
                    k1 = k1 + PHILOX_W1
                hi0, lo0 = _mulhilo(PHILOX_M0, c0)
                hi1, lo1 = _mulhilo(PHILOX_M1, c2)
                c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
            out[:, 4 * blk] = c0
            out[:, 4 * blk + 1] = c1
            out[:, 4 * blk + 2] = c2
            out[:, 4 * blk + 3] = c3
    return out


def _toeplitz_index(n, ell):
    i = np.arange(ell)[:, None]
    j = np.arange(n)[None, :]
    return np.where(j >= i, j - i, n - 1 + i - j)


def toeplitz_hash(seeds, xs, ell):
    """Row-wise Toeplitz hash: ``out[b] = T(seeds[b]) @ xs[b]`` over GF(2).

    ``seeds`` is uint8 (B, n + ell - 1), ``xs`` is uint8 (B, n).
    """
    seeds = np.asarray(seeds, dtype=np.uint8)
    xs = np.asarray(xs, dtype=np.uint8)
    n = xs.shape[1]
    mats = seeds[:, _toeplitz_index(n, ell)]
    return ((mats & xs[:, None, :]).sum(axis=2, dtype=np.int64) & 1).astype(np.uint8)


def toeplitz_table(seeds, xs, ell):
    """Hash every ``x`` under every seed; outputs packed as ints, bit i = output bit i.

    Returns int64 array (S, X).
    """
    seeds = np.asarray(seeds, dtype=np.uint8)
    xs = np.asarray(xs, dtype=np.uint8)
    n = xs.shape[1]
    weights = (np.uint64(1) << np.arange(n, dtype=np.uint64))
    mats = seeds[:, _toeplitz_index(n, ell)].astype(np.uint64)  # (S, ell, n)
    rows = (mats * weights).sum(axis=2, dtype=np.uint64)  # (S, ell)
    xint = (xs.astype(np.uint64) * weights).sum(axis=1, dtype=np.uint64)  # (X,)
    out = np.zeros((seeds.shape[0], xs.shape[0]), dtype=np.int64)
    for i in range(ell):
        par = np.bitwise_count(rows[:, i][:, None] & xint[None, :]) & 1
        out |= par.astype(np.int64) << i
    return out


def bb84_measure(bits, bases, meas_bases, coins):
    """Lazy BB84 readout: the encoded bit on basis match, the coin otherwise."""
    bits = np.asarray(bits, dtype=np.uint8)
    return np.where(np.asarray(bases) == np.asarray(meas_bases), bits,
                    np.asarray(coins, dtype=np.uint8)).astype(np.uint8)


def first_check_failure(x, theta, xhat, thetahat, idx):
    """First position of ``idx`` where bases agree but bits differ, else -1."""
    idx = np.asarray(idx, dtype=np.int64)
    bad = (np.asarray(theta)[idx] == np.asarray(thetahat)[idx]) & (
        np.asarray(x)[idx] != np.asarray(xhat)[idx])
    hits = np.flatnonzero(bad)
    return int(idx[hits[0]]) if hits.size else -1


def apply_1q(psi, u, target, n):
    t = np.asarray(psi, dtype=np.complex128).reshape((2,) * n)
    t = np.tensordot(np.asarray(u, dtype=np.complex128), t, axes=([1], [target]))
    return np.moveaxis(t, 0, target).reshape(-1)


def apply_2q(psi, u, t0, t1, n):
    t = np.asarray(psi, dtype=np.complex128).reshape((2,) * n)
    g = np.asarray(u, dtype=np.complex128).reshape(2, 2, 2, 2)
    t = np.tensordot(g, t, axes=([2, 3], [t0, t1]))
    return np.moveaxis(t, [0, 1], [t0, t1]).reshape(-1)


def pick_rows(arrays, idx):
    idx = np.asarray(idx, dtype=np.int64)
    if np.any((idx < 0) | (idx >= len(arrays))):
        raise IndexError("choice index out of range")
    return np.stack(arrays)[idx, np.arange(idx.size)]
