"""Numpy implementation of the forward-pass kernels.

All arrays are 1-d: state/expert indices are int64, log weights float64.
Grouping results are returned in order of first occurrence of each
destination index among the gathered entries.
"""

import numpy as np

NAME = "python"
NEG_INF = -np.inf


def logsumexp(v):
    if v.size == 0:
        return NEG_INF
    m = v.max()
    if not np.isfinite(m):
        return float(m)
    return float(m + np.log(np.exp(v - m).sum()))


def normalize(lw):
    """Return ``(lw - lse(lw), lse(lw))``."""
    z = logsumexp(lw)
    with np.errstate(invalid="ignore"):
        return lw - z, z


def loss_update(lw, le):
    """``normalize(lw + le)``."""
    return normalize(lw + le)


def gather(act, start, length):
    """Entry positions of the CSR rows of ``act`` plus row offsets."""
    lens = length[act]
    offsets = np.zeros(act.size + 1, dtype=np.int64)
    np.cumsum(lens, out=offsets[1:])
    m = int(offsets[-1])
    ent = np.repeat(start[act] - offsets[:-1], lens) + np.arange(m, dtype=np.int64)
    return ent, offsets


def segment_lse(values, offsets):
    """Log-sum-exp of ``values`` over each run ``offsets[i]:offsets[i+1]``."""
    n = offsets.size - 1
    lens = np.diff(offsets)
    if n == 0:
        return np.empty(0)
    if np.all(lens == 1):
        return values.copy()
    seg = np.repeat(np.arange(n), lens)
    mx = np.full(n, NEG_INF)
    np.maximum.at(mx, seg, values)
    acc = np.bincount(seg, weights=np.exp(values - mx[seg]), minlength=n)
    return mx + np.log(acc)


def _scatter_lse(dst, v):
    uniq, first, inv = np.unique(dst, return_index=True, return_inverse=True)
    order = np.argsort(first, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    inv = rank[inv]
    k = uniq.size
    mx = np.full(k, NEG_INF)
    np.maximum.at(mx, inv, v)
    acc = np.bincount(inv, weights=np.exp(v - mx[inv]), minlength=k)
    return uniq[order], mx + np.log(acc)


def propagate(act, lw, start, length, col, logp, scratch):
    """Push log weights through the sparse transition rows of ``act``."""
    del scratch
    ent, offsets = gather(act, start, length)
    v = np.repeat(lw, np.diff(offsets)) + logp[ent]
    return _scatter_lse(col[ent], v)


def mix(act_a, lw_a, ca, act_b, lw_b, cb, scratch):
    """Log-domain ``e^ca * a + e^cb * b`` over the union of supports."""
    del scratch
    dst = np.concatenate((act_a, act_b))
    v = np.concatenate((lw_a + ca, lw_b + cb))
    return _scatter_lse(dst, v)
